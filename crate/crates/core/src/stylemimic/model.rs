//! The sequence-to-sequence mimic: transformer encoder-decoder over BPE
//! tokens with greedy decoding.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::neural::{
    sinusoidal_positions, AttnSegment, CrossSource, CrossWiring, DecoderBlock, EncoderBlock,
    ParamStore, Tape, Tensor, Var,
};
use crate::rng;
use crate::textproc::BpeVocab;

use super::{MimicConfig, MimicError};

pub const MIMIC_SIDECAR_KIND: &str = "mimic";

const TOKEN_EMBED: &str = "embed.token";

/// A style mimic: either a trained model or the identity control (returns
/// its input unchanged; the no-signal baseline).
pub enum Mimic {
    Trained(MimicModel),
    Identity,
}

impl Mimic {
    pub fn generate(&self, text: &str) -> String {
        match self {
            Mimic::Identity => text.to_string(),
            Mimic::Trained(model) => model.generate(text),
        }
    }
}

/// Trained encoder-decoder with its BPE vocabulary.
pub struct MimicModel {
    pub config: MimicConfig,
    pub bpe: BpeVocab,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
    pub store: ParamStore<f32>,
}

const OUTPUT_BIAS: &str = "output.bias";

impl MimicModel {
    pub fn init(config: &MimicConfig, bpe: BpeVocab) -> Result<MimicModel, MimicError> {
        let mut config = config.clone();
        config.token_vocab = bpe.size;
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = rng::seeded(config.seed);
        let d = config.d_model;

        store.insert(
            TOKEN_EMBED,
            crate::neural::kaiming_uniform(&[config.token_vocab, d], d, 1.0, &mut rng)
                .expect("d_model > 0"),
        );
        let encoder = (0..config.enc_layers)
            .map(|i| {
                EncoderBlock::init(
                    &format!("enc.{i}"),
                    d,
                    config.d_ff,
                    config.heads,
                    config.activation,
                    config.dropout,
                    &mut store,
                    &mut rng,
                )
            })
            .collect();
        let decoder = (0..config.dec_layers)
            .map(|i| {
                DecoderBlock::init(
                    &format!("dec.{i}"),
                    d,
                    config.d_ff,
                    config.heads,
                    config.activation,
                    config.dropout,
                    &mut store,
                    &mut rng,
                )
            })
            .collect();
        store.insert(OUTPUT_BIAS, Tensor::zeros(&[1, config.token_vocab]));

        Ok(MimicModel {
            config,
            bpe,
            encoder,
            decoder,
            store,
        })
    }

    /// Source token ids: BPE encoding truncated to max_len-1 plus EOS.
    pub fn source_ids(&self, text: &str) -> Vec<u32> {
        let mut ids = self.bpe.encode(text);
        ids.truncate(self.config.max_len - 1);
        ids.push(BpeVocab::EOS);
        ids
    }

    /// Target token ids for teacher forcing (same truncation rule).
    pub fn target_ids(&self, text: &str) -> Vec<u32> {
        self.source_ids(text)
    }

    fn embed_with_positions(&self, tape: &mut Tape<f32>, ids: &[u32]) -> Var {
        let d = self.config.d_model;
        let table = tape.param(&self.store, TOKEN_EMBED);
        let embedded = tape.select_rows(table, ids.iter().map(|&i| i as usize).collect());
        let scaled = tape.mul_scalar(embedded, (d as f64).sqrt());
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = tape.constant(sinusoidal_positions(&positions, d));
        let with_pos = tape.add(scaled, pos);
        tape.dropout(with_pos, self.config.dropout)
    }

    /// Encoder memory over source ids.
    pub fn encode(&self, tape: &mut Tape<f32>, src_ids: &[u32]) -> Var {
        let mut x = self.embed_with_positions(tape, src_ids);
        let segments = AttnSegment::full(src_ids.len(), src_ids.len());
        for block in &self.encoder {
            x = block.forward(tape, &self.store, x, &segments, None);
        }
        x
    }

    /// Decoder logits over `tgt_in` rows, attending causally to itself and
    /// fully to the encoder memory.
    pub fn decode_logits(&self, tape: &mut Tape<f32>, memory: Var, tgt_in: &[u32]) -> Var {
        let mut stream = self.embed_with_positions(tape, tgt_in);
        let causal = AttnSegment::causal(tgt_in.len());
        let memory_rows = tape.value(memory).rows();
        let cross_segments = AttnSegment::full(tgt_in.len(), memory_rows);
        for block in &self.decoder {
            stream = block.forward(
                tape,
                &self.store,
                stream,
                &causal,
                CrossWiring {
                    q: CrossSource::Stream,
                    kv: CrossSource::External(memory),
                    segments: cross_segments.clone(),
                    kv_valid: None,
                },
            );
        }
        // tied readout: logits = stream . embedding^T + bias
        let table = tape.param(&self.store, TOKEN_EMBED);
        let scores = tape.matmul_nt(stream, table);
        let bias = tape.param(&self.store, OUTPUT_BIAS);
        tape.add_bias(scores, bias)
    }

    /// Teacher-forced mean cross-entropy for one (source, target) pair.
    pub fn pair_loss(&self, tape: &mut Tape<f32>, src: &str, tgt: &str) -> Var {
        let src_ids = self.source_ids(src);
        let tgt_ids = self.target_ids(tgt);
        let mut tgt_in = vec![BpeVocab::BOS];
        tgt_in.extend(&tgt_ids[..tgt_ids.len() - 1]);
        let memory = self.encode(tape, &src_ids);
        let logits = self.decode_logits(tape, memory, &tgt_in);
        let targets: Vec<usize> = tgt_ids.iter().map(|&i| i as usize).collect();
        tape.cross_entropy_rows(logits, &targets, None)
    }

    /// Greedy decode: argmax next token until EOS or the length cap.
    /// Deterministic (dropout off); the cap guarantees termination.
    pub fn generate(&self, text: &str) -> String {
        let ids = self.generate_ids(text);
        self.bpe.decode(&ids).expect("decoder emits valid ids")
    }

    /// Token ids of the greedy decode (EOS excluded); at most `max_len`.
    pub fn generate_ids(&self, text: &str) -> Vec<u32> {
        let src_ids = self.source_ids(text);
        let mut tape = Tape::new();
        let memory_var = self.encode(&mut tape, &src_ids);
        let memory = tape.value(memory_var).clone();

        let mut prefix = vec![BpeVocab::BOS];
        let mut produced: Vec<u32> = Vec::new();
        while produced.len() < self.config.max_len {
            let mut step = Tape::new();
            let memory_node = step.constant(memory.clone());
            let logits = self.decode_logits(&mut step, memory_node, &prefix);
            let row = step.value(logits).row(prefix.len() - 1).to_vec();
            let next = argmax(&row) as u32;
            if next == BpeVocab::EOS {
                break;
            }
            produced.push(next);
            prefix.push(next);
        }
        produced
    }

    // -- persistence ----------------------------------------------------

    pub fn save(&self, dir: &Path) -> Result<(), MimicError> {
        std::fs::create_dir_all(dir).map_err(|source| MimicError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        crate::neural::save_tensors(&dir.join("mimic.mgcd"), &self.store.snapshot())?;
        let sidecar = Sidecar {
            kind: MIMIC_SIDECAR_KIND.to_string(),
            config: self.config.clone(),
            bpe_hash: self.bpe.content_hash(),
        };
        let path = dir.join("mimic.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )
        .map_err(|source| MimicError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(dir: &Path, bpe: BpeVocab) -> Result<MimicModel, MimicError> {
        let path = dir.join("mimic.json");
        let raw = std::fs::read_to_string(&path).map_err(|source| MimicError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let sidecar: Sidecar = serde_json::from_str(&raw).map_err(|e| MimicError::Sidecar {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if sidecar.kind != MIMIC_SIDECAR_KIND {
            return Err(MimicError::Sidecar {
                path: path.display().to_string(),
                message: format!("kind {:?} is not {MIMIC_SIDECAR_KIND:?}", sidecar.kind),
            });
        }
        if sidecar.bpe_hash != bpe.content_hash() {
            return Err(MimicError::VocabMismatch {
                expected: sidecar.bpe_hash,
                found: bpe.content_hash(),
            });
        }
        let tensors = crate::neural::load_tensors::<f32>(&dir.join("mimic.mgcd"))?;
        let mut model = MimicModel::init(&sidecar.config, bpe)?;
        model.store = ParamStore::from_values(tensors);
        Ok(model)
    }

    /// Mean encoder hidden state for a text (the default cosine embedder).
    pub fn encoder_mean(&self, text: &str) -> Vec<f64> {
        let src_ids = self.source_ids(text);
        let mut tape = Tape::new();
        let memory = self.encode(&mut tape, &src_ids);
        let pooled = tape.mean_pool_rows(memory, None);
        tape.value(pooled).data().iter().map(|&v| v as f64).collect()
    }
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    kind: String,
    config: MimicConfig,
    bpe_hash: String,
}
