//! Model assembly: sentence encoder, code decoder, head, and checkpointing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discourse::PdtbVersion;
use crate::neural::{
    sinusoidal_positions, AttnSegment, CrossSource, CrossWiring, DecoderBlock, EncoderBlock,
    Linear, ParamStore, Tape, Tensor, Var,
};
use crate::parallel;
use crate::rng;
use crate::textproc::WordVocab;

use super::{label_index, DtConfig, DtError, PreparedDoc};

pub const SIDECAR_KIND: &str = "dtransformer";

/// Full model or the hierarchical-only ablation (no discourse path).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtMode {
    Full,
    HierarchicalOnly,
}

/// Class probabilities for one document; `probs = [P(HPC), P(MGC)]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub probs: [f64; 2],
    pub label: crate::corpus::Label,
}

impl Prediction {
    /// P(MGC), the score used by ranking metrics.
    pub fn score(&self) -> f64 {
        self.probs[1]
    }
}

/// The classifier: layer structs plus the parameter store.
pub struct DtModel {
    pub config: DtConfig,
    pub mode: DtMode,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
    head: Linear,
    pub store: ParamStore<f32>,
}

const TOKEN_EMBED: &str = "embed.token";
const CODE_EMBED: &str = "embed.code";

impl DtModel {
    /// Initialize all parameters from the config seed (Kaiming uniform
    /// weights, unit layer-norm gains, zero biases).
    pub fn init(config: &DtConfig, mode: DtMode) -> Result<DtModel, DtError> {
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
        let decoder = if mode == DtMode::Full {
            store.insert(
                CODE_EMBED,
                crate::neural::kaiming_uniform(&[config.code_vocab, d], d, 1.0, &mut rng)
                    .expect("d_model > 0"),
            );
            (0..config.dec_layers)
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
                .collect()
        } else {
            Vec::new()
        };
        let head = Linear::init_with_gain("head", d, 2, 0.1, &mut store, &mut rng);

        Ok(DtModel {
            config: config.clone(),
            mode,
            encoder,
            decoder,
            head,
            store,
        })
    }

    /// Per-sentence CLS encoding: all sentences of the document are stacked
    /// into one matrix with per-sentence attention segments and restarted
    /// positions, so each sentence passes through the shared encoder
    /// independently. Returns the (n x d_model) sentence-vector node.
    pub fn encode_sentences(&self, tape: &mut Tape<f32>, doc: &PreparedDoc) -> Var {
        let d = self.config.d_model;
        let mut token_ids: Vec<usize> = Vec::new();
        let mut positions: Vec<usize> = Vec::new();
        let mut segments: Vec<AttnSegment> = Vec::new();
        let mut cls_rows: Vec<usize> = Vec::new();
        for sentence in &doc.sentences {
            let start = token_ids.len();
            cls_rows.push(start);
            for (pos, &id) in sentence.iter().enumerate() {
                token_ids.push(id as usize);
                positions.push(pos);
            }
            segments.push(AttnSegment {
                q: start..token_ids.len(),
                kv: start..token_ids.len(),
                causal: false,
            });
        }

        let table = tape.param(&self.store, TOKEN_EMBED);
        let embedded = tape.select_rows(table, token_ids);
        let scaled = tape.mul_scalar(embedded, (d as f64).sqrt());
        let pos = tape.constant(sinusoidal_positions(&positions, d));
        let with_pos = tape.add(scaled, pos);
        let mut x = tape.dropout(with_pos, self.config.dropout);

        for block in &self.encoder {
            x = block.forward(tape, &self.store, x, &segments, None);
        }
        tape.select_rows(x, cls_rows)
    }

    /// Decoder + head on top of the sentence vectors. The stream starts as
    /// embedded discourse codes; every layer self-attends the stream, then
    /// cross-attends with queries projected from the sentence vectors and
    /// keys/values from the stream.
    pub fn decode_classify(&self, tape: &mut Tape<f32>, cls_matrix: Var, doc: &PreparedDoc) -> Var {
        let d = self.config.d_model;
        let n = doc.codes.len();
        assert_eq!(
            tape.value(cls_matrix).rows(),
            n,
            "decode_classify: {} sentence vectors vs {} codes",
            tape.value(cls_matrix).rows(),
            n
        );

        let pooled = match self.mode {
            DtMode::HierarchicalOnly => tape.mean_pool_rows(cls_matrix, None),
            DtMode::Full => {
                let table = tape.param(&self.store, CODE_EMBED);
                let embedded = tape.select_rows(table, doc.codes.iter().map(|&c| c as usize).collect());
                let scaled = tape.mul_scalar(embedded, (d as f64).sqrt());
                let positions: Vec<usize> = (0..n).collect();
                let pos = tape.constant(sinusoidal_positions(&positions, d));
                let with_pos = tape.add(scaled, pos);
                let mut stream = tape.dropout(with_pos, self.config.dropout);

                let full = AttnSegment::full(n, n);
                for block in &self.decoder {
                    stream = block.forward(
                        tape,
                        &self.store,
                        stream,
                        &full,
                        CrossWiring {
                            q: CrossSource::External(cls_matrix),
                            kv: CrossSource::Stream,
                            segments: full.clone(),
                            kv_valid: None,
                        },
                    );
                }
                tape.mean_pool_rows(stream, None)
            }
        };
        self.head.forward(tape, &self.store, pooled)
    }

    /// Forward pass to logits (1 x 2).
    pub fn logits(&self, tape: &mut Tape<f32>, doc: &PreparedDoc) -> Var {
        let cls = self.encode_sentences(tape, doc);
        self.decode_classify(tape, cls, doc)
    }

    /// Training loss for one document.
    pub fn loss(&self, tape: &mut Tape<f32>, doc: &PreparedDoc) -> Var {
        let logits = self.logits(tape, doc);
        tape.cross_entropy(logits, label_index(doc.label))
    }

    /// Deterministic prediction (dropout off).
    pub fn predict_prepared(&self, doc: &PreparedDoc) -> Prediction {
        let mut tape = Tape::new();
        let logits = self.logits(&mut tape, doc);
        let probs = tape.softmax_rows(logits);
        let row = tape.value(probs).row(0);
        let probs = [row[0] as f64, row[1] as f64];
        Prediction {
            doc_id: doc.doc_id.clone(),
            label: if probs[1] >= probs[0] {
                crate::corpus::Label::Mgc
            } else {
                crate::corpus::Label::Hpc
            },
            probs,
        }
    }

    /// Predict a batch in parallel (parameters are read-only).
    pub fn predict_batch(&self, docs: &[PreparedDoc]) -> Vec<Prediction> {
        parallel::map_slice(docs, |doc| self.predict_prepared(doc))
    }

    /// Mean loss and accuracy over prepared documents, dropout off.
    pub fn evaluate(&self, docs: &[PreparedDoc]) -> (f64, f64) {
        let outcomes: Vec<(f64, bool)> = parallel::map_slice(docs, |doc| {
            let mut tape = Tape::new();
            let logits = self.logits(&mut tape, doc);
            let loss = tape.cross_entropy(logits, label_index(doc.label));
            let lv = tape.value(logits);
            let predicted_mgc = lv.at(0, 1) >= lv.at(0, 0);
            let correct = predicted_mgc == (label_index(doc.label) == 1);
            (tape.value(loss).item() as f64, correct)
        });
        let n = outcomes.len() as f64;
        let loss = outcomes.iter().map(|(l, _)| l).sum::<f64>() / n;
        let acc = outcomes.iter().filter(|(_, c)| *c).count() as f64 / n;
        (loss, acc)
    }

    // -- persistence ----------------------------------------------------

    pub fn save(
        &self,
        dir: &Path,
        token_vocab_hash: &str,
        code_vocab_version: Option<PdtbVersion>,
    ) -> Result<(), DtError> {
        std::fs::create_dir_all(dir).map_err(|source| DtError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        crate::neural::save_tensors(&dir.join("model.mgcd"), &self.store.snapshot())?;
        let sidecar = Sidecar {
            kind: SIDECAR_KIND.to_string(),
            config: self.config.clone(),
            mode: self.mode,
            token_vocab_hash: token_vocab_hash.to_string(),
            code_vocab_version,
        };
        let path = dir.join("model.json");
        std::fs::write(
            &path,
            serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
        )
        .map_err(|source| DtError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Load a checkpoint; `vocab` must hash-match the sidecar.
    pub fn load(dir: &Path, vocab: &WordVocab) -> Result<DtModel, DtError> {
        let sidecar = Sidecar::read(&dir.join("model.json"))?;
        if sidecar.kind != SIDECAR_KIND {
            return Err(DtError::Sidecar {
                path: dir.join("model.json").display().to_string(),
                message: format!("kind {:?} is not {SIDECAR_KIND:?}", sidecar.kind),
            });
        }
        if sidecar.token_vocab_hash != vocab.content_hash() {
            return Err(DtError::VocabMismatch {
                expected: sidecar.token_vocab_hash,
                found: vocab.content_hash(),
            });
        }
        let tensors = crate::neural::load_tensors::<f32>(&dir.join("model.mgcd"))?;
        let mut model = DtModel::init(&sidecar.config, sidecar.mode)?;
        model.store = ParamStore::from_values(tensors);
        Ok(model)
    }

    /// Zero every parameter (degenerate-input tests).
    pub fn zero_all_params(&mut self) {
        let names: Vec<String> = self.store.names().cloned().collect();
        for name in names {
            let shape = self.store.value(&name).unwrap().shape().to_vec();
            let zeros = Tensor::zeros(&shape);
            let mut snapshot = std::collections::BTreeMap::new();
            snapshot.insert(name, zeros);
            self.store.restore(&snapshot);
        }
    }

    pub fn set_param(&mut self, name: &str, tensor: Tensor<f32>) {
        let mut snapshot = std::collections::BTreeMap::new();
        snapshot.insert(name.to_string(), tensor);
        self.store.restore(&snapshot);
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    kind: String,
    config: DtConfig,
    mode: DtMode,
    token_vocab_hash: String,
    code_vocab_version: Option<PdtbVersion>,
}

impl Sidecar {
    fn read(path: &Path) -> Result<Sidecar, DtError> {
        let raw = std::fs::read_to_string(path).map_err(|source| DtError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| DtError::Sidecar {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::{prepare_document, DtConfig};
    use super::*;
    use crate::corpus::Label;
    use crate::discourse::{CodeVocab, PdtbVersion};

    fn prepared(text: &str, config: &DtConfig) -> PreparedDoc {
        let vocab = tiny_vocab();
        let tagger = heuristic();
        prepare_document(
            &doc("t", Label::Hpc, text),
            config,
            &vocab,
            &tagger,
        )
        .unwrap()
    }

    fn desk_model(mode: DtMode) -> DtModel {
        let vocab = tiny_vocab();
        let mut config = DtConfig::desk(7);
        config.token_vocab = vocab.len();
        config.code_vocab = CodeVocab::builtin(PdtbVersion::Pdtb3).len();
        DtModel::init(&config, mode).unwrap()
    }

    #[test]
    fn cls_matrix_has_one_row_per_sentence_at_table_defaults() {
        let vocab = tiny_vocab();
        let mut config = DtConfig::table_defaults(7);
        config.token_vocab = vocab.len();
        config.code_vocab = CodeVocab::builtin(PdtbVersion::Pdtb3).len();
        let model = DtModel::init(&config, DtMode::Full).unwrap();
        let doc = prepared("The cat sat. So it ran. For example the mat.", &config);
        let mut tape = Tape::new();
        let cls = model.encode_sentences(&mut tape, &doc);
        assert_eq!(tape.value(cls).shape(), &[3, 512]);
    }

    #[test]
    fn identical_sentences_encode_identically() {
        let model = desk_model(DtMode::Full);
        let doc = prepared("The cat sat on the mat. The cat sat on the mat.", &model.config);
        let mut tape = Tape::new();
        let cls = model.encode_sentences(&mut tape, &doc);
        assert_eq!(tape.value(cls).row(0), tape.value(cls).row(1));
    }

    #[test]
    fn sentence_order_permutes_cls_rows() {
        let model = desk_model(DtMode::Full);
        let a = prepared("The cat sat. So the dog ran home.", &model.config);
        let b = prepared("So the dog ran home. The cat sat.", &model.config);
        let mut ta = Tape::new();
        let ca = model.encode_sentences(&mut ta, &a);
        let mut tb = Tape::new();
        let cb = model.encode_sentences(&mut tb, &b);
        assert_eq!(ta.value(ca).row(0), tb.value(cb).row(1));
        assert_eq!(ta.value(ca).row(1), tb.value(cb).row(0));
    }

    #[test]
    fn probabilities_sum_to_one() {
        for mode in [DtMode::Full, DtMode::HierarchicalOnly] {
            let model = desk_model(mode);
            let doc = prepared("The cat sat. So it ran.", &model.config);
            let p = model.predict_prepared(&doc);
            assert!((p.probs[0] + p.probs[1] - 1.0).abs() < 1e-6);
            assert!(p.probs[0] >= 0.0 && p.probs[1] >= 0.0);
        }
    }

    #[test]
    fn zeroed_params_leave_only_head_bias() {
        let mut model = desk_model(DtMode::Full);
        model.zero_all_params();
        model.set_param(
            "head.b",
            Tensor::from_vec(&[1, 2], vec![0.3f32, -0.2f32]),
        );
        let doc = prepared("The cat sat. So it ran.", &model.config);
        let p = model.predict_prepared(&doc);
        let z = (0.3f64).exp() + (-0.2f64).exp();
        assert!((p.probs[0] - (0.3f64).exp() / z).abs() < 1e-6);
        assert!((p.probs[1] - (-0.2f64).exp() / z).abs() < 1e-6);
    }

    #[test]
    fn swapping_head_columns_swaps_probs() {
        let model = desk_model(DtMode::Full);
        let doc = prepared("The cat sat. For example the dog ran.", &model.config);
        let before = model.predict_prepared(&doc);

        let mut swapped = desk_model(DtMode::Full);
        let w = swapped.store.value("head.w").unwrap().clone();
        let mut w_swapped = w.clone();
        for r in 0..w.rows() {
            w_swapped.set(r, 0, w.at(r, 1));
            w_swapped.set(r, 1, w.at(r, 0));
        }
        swapped.set_param("head.w", w_swapped);
        let b = swapped.store.value("head.b").unwrap().clone();
        let b_swapped = Tensor::from_vec(&[1, 2], vec![b.at(0, 1), b.at(0, 0)]);
        swapped.set_param("head.b", b_swapped);

        let after = swapped.predict_prepared(&doc);
        assert!((before.probs[0] - after.probs[1]).abs() < 1e-6);
        assert!((before.probs[1] - after.probs[0]).abs() < 1e-6);
    }

    #[test]
    fn gradient_reaches_every_parameter_group() {
        let model = desk_model(DtMode::Full);
        let doc = prepared("The cat sat on a mat. So the dog ran. For example it was fine.", &model.config);
        let mut tape = Tape::new();
        let loss = model.loss(&mut tape, &doc);
        tape.backward(loss);
        let mut store = DtModel::init(&model.config, DtMode::Full).unwrap().store;
        store.zero_grads();
        tape.accumulate_param_grads(&mut store);
        for group in ["embed.token", "embed.code", "enc.", "dec.", "head"] {
            assert!(
                store.grad_norm(group) > 0.0,
                "no gradient reached {group:?}"
            );
        }
    }

    #[test]
    fn save_load_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = tiny_vocab();
        let model = desk_model(DtMode::Full);
        let doc = prepared("The cat sat. So it ran.", &model.config);
        let before = model.predict_prepared(&doc);
        model
            .save(dir.path(), &vocab.content_hash(), Some(PdtbVersion::Pdtb3))
            .unwrap();
        let loaded = DtModel::load(dir.path(), &vocab).unwrap();
        let after = loaded.predict_prepared(&doc);
        assert_eq!(before.probs, after.probs);

        // wrong vocab is rejected
        let other = WordVocab::build(&["completely different words"], 16);
        assert!(matches!(
            DtModel::load(dir.path(), &other),
            Err(DtError::VocabMismatch { .. })
        ));
    }
}
