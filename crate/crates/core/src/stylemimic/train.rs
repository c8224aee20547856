//! Mimic training: teacher-forced cross-entropy over (MGC -> HPC) pairs
//! with AdamW, early stopping on validation loss.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::PairedRecord;
use crate::neural::{AdamConfig, Tape};
use crate::parallel;
use crate::rng;
use crate::textproc::BpeVocab;

const GRAD_CLIP: f64 = 1.0;

use super::model::MimicModel;
use super::{MimicConfig, MimicError};

/// One mimic training-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicEpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct MimicTrainOptions {
    pub record_seconds: bool,
    pub verbose: bool,
}

impl Default for MimicTrainOptions {
    fn default() -> Self {
        MimicTrainOptions {
            record_seconds: true,
            verbose: false,
        }
    }
}

pub struct MimicReport {
    pub model: MimicModel,
    pub log: Vec<MimicEpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Train the mimic on (mgc -> hpc) directions of the given pairs.
pub fn train_mimic(
    config: &MimicConfig,
    train_pairs: &[PairedRecord],
    valid_pairs: &[PairedRecord],
    bpe: BpeVocab,
    options: &MimicTrainOptions,
) -> Result<MimicReport, MimicError> {
    if train_pairs.is_empty() || valid_pairs.is_empty() {
        return Err(MimicError::EmptyCorpus);
    }
    for pair in train_pairs.iter().chain(valid_pairs) {
        if pair.mgc_text.split_whitespace().next().is_none()
            || pair.hpc_text.split_whitespace().next().is_none()
        {
            return Err(MimicError::EmptyPair {
                pair_id: pair.pair_id.clone(),
            });
        }
    }

    let mut model = MimicModel::init(config, bpe)?;
    let config = model.config.clone();
    let adam = AdamConfig::adamw(config.lr, config.weight_decay);
    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(config.seed, 0x5EED));

    let mut log = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut best_snapshot = model.store.snapshot();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        rng::fisher_yates(&mut order, &mut shuffle_rng);

        let mut epoch_loss = 0.0f64;
        let mut seen = 0usize;
        for (step, batch) in order.chunks(config.batch).enumerate() {
            model.store.zero_grads();
            // parallel forward/backward, ordered accumulation (bitwise
            // identical to the sequential path)
            let tapes: Vec<(Tape<f32>, f64)> = parallel::map_slice(batch, |&idx| {
                let pair = &train_pairs[idx];
                let dropout_seed =
                    rng::derive_seed(config.seed, (epoch as u64) << 32 | idx as u64);
                let mut tape = Tape::training(dropout_seed);
                let loss = model.pair_loss(&mut tape, &pair.mgc_text, &pair.hpc_text);
                let loss_val = tape.value(loss).item() as f64;
                tape.backward(loss);
                (tape, loss_val)
            });
            for (tape, loss_val) in &tapes {
                if !loss_val.is_finite() {
                    return Err(MimicError::Diverged { epoch, pair: step });
                }
                epoch_loss += loss_val;
                seen += 1;
                tape.accumulate_param_grads(&mut model.store);
            }
            model.store.scale_grads(1.0 / batch.len() as f64);
            model.store.clip_grad_norm(GRAD_CLIP);
            model.store.adamw_step(&adam);
        }
        let train_loss = epoch_loss / seen as f64;
        let val_loss = validation_loss(&model, valid_pairs);
        let seconds = if options.record_seconds {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };
        log.push(MimicEpochLog {
            epoch,
            train_loss,
            val_loss,
            seconds,
        });
        if options.verbose {
            eprintln!("mimic epoch {epoch}: train_loss {train_loss:.4} val_loss {val_loss:.4}");
        }

        let improved = best.map_or(true, |(_, best_loss)| val_loss < best_loss);
        if improved {
            best = Some((epoch, val_loss));
            best_snapshot = model.store.snapshot();
        }
        let best_epoch = best.expect("set above").0;
        if epoch - best_epoch >= config.early_stop {
            break;
        }
    }

    model.store.restore(&best_snapshot);
    let (best_epoch, best_val_loss) = best.expect("at least one epoch");
    Ok(MimicReport {
        model,
        log,
        best_epoch,
        best_val_loss,
    })
}

/// Teacher-forced mean loss over pairs, dropout off.
pub fn validation_loss(model: &MimicModel, pairs: &[PairedRecord]) -> f64 {
    let losses: Vec<f64> = parallel::map_slice(pairs, |pair| {
        let mut tape = Tape::new();
        let loss = model.pair_loss(&mut tape, &pair.mgc_text, &pair.hpc_text);
        tape.value(loss).item() as f64
    });
    losses.iter().sum::<f64>() / losses.len() as f64
}
