//! The style-mimic pipeline: a sequence-to-sequence model trained to
//! rewrite machine text as its human counterpart, difference features
//! (BLEU-1..4 plus cosine) between input and rewrite, and a logistic
//! regression over those features.
//!
//! A text that already reads like human writing passes through the mimic
//! nearly unchanged (features near 1); machine text gets visibly rewritten
//! (features drop), and the classifier learns that boundary.

mod bleu;
mod features;
mod logreg;
mod model;
mod train;

pub use bleu::bleu_components;
pub use features::{cosine_similarity, extract_features, DifferenceFeatures, Embedder, FeatureRecord};
pub use logreg::{classify, logistic_loss, train_lr, LrError, LrModel, LrTraining};
pub use model::{Mimic, MimicModel, MIMIC_SIDECAR_KIND};
pub use train::{train_mimic, MimicEpochLog, MimicReport, MimicTrainOptions};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::Activation;

/// Mimic hyperparameters. `table_defaults` mirrors the published
/// configuration (max length 1024, lr 2e-5, 10 epochs, early stop 3,
/// batch 1, AdamW); `desk` shrinks the model for CPU validation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub max_len: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub early_stop: usize,
    pub batch: usize,
    pub token_vocab: usize,
    pub seed: u64,
}

impl MimicConfig {
    pub fn table_defaults(seed: u64) -> MimicConfig {
        MimicConfig {
            d_model: 512,
            d_ff: 2048,
            enc_layers: 6,
            dec_layers: 6,
            heads: 8,
            dropout: 0.1,
            activation: Activation::Gelu,
            max_len: 1024,
            lr: 2e-5,
            weight_decay: 0.01,
            epochs: 10,
            early_stop: 3,
            batch: 1,
            token_vocab: 0,
            seed,
        }
    }

    pub fn desk(seed: u64) -> MimicConfig {
        MimicConfig {
            d_model: 64,
            d_ff: 256,
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            max_len: 96,
            lr: 6e-4,
            epochs: 12,
            early_stop: 3,
            ..MimicConfig::table_defaults(seed)
        }
    }

    pub fn validate(&self) -> Result<(), MimicError> {
        if self.d_model == 0
            || self.d_ff == 0
            || self.enc_layers == 0
            || self.dec_layers == 0
            || self.heads == 0
            || self.max_len < 2
            || self.batch == 0
        {
            return Err(MimicError::BadConfig(
                "all dimensions must be positive (max_len >= 2)".to_string(),
            ));
        }
        if self.d_model % self.heads != 0 {
            return Err(MimicError::BadConfig(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.early_stop > self.epochs {
            return Err(MimicError::BadConfig(format!(
                "early_stop {} exceeds epochs {}",
                self.early_stop, self.epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MimicError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("train and validation pairs must be non-empty")]
    EmptyCorpus,
    #[error("pair {pair_id:?} is empty after tokenization")]
    EmptyPair { pair_id: String },
    #[error("loss diverged (NaN) at epoch {epoch}, pair {pair}")]
    Diverged { epoch: usize, pair: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] crate::neural::CheckpointError),
    #[error("sidecar file {path}: {message}")]
    Sidecar { path: String, message: String },
    #[error("vocab mismatch: checkpoint built with BPE vocab {expected}, got {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}
