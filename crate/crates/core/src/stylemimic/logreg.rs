//! Logistic regression over the difference features: full-batch gradient
//! descent on L2-regularized logistic loss with feature standardization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

use super::features::DifferenceFeatures;

const L2_LAMBDA: f64 = 1e-4;
const LEARNING_RATE: f64 = 0.1;
const MAX_ITERS: usize = 10_000;
const LOSS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LrError {
    #[error("need at least one example of each class")]
    SingleClass,
    #[error("empty training set")]
    Empty,
    #[error("model is untrained")]
    Untrained,
    #[error("model file {path}: {message}")]
    File { path: String, message: String },
}

/// Trained classifier: weights over the five standardized features.
/// Serialized as `{weights, bias, scaler_mean, scaler_std}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrModel {
    pub weights: [f64; 5],
    pub bias: f64,
    pub scaler_mean: [f64; 5],
    pub scaler_std: [f64; 5],
    #[serde(default)]
    pub trained: bool,
}

impl Default for LrModel {
    fn default() -> Self {
        LrModel {
            weights: [0.0; 5],
            bias: 0.0,
            scaler_mean: [0.0; 5],
            scaler_std: [1.0; 5],
            trained: false,
        }
    }
}

/// Training output: the model plus the per-iteration loss curve.
pub struct LrTraining {
    pub model: LrModel,
    pub losses: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn standardize(x: &[f64; 5], model: &LrModel) -> [f64; 5] {
    let mut out = [0.0; 5];
    for i in 0..5 {
        out[i] = (x[i] - model.scaler_mean[i]) / model.scaler_std[i];
    }
    out
}

/// Mean L2-regularized logistic loss of a model on (features, labels).
pub fn logistic_loss(model: &LrModel, features: &[[f64; 5]], labels: &[Label]) -> f64 {
    let n = features.len() as f64;
    let mut total = 0.0;
    for (x, &label) in features.iter().zip(labels) {
        let xs = standardize(x, model);
        let z: f64 = xs.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>() + model.bias;
        let y = if label == Label::Mgc { 1.0 } else { -1.0 };
        // log(1 + exp(-y z)), stable form
        let m = -y * z;
        total += if m > 0.0 {
            m + (1.0 + (-m).exp()).ln()
        } else {
            (1.0 + m.exp()).ln()
        };
    }
    let reg: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * (L2_LAMBDA / 2.0);
    total / n + reg
}

/// Train by full-batch gradient descent. Features are standardized to mean
/// 0 / variance 1 (per column, population variance; constant columns keep
/// std 1), and the scaler is stored with the model. The MGC-iff-different
/// direction is learned from the labels, never hard-coded.
pub fn train_lr(features: &[DifferenceFeatures], labels: &[Label]) -> Result<LrTraining, LrError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(LrError::Empty);
    }
    let has_mgc = labels.iter().any(|&l| l == Label::Mgc);
    let has_hpc = labels.iter().any(|&l| l == Label::Hpc);
    if !has_mgc || !has_hpc {
        return Err(LrError::SingleClass);
    }

    let rows: Vec<[f64; 5]> = features.iter().map(|f| f.as_array()).collect();
    let n = rows.len() as f64;

    let mut model = LrModel::default();
    for i in 0..5 {
        let mean = rows.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[i] - mean) * (r[i] - mean)).sum::<f64>() / n;
        model.scaler_mean[i] = mean;
        model.scaler_std[i] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let standardized: Vec<[f64; 5]> = rows.iter().map(|r| standardize(r, &model)).collect();
    let targets: Vec<f64> = labels
        .iter()
        .map(|&l| if l == Label::Mgc { 1.0 } else { -1.0 })
        .collect();

    let mut losses = Vec::new();
    let mut previous = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        // gradients of mean log-loss + (lambda/2)||w||^2
        let mut gw = [0.0f64; 5];
        let mut gb = 0.0f64;
        for (x, &y) in standardized.iter().zip(&targets) {
            let z: f64 =
                x.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>() + model.bias;
            let coeff = -y * sigmoid(-y * z); // d/dz log(1+exp(-yz))
            for i in 0..5 {
                gw[i] += coeff * x[i];
            }
            gb += coeff;
        }
        for i in 0..5 {
            gw[i] = gw[i] / n + L2_LAMBDA * model.weights[i];
            model.weights[i] -= LEARNING_RATE * gw[i];
        }
        model.bias -= LEARNING_RATE * gb / n;

        let loss = logistic_loss(&model, &rows, labels);
        losses.push(loss);
        if (previous - loss).abs() < LOSS_TOLERANCE {
            break;
        }
        previous = loss;
    }

    model.trained = true;
    Ok(LrTraining { model, losses })
}

/// Classify one feature vector: `(label, P(MGC))`, MGC iff p >= 0.5.
pub fn classify(features: &DifferenceFeatures, model: &LrModel) -> Result<(Label, f64), LrError> {
    if !model.trained {
        return Err(LrError::Untrained);
    }
    let xs = standardize(&features.as_array(), model);
    let z: f64 = xs.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>() + model.bias;
    let p = sigmoid(z);
    let label = if p >= 0.5 { Label::Mgc } else { Label::Hpc };
    Ok((label, p))
}

impl LrModel {
    pub fn save(&self, path: &Path) -> Result<(), LrError> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("model serializes"),
        )
        .map_err(|e| LrError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<LrModel, LrError> {
        let raw = std::fs::read_to_string(path).map_err(|e| LrError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut model: LrModel = serde_json::from_str(&raw).map_err(|e| LrError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        model.trained = true;
        Ok(model)
    }

    pub fn finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
            && self.bias.is_finite()
            && self.scaler_mean.iter().all(|v| v.is_finite())
            && self.scaler_std.iter().all(|v| v.is_finite() && *v > 0.0)
    }
}
