//! Difference features between a document and its mimic rewrite.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::textproc::{whitespace_tokenize, BpeVocab};

use super::bleu::bleu_components;
use super::model::{Mimic, MimicModel};

/// The five-element feature vector: clipped n-gram precisions for n=1..4
/// plus embedding cosine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceFeatures {
    pub bleu: [f64; 4],
    pub cosine: f64,
}

impl DifferenceFeatures {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.bleu[0],
            self.bleu[1],
            self.bleu[2],
            self.bleu[3],
            self.cosine,
        ]
    }
}

/// Features JSONL record: `{"doc_id","label","bleu":[4],"cosine"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub doc_id: String,
    pub label: Label,
    pub bleu: [f64; 4],
    pub cosine: f64,
}

impl FeatureRecord {
    pub fn features(&self) -> DifferenceFeatures {
        DifferenceFeatures {
            bleu: self.bleu,
            cosine: self.cosine,
        }
    }
}

/// Text embedding for the cosine feature.
pub enum Embedder<'a> {
    /// Mean of the mimic encoder's final hidden states (needs a trained
    /// model).
    EncoderMean(&'a MimicModel),
    /// Model-free fallback: L2-normalized term-frequency bag over the BPE
    /// vocabulary.
    TermFrequency(&'a BpeVocab),
}

impl Embedder<'_> {
    pub fn embed(&self, text: &str) -> Vec<f64> {
        match self {
            Embedder::EncoderMean(model) => model.encoder_mean(text),
            Embedder::TermFrequency(bpe) => {
                let mut counts: HashMap<u32, f64> = HashMap::new();
                for id in bpe.encode(text) {
                    *counts.entry(id).or_insert(0.0) += 1.0;
                }
                let mut dense = vec![0.0f64; bpe.size];
                for (id, count) in counts {
                    dense[id as usize] = count;
                }
                let norm = dense.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for v in &mut dense {
                        *v /= norm;
                    }
                }
                dense
            }
        }
    }
}

/// Cosine of the two texts' embeddings; 0 when either embedding has zero
/// norm.
pub fn cosine_similarity(a: &str, b: &str, embedder: &Embedder) -> f64 {
    let va = embedder.embed(a);
    let vb = embedder.embed(b);
    cosine_of(&va, &vb)
}

fn cosine_of(a: &[f64], b: &[f64]) -> f64 {
    let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0; // exact on identical embeddings
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Run the mimic and score input/output divergence.
pub fn extract_features(text: &str, mimic: &Mimic, embedder: &Embedder) -> DifferenceFeatures {
    let rewritten = mimic.generate(text);
    let input_tokens = whitespace_tokenize(text);
    let output_tokens = whitespace_tokenize(&rewritten);
    DifferenceFeatures {
        bleu: bleu_components(&input_tokens, &output_tokens),
        cosine: cosine_similarity(text, &rewritten, embedder),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::train_bpe;

    #[test]
    fn cosine_is_one_on_identical_texts_and_symmetric() {
        let bpe = train_bpe(&["walnut maple cedar oak"], 48).unwrap();
        let embedder = Embedder::TermFrequency(&bpe);
        let c = cosine_similarity("walnut maple", "walnut maple", &embedder);
        assert!((c - 1.0).abs() < 1e-12);
        let ab = cosine_similarity("walnut maple", "walnut cedar", &embedder);
        let ba = cosine_similarity("walnut cedar", "walnut maple", &embedder);
        assert_eq!(ab, ba);
        assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn tf_cosine_half_overlap() {
        // single-character words merge fully, so "a b" vs "a c" share
        // exactly one of two unit-count tokens: cosine = 0.5
        let bpe = train_bpe(&["a b c"], 16).unwrap();
        let embedder = Embedder::TermFrequency(&bpe);
        let c = cosine_similarity("a b", "a c", &embedder);
        assert!((c - 0.5).abs() < 1e-12, "cosine = {c}");
    }

    #[test]
    fn zero_norm_embedding_gives_zero() {
        let bpe = train_bpe(&["a b"], 16).unwrap();
        let embedder = Embedder::TermFrequency(&bpe);
        assert_eq!(cosine_similarity("", "a b", &embedder), 0.0);
    }

    #[test]
    fn identity_mimic_yields_all_ones() {
        let bpe = train_bpe(&["walnut maple cedar oak elm"], 48).unwrap();
        let embedder = Embedder::TermFrequency(&bpe);
        let f = extract_features("walnut maple cedar oak elm", &Mimic::Identity, &embedder);
        assert_eq!(f.as_array(), [1.0, 1.0, 1.0, 1.0, 1.0]);
    }
}
