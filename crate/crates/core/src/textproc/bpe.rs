//! Byte-pair encoding: greedy merge training, encoding, decoding.
//!
//! Words are pre-tokenized on whitespace; each word becomes its character
//! symbols plus an end-of-word marker. Training repeatedly merges the most
//! frequent adjacent symbol pair (ties broken by lexicographic pair order)
//! until the vocabulary reaches the target size or no pairs remain.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// End-of-word marker symbol appended to every pre-tokenized word.
pub const EOW_MARKER: &str = "</w>";

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("target size {target} too small: need at least {minimum} (reserved {reserved} + alphabet {alphabet})")]
    TargetTooSmall {
        target: usize,
        minimum: usize,
        reserved: usize,
        alphabet: usize,
    },
    #[error("cannot train BPE on an empty corpus")]
    EmptyCorpus,
    #[error("token id {id} out of range (vocab size {size})")]
    IdOutOfRange { id: u32, size: usize },
    #[error("cannot read vocab {path}: {message}")]
    VocabFile { path: String, message: String },
}

/// Trained BPE vocabulary: ordered merges plus a dense token-to-id map.
///
/// Ids 0..=3 are reserved for PAD, UNK, BOS, EOS; alphabet symbols follow in
/// lexicographic order, then merge products in merge order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpeVocab {
    pub size: usize,
    pub merges: Vec<(String, String)>,
    pub tokens: HashMap<String, u32>,
    #[serde(skip)]
    by_id: Vec<String>,
    #[serde(skip)]
    merge_rank: HashMap<(String, String), usize>,
}

impl BpeVocab {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const BOS: u32 = 2;
    pub const EOS: u32 = 3;

    pub fn id_of(&self, symbol: &str) -> Option<u32> {
        self.tokens.get(symbol).copied()
    }

    /// Rebuild the derived lookup tables after deserialization.
    fn finish(mut self) -> BpeVocab {
        let mut by_id = vec![String::new(); self.tokens.len()];
        for (token, &id) in &self.tokens {
            by_id[id as usize] = token.clone();
        }
        self.by_id = by_id;
        self.merge_rank = self
            .merges
            .iter()
            .enumerate()
            .map(|(rank, pair)| (pair.clone(), rank))
            .collect();
        self
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("vocab serializes");
        std::fs::write(path, json)
    }

    pub fn load(path: &std::path::Path) -> Result<BpeVocab, BpeError> {
        let raw = std::fs::read_to_string(path).map_err(|e| BpeError::VocabFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let vocab: BpeVocab = serde_json::from_str(&raw).map_err(|e| BpeError::VocabFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(vocab.finish())
    }

    /// Content hash over the ordered token list (checkpoint compatibility).
    pub fn content_hash(&self) -> String {
        crate::util::sha256_hex(self.by_id.join("\n").as_bytes())
    }

    /// Encode text to token ids. Words are whitespace-delimited; characters
    /// outside the training alphabet encode as UNK.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            let symbols = self.apply_merges(word);
            for symbol in symbols {
                ids.push(self.id_of(&symbol).unwrap_or(Self::UNK));
            }
        }
        ids
    }

    /// Decode ids back to text. Inverse of `encode` up to whitespace
    /// normalization (words come back single-space separated). PAD/BOS/EOS
    /// are skipped; UNK renders as nothing (the original glyph is gone).
    pub fn decode(&self, ids: &[u32]) -> Result<String, BpeError> {
        let mut out = String::new();
        for &id in ids {
            if id as usize >= self.by_id.len() {
                return Err(BpeError::IdOutOfRange {
                    id,
                    size: self.by_id.len(),
                });
            }
            if id == Self::PAD || id == Self::BOS || id == Self::EOS || id == Self::UNK {
                continue;
            }
            out.push_str(&self.by_id[id as usize]);
        }
        Ok(out
            .split(EOW_MARKER)
            .filter(|w| !w.is_empty())
            .collect::<Vec<_>>()
            .join(" "))
    }

    /// Greedy merge application: repeatedly merge the pair with the lowest
    /// merge rank until none applies (the reference BPE encoder).
    fn apply_merges(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        symbols.push(EOW_MARKER.to_string());
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for i in 0..symbols.len() - 1 {
                let key = (symbols[i].clone(), symbols[i + 1].clone());
                if let Some(&rank) = self.merge_rank.get(&key) {
                    if best.map_or(true, |(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((rank, _)) = best else { break };
            // merge every occurrence of that pair, left to right
            let (a, b) = self.merges[rank].clone();
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == a && symbols[i + 1] == b {
                    merged.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    merged.push(symbols[i].clone());
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }
}

/// Train a BPE vocabulary of at most `target_size` tokens.
pub fn train_bpe<S: AsRef<str>>(texts: &[S], target_size: usize) -> Result<BpeVocab, BpeError> {
    const RESERVED: usize = 4;

    // word -> frequency, over whitespace pre-tokenization
    let mut word_freq: HashMap<String, u64> = HashMap::new();
    for text in texts {
        for word in text.as_ref().split_whitespace() {
            *word_freq.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    if word_freq.is_empty() {
        return Err(BpeError::EmptyCorpus);
    }

    // deterministic word order for the merge loop
    let mut words: Vec<(Vec<String>, u64)> = {
        let mut entries: Vec<(String, u64)> = word_freq.into_iter().collect();
        entries.sort();
        entries
            .into_iter()
            .map(|(word, freq)| {
                let mut symbols: Vec<String> = word.chars().map(|c| c.to_string()).collect();
                symbols.push(EOW_MARKER.to_string());
                (symbols, freq)
            })
            .collect()
    };

    let mut alphabet: Vec<String> = words
        .iter()
        .flat_map(|(symbols, _)| symbols.iter().cloned())
        .collect();
    alphabet.sort();
    alphabet.dedup();

    let minimum = RESERVED + alphabet.len() + 1;
    if target_size < minimum {
        return Err(BpeError::TargetTooSmall {
            target: target_size,
            minimum,
            reserved: RESERVED,
            alphabet: alphabet.len(),
        });
    }

    let mut merges: Vec<(String, String)> = Vec::new();
    let max_merges = target_size - RESERVED - alphabet.len();
    while merges.len() < max_merges {
        // count adjacent pairs weighted by word frequency
        let mut pair_counts: HashMap<(String, String), u64> = HashMap::new();
        for (symbols, freq) in &words {
            for window in symbols.windows(2) {
                *pair_counts
                    .entry((window[0].clone(), window[1].clone()))
                    .or_insert(0) += freq;
            }
        }
        // best pair: highest count, lexicographically smallest on ties
        let Some(best) = pair_counts
            .into_iter()
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|(pair, _)| pair)
        else {
            break; // no pairs remain: every word is a single symbol
        };

        for (symbols, _) in &mut words {
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == best.0 && symbols[i + 1] == best.1 {
                    merged.push(format!("{}{}", best.0, best.1));
                    i += 2;
                } else {
                    merged.push(symbols[i].clone());
                    i += 1;
                }
            }
            *symbols = merged;
        }
        merges.push(best);
    }

    // id assignment: reserved, alphabet (sorted), merge products (merge order)
    let mut tokens: HashMap<String, u32> = HashMap::new();
    for (id, name) in ["<pad>", "<unk>", "<bos>", "<eos>"].iter().enumerate() {
        tokens.insert((*name).to_string(), id as u32);
    }
    for symbol in &alphabet {
        let id = tokens.len() as u32;
        tokens.insert(symbol.clone(), id);
    }
    for (a, b) in &merges {
        let product = format!("{a}{b}");
        if !tokens.contains_key(&product) {
            let id = tokens.len() as u32;
            tokens.insert(product, id);
        }
    }

    let vocab = BpeVocab {
        size: tokens.len(),
        merges,
        tokens,
        by_id: Vec::new(),
        merge_rank: HashMap::new(),
    };
    Ok(vocab.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_merge_on_toy_corpus_is_most_frequent_pair() {
        // "aaab" x10: pair (a,a) occurs twice per word, all others once, so
        // brute-force pair counting says (a,a) merges first.
        let texts = vec!["aaab"; 10];
        let vocab = train_bpe(&texts, 8).unwrap();
        assert_eq!(vocab.merges[0], ("a".to_string(), "a".to_string()));
        assert_eq!(vocab.size, 8);
    }

    #[test]
    fn vocab_size_never_exceeds_target() {
        let texts = vec!["the cat sat on the mat", "a cat and a hat"];
        let vocab = train_bpe(&texts, 64).unwrap();
        assert!(vocab.size <= 64);
        let big = train_bpe(&texts, 8016).unwrap();
        assert!(big.size <= 8016);
    }

    #[test]
    fn empty_corpus_errors() {
        assert!(matches!(
            train_bpe::<&str>(&[], 100),
            Err(BpeError::EmptyCorpus)
        ));
        assert!(matches!(
            train_bpe(&["   "], 100),
            Err(BpeError::EmptyCorpus)
        ));
    }

    #[test]
    fn target_too_small_errors() {
        assert!(matches!(
            train_bpe(&["abcdefgh"], 5),
            Err(BpeError::TargetTooSmall { .. })
        ));
    }

    #[test]
    fn round_trip_on_training_alphabet() {
        let vocab = train_bpe(&["the cat sat", "the hat"], 40).unwrap();
        let ids = vocab.encode("the cat");
        assert_eq!(vocab.decode(&ids).unwrap(), "the cat");
        // unseen combination of seen characters still round-trips
        let ids = vocab.encode("that chat");
        assert_eq!(vocab.decode(&ids).unwrap(), "that chat");
    }

    #[test]
    fn unseen_glyph_maps_to_unk() {
        let vocab = train_bpe(&["abc abc"], 16).unwrap();
        let ids = vocab.encode("aZc");
        assert!(ids.contains(&BpeVocab::UNK));
    }

    #[test]
    fn decode_empty_and_out_of_range() {
        let vocab = train_bpe(&["ab"], 10).unwrap();
        assert_eq!(vocab.decode(&[]).unwrap(), "");
        assert!(matches!(
            vocab.decode(&[9999]),
            Err(BpeError::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn save_load_preserves_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        let vocab = train_bpe(&["some words to merge here", "more words"], 64).unwrap();
        vocab.save(&path).unwrap();
        let loaded = BpeVocab::load(&path).unwrap();
        let text = "words here";
        assert_eq!(vocab.encode(text), loaded.encode(text));
        assert_eq!(loaded.decode(&loaded.encode(text)).unwrap(), text);
    }
}
