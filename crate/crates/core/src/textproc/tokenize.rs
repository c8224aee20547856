//! Whitespace tokenization and the word-level vocabulary used by the
//! document classifier.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Split on Unicode whitespace, then peel leading/trailing punctuation off
/// each chunk into separate single-character tokens. Word-internal
/// punctuation ("don't", "co-op", "e.g.") stays inside the token.
pub fn whitespace_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut lo = 0usize;
        let mut hi = chars.len();
        while lo < hi && !chars[lo].is_alphanumeric() {
            lo += 1;
        }
        while hi > lo && !chars[hi - 1].is_alphanumeric() {
            hi -= 1;
        }
        for &c in &chars[..lo] {
            tokens.push(c.to_string());
        }
        if lo < hi {
            tokens.push(chars[lo..hi].iter().collect());
        }
        for &c in &chars[hi..] {
            tokens.push(c.to_string());
        }
    }
    tokens
}

/// Tokens that contain at least one alphanumeric character: the "word"
/// tokens used for counting, diversity, and POS ratios.
pub fn word_tokens(text: &str) -> Vec<String> {
    whitespace_tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(|c| c.is_alphanumeric()))
        .collect()
}

/// Frequency-built whitespace-token vocabulary with reserved ids.
///
/// Reserved: PAD=0, UNK=1, CLS=2. Remaining ids are assigned to the most
/// frequent lowercased word tokens of the training texts, ties broken
/// lexicographically, capped at `max_size`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordVocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl WordVocab {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const CLS: u32 = 2;

    /// Build from training texts.
    pub fn build<S: AsRef<str>>(texts: &[S], max_size: usize) -> WordVocab {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for token in word_tokens(text.as_ref()) {
                *counts.entry(token.to_lowercase()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut id_to_token: Vec<String> =
            vec!["<pad>".to_string(), "<unk>".to_string(), "<cls>".to_string()];
        for (token, _) in ranked.into_iter().take(max_size.saturating_sub(3)) {
            id_to_token.push(token);
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        WordVocab {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Lowercased lookup; unknown tokens map to UNK.
    pub fn id_of(&self, token: &str) -> u32 {
        self.token_to_id
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(Self::UNK)
    }

    /// Encode a sentence to word ids (no CLS, no padding).
    pub fn encode(&self, text: &str) -> Vec<u32> {
        word_tokens(text).iter().map(|t| self.id_of(t)).collect()
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(&self).expect("vocab serializes");
        std::fs::write(path, json)
    }

    pub fn load(path: &std::path::Path) -> Result<WordVocab, String> {
        let raw = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        serde_json::from_str(&raw).map_err(|e| e.to_string())
    }

    /// Stable content hash, recorded in checkpoint sidecars so an
    /// incompatible vocabulary is caught at load time.
    pub fn content_hash(&self) -> String {
        crate::util::sha256_hex(self.id_to_token.join("\n").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_whitespace_runs() {
        assert_eq!(whitespace_tokenize("a b  c"), vec!["a", "b", "c"]);
    }

    #[test]
    fn strips_trailing_punctuation() {
        assert_eq!(whitespace_tokenize("end."), vec!["end", "."]);
        assert_eq!(whitespace_tokenize("(hi)!"), vec!["(", "hi", ")", "!"]);
    }

    #[test]
    fn empty_text_gives_no_tokens() {
        assert!(whitespace_tokenize("").is_empty());
        assert!(whitespace_tokenize("   \t\n").is_empty());
    }

    #[test]
    fn keeps_internal_punctuation() {
        assert_eq!(whitespace_tokenize("don't co-op"), vec!["don't", "co-op"]);
    }

    #[test]
    fn word_tokens_exclude_bare_punctuation() {
        assert_eq!(word_tokens("stop. now!"), vec!["stop", "now"]);
    }

    #[test]
    fn vocab_reserves_ids_and_ranks_by_frequency() {
        let vocab = WordVocab::build(&["b a a", "a c b"], 16);
        assert_eq!(vocab.id_of("a"), 3); // most frequent after reserved ids
        assert_eq!(vocab.id_of("b"), 4);
        assert_eq!(vocab.id_of("c"), 5);
        assert_eq!(vocab.id_of("zebra"), WordVocab::UNK);
        assert_eq!(vocab.id_of("A"), 3); // lowercased lookup
    }

    #[test]
    fn vocab_respects_size_cap() {
        let vocab = WordVocab::build(&["a b c d e f g"], 5);
        assert_eq!(vocab.len(), 5);
    }
}
