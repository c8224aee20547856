//! Text processing: sentence segmentation, tokenization (whitespace and
//! BPE), a rule-based universal POS tagger, and corpus statistics.

mod bpe;
mod postag;
mod sentences;
mod stats;
mod tokenize;

pub use bpe::{train_bpe, BpeError, BpeVocab, EOW_MARKER};
pub use postag::{tag_token, PosTag, POS_TAG_ORDER};
pub use sentences::{split_sentences, SentenceSpan};
pub use stats::{corpus_stats, render_stats_tables, CorpusStats, StatsError, CONNECTIVES};
pub use tokenize::{whitespace_tokenize, word_tokens, WordVocab};
