//! Per-label corpus statistics and the three-table text report.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Label};
use crate::parallel;
use crate::textproc::postag::{self, PosTag, POS_TAG_ORDER};
use crate::textproc::sentences::split_sentences;
use crate::textproc::tokenize::word_tokens;

/// Discourse connectives counted for the statistics tables. "for example"
/// is matched as a token bigram; the rest are single tokens.
pub const CONNECTIVES: &[&str] = &[
    "and",
    "but",
    "so",
    "because",
    "however",
    "moreover",
    "therefore",
    "although",
    "while",
    "since",
    "thus",
    "for example",
];

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("cannot compute statistics over an empty document list")]
    EmptyInput,
}

/// Aggregate statistics for one label's documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub docs: usize,
    /// Mean whitespace word tokens per document (the "average sentence
    /// length" of the summary table is words per document, not words per
    /// sentence; both are reported to keep the labels unambiguous).
    pub avg_words_per_doc: f64,
    /// Distinct lowercased word tokens over total, across the label's corpus.
    pub lexical_diversity: f64,
    pub avg_sentences_per_doc: f64,
    pub ing_participles_per_doc: f64,
    pub ed_participles_per_doc: f64,
    pub connectives_per_doc: f64,
    /// Tag -> fraction of word tokens; sums to 1 when any token was tagged.
    pub pos_ratios: BTreeMap<String, f64>,
    /// Top-k lowercased words by count, descending (ties lexicographic).
    pub top_words: Vec<(String, u64)>,
}

#[derive(Default)]
struct DocCounts {
    words: u64,
    sentences: u64,
    ing: u64,
    ed: u64,
    connectives: u64,
    pos: HashMap<PosTag, u64>,
    word_counts: HashMap<String, u64>,
}

fn count_doc(text: &str) -> DocCounts {
    let tokens = word_tokens(text);
    let lower: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();

    let mut counts = DocCounts {
        words: tokens.len() as u64,
        sentences: split_sentences(text).len() as u64,
        ..DocCounts::default()
    };
    for (token, low) in tokens.iter().zip(&lower) {
        *counts.pos.entry(postag::tag_token(token)).or_insert(0) += 1;
        *counts.word_counts.entry(low.clone()).or_insert(0) += 1;
        if postag::is_ing_participle(token) {
            counts.ing += 1;
        }
        if postag::is_ed_participle(token) {
            counts.ed += 1;
        }
        if CONNECTIVES.contains(&low.as_str()) {
            counts.connectives += 1;
        }
    }
    for pair in lower.windows(2) {
        if pair[0] == "for" && pair[1] == "example" {
            counts.connectives += 1;
        }
    }
    counts
}

/// Compute statistics per label. `top_k` bounds the `top_words` list.
pub fn corpus_stats(
    docs: &[Document],
    top_k: usize,
) -> Result<BTreeMap<Label, CorpusStats>, StatsError> {
    if docs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let counted: Vec<(Label, DocCounts)> =
        parallel::map_slice(docs, |doc| (doc.label, count_doc(&doc.text)));

    let mut result = BTreeMap::new();
    for label in [Label::Hpc, Label::Mgc] {
        let per_doc: Vec<&DocCounts> = counted
            .iter()
            .filter(|(l, _)| *l == label)
            .map(|(_, c)| c)
            .collect();
        if per_doc.is_empty() {
            continue;
        }
        let n = per_doc.len() as f64;
        let total_words: u64 = per_doc.iter().map(|c| c.words).sum();

        let mut distinct: HashSet<&str> = HashSet::new();
        let mut merged_counts: HashMap<&str, u64> = HashMap::new();
        let mut pos_totals: HashMap<PosTag, u64> = HashMap::new();
        for counts in &per_doc {
            for (word, count) in &counts.word_counts {
                distinct.insert(word);
                *merged_counts.entry(word).or_insert(0) += count;
            }
            for (tag, count) in &counts.pos {
                *pos_totals.entry(*tag).or_insert(0) += count;
            }
        }

        let tagged_total: u64 = pos_totals.values().sum();
        let mut pos_ratios = BTreeMap::new();
        for tag in POS_TAG_ORDER {
            let count = pos_totals.get(&tag).copied().unwrap_or(0);
            let ratio = if tagged_total > 0 {
                count as f64 / tagged_total as f64
            } else {
                0.0
            };
            pos_ratios.insert(tag.as_str().to_string(), ratio);
        }

        let mut ranked: Vec<(String, u64)> = merged_counts
            .into_iter()
            .map(|(w, c)| (w.to_string(), c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(top_k);

        result.insert(
            label,
            CorpusStats {
                docs: per_doc.len(),
                avg_words_per_doc: total_words as f64 / n,
                lexical_diversity: if total_words > 0 {
                    distinct.len() as f64 / total_words as f64
                } else {
                    0.0
                },
                avg_sentences_per_doc: per_doc.iter().map(|c| c.sentences).sum::<u64>() as f64 / n,
                ing_participles_per_doc: per_doc.iter().map(|c| c.ing).sum::<u64>() as f64 / n,
                ed_participles_per_doc: per_doc.iter().map(|c| c.ed).sum::<u64>() as f64 / n,
                connectives_per_doc: per_doc.iter().map(|c| c.connectives).sum::<u64>() as f64
                    / n,
                pos_ratios,
                top_words: ranked,
            },
        );
    }
    Ok(result)
}

fn stat_row(stats: Option<&CorpusStats>, f: impl Fn(&CorpusStats) -> f64) -> String {
    match stats {
        Some(s) => format!("{:.4}", f(s)),
        None => "-".to_string(),
    }
}

/// Render the three aligned text tables (summary, sentence patterns, POS
/// ratios) for a per-label stats map.
pub fn render_stats_tables(stats: &BTreeMap<Label, CorpusStats>) -> String {
    let mgc = stats.get(&Label::Mgc);
    let hpc = stats.get(&Label::Hpc);
    let mut out = String::new();

    out.push_str("Average Words per Document and Lexicon Diversity\n");
    out.push_str(&format!(
        "{:<6} {:>18} {:>18}\n",
        "Data", "Avg. Words/Doc", "Lexicon Diversity"
    ));
    for (name, side) in [("MGC", mgc), ("HPC", hpc)] {
        out.push_str(&format!(
            "{:<6} {:>18} {:>18}\n",
            name,
            stat_row(side, |s| s.avg_words_per_doc),
            stat_row(side, |s| s.lexical_diversity),
        ));
    }

    out.push_str("\nSentence Patterns (per document)\n");
    out.push_str(&format!(
        "{:<6} {:>12} {:>10} {:>10} {:>8}\n",
        "Data", "Avg. Sent.", "ing PTCP", "ed PTCP", "CC"
    ));
    for (name, side) in [("MGC", mgc), ("HPC", hpc)] {
        out.push_str(&format!(
            "{:<6} {:>12} {:>10} {:>10} {:>8}\n",
            name,
            stat_row(side, |s| s.avg_sentences_per_doc),
            stat_row(side, |s| s.ing_participles_per_doc),
            stat_row(side, |s| s.ed_participles_per_doc),
            stat_row(side, |s| s.connectives_per_doc),
        ));
    }

    out.push_str("\nPOS Tag Ratios\n");
    out.push_str(&format!(
        "{:<6} {:>12} {:>12}\n",
        "POS", "MGC Ratio", "HPC Ratio"
    ));
    for tag in POS_TAG_ORDER {
        let cell = |side: Option<&CorpusStats>| match side {
            Some(s) => format!("{:.4}", s.pos_ratios.get(tag.as_str()).copied().unwrap_or(0.0)),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{:<6} {:>12} {:>12}\n",
            tag.as_str(),
            cell(mgc),
            cell(hpc)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, label: Label, text: &str) -> Document {
        Document {
            doc_id: id.to_string(),
            pair_id: id.to_string(),
            label,
            text: text.to_string(),
        }
    }

    // Three documents with every quantity counted by hand against the
    // documented tagger rules before the assertions were written.
    fn fixture() -> Vec<Document> {
        vec![
            doc(
                "d1",
                Label::Hpc,
                "The old cat sat on the mat. It was sleeping deeply.",
            ),
            doc(
                "d2",
                Label::Hpc,
                "He walked home because the rain stopped. The road was wet and cold.",
            ),
            doc(
                "d3",
                Label::Hpc,
                "So they ran away quickly. For example the king was reading a book.",
            ),
        ]
    }

    #[test]
    fn hand_counted_fixture_matches_exactly() {
        let stats = corpus_stats(&fixture(), 3).unwrap();
        let s = &stats[&Label::Hpc];
        assert_eq!(s.docs, 3);
        // word tokens per doc: 11, 13, 13
        assert_eq!(s.avg_words_per_doc, 37.0 / 3.0);
        assert_eq!(s.avg_sentences_per_doc, 2.0);
        // distinct lowercased tokens across the corpus: 31 of 37
        assert_eq!(s.lexical_diversity, 31.0 / 37.0);
        // sleeping, reading / walked, stopped
        assert_eq!(s.ing_participles_per_doc, 2.0 / 3.0);
        assert_eq!(s.ed_participles_per_doc, 2.0 / 3.0);
        // because, and / so, "for example"
        assert_eq!(s.connectives_per_doc, 4.0 / 3.0);
        // hand POS tally: Det 6, Noun 8, Adj 3, Verb 9, Adp 2, Pron 3,
        // Conj 3, Adv 3, Num/Prt/X 0 (total 37)
        let r = |tag: &str| s.pos_ratios[tag];
        assert_eq!(r("Det"), 6.0 / 37.0);
        assert_eq!(r("Noun"), 8.0 / 37.0);
        assert_eq!(r("Adj"), 3.0 / 37.0);
        assert_eq!(r("Verb"), 9.0 / 37.0);
        assert_eq!(r("Adp"), 2.0 / 37.0);
        assert_eq!(r("Pron"), 3.0 / 37.0);
        assert_eq!(r("Conj"), 3.0 / 37.0);
        assert_eq!(r("Adv"), 3.0 / 37.0);
        assert_eq!(r("Num"), 0.0);
        assert_eq!(r("Prt"), 0.0);
        assert_eq!(r("X"), 0.0);
        let sum: f64 = s.pos_ratios.values().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        // the x5, was x3, then count-1 ties resolve lexicographically
        assert_eq!(
            s.top_words,
            vec![
                ("the".to_string(), 5),
                ("was".to_string(), 3),
                ("a".to_string(), 1)
            ]
        );
    }

    #[test]
    fn single_doc_diversity() {
        let docs = vec![doc("r", Label::Hpc, "Run run run.")];
        let stats = corpus_stats(&docs, 5).unwrap();
        assert_eq!(stats[&Label::Hpc].lexical_diversity, 1.0 / 3.0);
    }

    #[test]
    fn diversity_is_one_iff_all_tokens_distinct() {
        let docs = vec![doc("u", Label::Mgc, "Every word here differs clearly.")];
        let stats = corpus_stats(&docs, 5).unwrap();
        assert_eq!(stats[&Label::Mgc].lexical_diversity, 1.0);
    }

    #[test]
    fn empty_input_errors() {
        assert!(matches!(corpus_stats(&[], 5), Err(StatsError::EmptyInput)));
    }

    #[test]
    fn table_layout_renders_all_sections() {
        let docs = vec![
            doc("a", Label::Hpc, "A human wrote this text."),
            doc("b", Label::Mgc, "A machine produced this text."),
        ];
        let stats = corpus_stats(&docs, 5).unwrap();
        let table = render_stats_tables(&stats);
        assert!(table.contains("Avg. Words/Doc"));
        assert!(table.contains("Lexicon Diversity"));
        assert!(table.contains("ing PTCP"));
        assert!(table.contains("ed PTCP"));
        assert!(table.contains("CC"));
        assert!(table.contains("POS Tag Ratios"));
        for tag in POS_TAG_ORDER {
            assert!(table.contains(tag.as_str()));
        }
    }

    #[test]
    fn missing_label_renders_dashes() {
        let docs = vec![doc("a", Label::Hpc, "Only the human side here.")];
        let stats = corpus_stats(&docs, 5).unwrap();
        let table = render_stats_tables(&stats);
        assert!(table.contains('-'));
    }
}
