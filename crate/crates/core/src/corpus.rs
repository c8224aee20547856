//! Paired-corpus ingestion, cleaning, and leakage-safe splitting.
//!
//! A corpus is a list of [`PairedRecord`]s: one human-written document (HPC)
//! and its machine-generated paraphrase (MGC) under a shared `pair_id`.
//! Splitting operates on pairs, never on documents, so a paraphrase of a
//! training text can never appear in the test split.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel;
use crate::rng;

/// One HPC document and its MGC paraphrase sharing a pair id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedRecord {
    pub pair_id: String,
    pub source: String,
    #[serde(rename = "hpc")]
    pub hpc_text: String,
    #[serde(rename = "mgc")]
    pub mgc_text: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// Document class: human-produced or machine-generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HPC")]
    Hpc,
    #[serde(rename = "MGC")]
    Mgc,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Hpc => "HPC",
            Label::Mgc => "MGC",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One side of a pair, flattened for classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub pair_id: String,
    pub label: Label,
    pub text: String,
}

/// Exact train/valid/test fractions plus the shuffle seed.
///
/// Fractions are rationals so "sum to 1" is checked exactly, with no
/// floating-point slack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_frac: Ratio<u64>,
    pub valid_frac: Ratio<u64>,
    pub test_frac: Ratio<u64>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: Ratio<u64>, valid: Ratio<u64>, test: Ratio<u64>, seed: u64) -> Self {
        SplitSpec {
            train_frac: train,
            valid_frac: valid,
            test_frac: test,
            seed,
        }
    }

    /// 80/10/10, the default experimental split.
    pub fn standard(seed: u64) -> Self {
        SplitSpec::new(
            Ratio::new(8, 10),
            Ratio::new(1, 10),
            Ratio::new(1, 10),
            seed,
        )
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let one = Ratio::from_integer(1u64);
        let sum = self.train_frac + self.valid_frac + self.test_frac;
        if sum != one {
            return Err(CorpusError::BadFractions {
                detail: format!(
                    "{} + {} + {} = {}, expected exactly 1",
                    self.train_frac, self.valid_frac, self.test_frac, sum
                ),
            });
        }
        Ok(())
    }
}

/// Accounting of a cleaning pass; kept + dropped always equals the input.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub kept: usize,
    pub dropped_nonlatin: usize,
    pub dropped_invalid_marker: usize,
    pub dropped_ids: Vec<String>,
}

/// The three pair lists of a split, plus the manifest describing them.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Vec<PairedRecord>,
    pub valid: Vec<PairedRecord>,
    pub test: Vec<PairedRecord>,
    pub seed: u64,
}

/// Serialized form of a split: seed plus the pair ids per part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

impl SplitData {
    pub fn manifest(&self) -> SplitManifest {
        let ids = |part: &[PairedRecord]| part.iter().map(|p| p.pair_id.clone()).collect();
        SplitManifest {
            seed: self.seed,
            train: ids(&self.train),
            valid: ids(&self.valid),
            test: ids(&self.test),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {count} malformed line(s), first at line {first_line}: {first_message}")]
    Malformed {
        path: String,
        count: usize,
        first_line: usize,
        first_message: String,
        all: Vec<(usize, String)>,
    },
    #[error("duplicate pair_id {pair_id:?} (lines {first} and {second})")]
    DuplicatePairId {
        pair_id: String,
        first: usize,
        second: usize,
    },
    #[error("record {pair_id:?}: {field} text is empty")]
    EmptyText { pair_id: String, field: String },
    #[error("empty pair_id at line {line}")]
    EmptyPairId { line: usize },
    #[error("split fractions invalid: {detail}")]
    BadFractions { detail: String },
    #[error("cannot split an empty record list")]
    EmptyCorpus,
}

/// Load a pairs JSONL file: one `{"pair_id","source","hpc","mgc","meta"}`
/// object per line.
///
/// Malformed lines are collected (all of them, with 1-based line numbers)
/// and reported together; nothing is silently skipped. Records come back in
/// file order.
pub fn load_pairs(path: &Path) -> Result<Vec<PairedRecord>, CorpusError> {
    let display = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|source| CorpusError::Read {
        path: display.clone(),
        source,
    })?;

    let mut records = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut bad: Vec<(usize, String)> = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<PairedRecord>(line) {
            Ok(rec) => {
                if rec.pair_id.is_empty() {
                    return Err(CorpusError::EmptyPairId { line: lineno });
                }
                if let Some(&first) = seen.get(&rec.pair_id) {
                    return Err(CorpusError::DuplicatePairId {
                        pair_id: rec.pair_id,
                        first,
                        second: lineno,
                    });
                }
                seen.insert(rec.pair_id.clone(), lineno);
                records.push(rec);
            }
            Err(e) => bad.push((lineno, e.to_string())),
        }
    }
    if let Some((first_line, first_message)) = bad.first().cloned() {
        return Err(CorpusError::Malformed {
            path: display,
            count: bad.len(),
            first_line,
            first_message,
            all: bad,
        });
    }
    Ok(records)
}

/// Write records as pairs JSONL.
pub fn save_pairs(path: &Path, records: &[PairedRecord]) -> Result<(), crate::util::JsonlError> {
    crate::util::write_jsonl(path, records)
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

/// Letters outside these ranges mark a record as non-Latin. Digits,
/// punctuation, and symbols are always allowed; only letter code points are
/// inspected.
fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic()
        || matches!(u32::from(c),
            0x00C0..=0x00FF   // Latin-1 Supplement letters
            | 0x0100..=0x017F // Latin Extended-A
            | 0x0180..=0x024F // Latin Extended-B
            | 0x1E00..=0x1EFF // Latin Extended Additional
            | 0x2C60..=0x2C7F // Latin Extended-C
            | 0xA720..=0xA7FF // Latin Extended-D
        )
}

fn has_non_latin_letter(text: &str) -> bool {
    text.chars().any(|c| c.is_alphabetic() && !is_latin_letter(c))
}

/// Invalid intra-word markers: a run of >= 3 identical punctuation
/// characters anywhere ("!!!!!!"), or punctuation embedded inside an
/// alphabetic token ("su--per", "w@rd"). Single hyphens, apostrophes, and
/// periods between letters stay legal so that "don't", "co-op", and "e.g."
/// survive.
fn has_invalid_marker(text: &str) -> bool {
    let chars: Vec<char> = text.chars().collect();
    let is_punct = |c: char| !c.is_alphanumeric() && !c.is_whitespace();

    // Rule 1: run of >= 3 identical punctuation characters.
    let mut run = 0usize;
    let mut prev = '\0';
    for &c in &chars {
        if is_punct(c) && c == prev {
            run += 1;
            if run >= 3 {
                return true;
            }
        } else {
            run = if is_punct(c) { 1 } else { 0 };
        }
        prev = c;
    }

    // Rule 2: punctuation inside an alphabetic token. A single '-', '\'',
    // '’', or '.' between letters is allowed; anything else (or a run of 2+)
    // is a marker.
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphabetic() {
            i += 1;
            continue;
        }
        // left neighbour is a letter; scan the punctuation run that follows
        let mut j = i + 1;
        while j < chars.len() && is_punct(chars[j]) {
            j += 1;
        }
        let run_len = j - i - 1;
        if run_len > 0 && j < chars.len() && chars[j].is_alphabetic() {
            if run_len >= 2 {
                return true;
            }
            if !matches!(chars[i + 1], '-' | '\'' | '\u{2019}' | '.') {
                return true;
            }
        }
        i += 1;
    }
    false
}

fn record_violation(record: &PairedRecord) -> Option<DropReason> {
    if has_non_latin_letter(&record.hpc_text) || has_non_latin_letter(&record.mgc_text) {
        return Some(DropReason::NonLatin);
    }
    if has_invalid_marker(&record.hpc_text) || has_invalid_marker(&record.mgc_text) {
        return Some(DropReason::InvalidMarker);
    }
    if record.hpc_text.trim().is_empty() || record.mgc_text.trim().is_empty() {
        // Empty-after-cleaning texts violate the record invariant; treat as
        // marker drops so the report still accounts for every input.
        return Some(DropReason::InvalidMarker);
    }
    None
}

#[derive(Clone, Copy, PartialEq)]
enum DropReason {
    NonLatin,
    InvalidMarker,
}

/// Drop records containing non-Latin letters or invalid intra-word markers.
///
/// Cleaning never rewrites a kept text, and the report accounts for every
/// input record: `kept + dropped_nonlatin + dropped_invalid_marker == input`.
pub fn clean(records: Vec<PairedRecord>) -> (Vec<PairedRecord>, CleaningReport) {
    let verdicts = parallel::map_slice(&records, record_violation);
    let mut kept = Vec::with_capacity(records.len());
    let mut report = CleaningReport::default();
    for (record, verdict) in records.into_iter().zip(verdicts) {
        match verdict {
            None => {
                report.kept += 1;
                kept.push(record);
            }
            Some(reason) => {
                match reason {
                    DropReason::NonLatin => report.dropped_nonlatin += 1,
                    DropReason::InvalidMarker => report.dropped_invalid_marker += 1,
                }
                report.dropped_ids.push(record.pair_id);
            }
        }
    }
    (kept, report)
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Deterministically split pairs into train/valid/test.
///
/// Pairs are shuffled by a Fisher-Yates pass seeded from `spec.seed`, then
/// cut at `floor(frac * N)` boundaries with the remainder going to train.
/// Both members of a pair always land in the same part.
pub fn split(records: &[PairedRecord], spec: &SplitSpec) -> Result<SplitData, CorpusError> {
    spec.validate()?;
    if records.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let n = records.len() as u64;
    let count = |frac: Ratio<u64>| ((frac * n).floor().to_integer()) as usize;
    let n_train = count(spec.train_frac);
    let n_valid = count(spec.valid_frac);
    let n_test = count(spec.test_frac);
    let remainder = records.len() - n_train - n_valid - n_test;

    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = rng::seeded(spec.seed);
    rng::fisher_yates(&mut order, &mut rng);

    let take = |range: std::ops::Range<usize>| -> Vec<PairedRecord> {
        order[range].iter().map(|&i| records[i].clone()).collect()
    };
    let train_end = n_train + remainder;
    Ok(SplitData {
        train: take(0..train_end),
        valid: take(train_end..train_end + n_valid),
        test: take(train_end + n_valid..train_end + n_valid + n_test),
        seed: spec.seed,
    })
}

/// Expand pairs into labelled documents: one HPC and one MGC per pair.
///
/// Document ids are `{pair_id}-hpc` / `{pair_id}-mgc`, so per-label counts
/// are equal by construction.
pub fn flatten(pairs: &[PairedRecord]) -> Vec<Document> {
    let mut docs = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        docs.push(Document {
            doc_id: format!("{}-hpc", pair.pair_id),
            pair_id: pair.pair_id.clone(),
            label: Label::Hpc,
            text: pair.hpc_text.clone(),
        });
        docs.push(Document {
            doc_id: format!("{}-mgc", pair.pair_id),
            pair_id: pair.pair_id.clone(),
            label: Label::Mgc,
            text: pair.mgc_text.clone(),
        });
    }
    docs
}

/// Check the split invariants: parts are pairwise disjoint and cover the
/// input id set exactly.
pub fn verify_split(input: &[PairedRecord], data: &SplitData) -> bool {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut total = 0usize;
    for part in [&data.train, &data.valid, &data.test] {
        for pair in part.iter() {
            if !seen.insert(pair.pair_id.as_str()) {
                return false;
            }
            total += 1;
        }
    }
    total == input.len() && input.iter().all(|p| seen.contains(p.pair_id.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, hpc: &str, mgc: &str) -> PairedRecord {
        PairedRecord {
            pair_id: id.to_string(),
            source: "test".to_string(),
            hpc_text: hpc.to_string(),
            mgc_text: mgc.to_string(),
            meta: BTreeMap::new(),
        }
    }

    fn pairs(n: usize) -> Vec<PairedRecord> {
        (0..n)
            .map(|i| pair(&format!("p{i:04}"), "Human text here.", "Machine text here."))
            .collect()
    }

    #[test]
    fn load_pairs_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"pair_id\":\"a\",\"source\":\"s\",\"hpc\":\"x\",\"mgc\":\"y\",\"meta\":{}}\n",
                "{\"pair_id\":\"b\",\"source\":\"s\",\"hpc\":\"x\",\"mgc\":\"y\",\"meta\":{}}\n",
                "{\"pair_id\":\"c\",\"source\":\"s\",\"hpc\":\"x\",\"mgc\":\"y\"}\n",
            ),
        )
        .unwrap();
        let records = load_pairs(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].pair_id, "c");
    }

    #[test]
    fn load_pairs_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"pair_id\":\"a\",\"source\":\"s\",\"hpc\":\"x\",\"mgc\":\"y\"}\n",
                "{\"pair_id\":\"b\",\"source\":\"s\",\"hpc\":\"x\"}\n",
            ),
        )
        .unwrap();
        match load_pairs(&path) {
            Err(CorpusError::Malformed {
                count, first_line, ..
            }) => {
                assert_eq!(count, 1);
                assert_eq!(first_line, 2);
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn load_pairs_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_pairs(&path).unwrap().is_empty());
    }

    #[test]
    fn load_pairs_rejects_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"pair_id\":\"a\",\"source\":\"s\",\"hpc\":\"x\",\"mgc\":\"y\"}\n",
                "{\"pair_id\":\"a\",\"source\":\"s\",\"hpc\":\"x\",\"mgc\":\"y\"}\n",
            ),
        )
        .unwrap();
        assert!(matches!(
            load_pairs(&path),
            Err(CorpusError::DuplicatePairId { .. })
        ));
    }

    #[test]
    fn clean_drops_emotional_markers() {
        let input = vec![
            pair("ok", "Plain text.", "Plain reply."),
            pair("yell", "Fine here.", "What a day!!!!!!"),
        ];
        let (kept, report) = clean(input);
        assert_eq!(kept.len(), 1);
        assert_eq!(report.kept, 1);
        assert_eq!(report.dropped_invalid_marker, 1);
        assert_eq!(report.dropped_ids, vec!["yell".to_string()]);
    }

    #[test]
    fn clean_drops_intra_word_markers() {
        let input = vec![pair("p", "This is su--per!", "fine")];
        let (kept, report) = clean(input);
        assert!(kept.is_empty());
        assert_eq!(report.dropped_invalid_marker, 1);
    }

    #[test]
    fn clean_keeps_plain_ascii_and_legal_intra_word_punctuation() {
        let input = vec![pair(
            "p",
            "Don't worry; the co-op opens at 9, e.g. on Mondays.",
            "It's U.S. policy -- really.",
        )];
        let (kept, report) = clean(input);
        assert_eq!(kept.len(), 1);
        assert_eq!(report.kept, 1);
        // Kept texts are never modified.
        assert_eq!(kept[0].mgc_text, "It's U.S. policy -- really.");
    }

    #[test]
    fn clean_drops_non_latin_scripts_but_keeps_accents() {
        let input = vec![
            pair("el", "Human side.", "Καλημέρα κόσμε."),
            pair("fr", "Déjà vu and crème brûlée.", "Fine."),
        ];
        let (kept, report) = clean(input);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].pair_id, "fr");
        assert_eq!(report.dropped_nonlatin, 1);
        assert_eq!(report.kept, 1);
    }

    #[test]
    fn clean_report_accounts_for_every_input() {
        let input = vec![
            pair("a", "ok", "ok"),
            pair("b", "!!!!!!", "ok"),
            pair("c", "日本語", "ok"),
            pair("d", "ok", "ok"),
        ];
        let n = input.len();
        let (_, report) = clean(input);
        assert_eq!(
            report.kept + report.dropped_nonlatin + report.dropped_invalid_marker,
            n
        );
    }

    #[test]
    fn split_sizes_10_pairs() {
        let data = split(&pairs(10), &SplitSpec::standard(42)).unwrap();
        assert_eq!(
            (data.train.len(), data.valid.len(), data.test.len()),
            (8, 1, 1)
        );
    }

    #[test]
    fn split_sizes_135_pairs_small_corpus_fractions() {
        let spec = SplitSpec::new(
            Ratio::new(6, 10),
            Ratio::new(2, 10),
            Ratio::new(2, 10),
            7,
        );
        let data = split(&pairs(135), &spec).unwrap();
        assert_eq!(
            (data.train.len(), data.valid.len(), data.test.len()),
            (81, 27, 27)
        );
    }

    #[test]
    fn split_is_deterministic() {
        let records = pairs(33);
        let spec = SplitSpec::standard(99);
        let a = split(&records, &spec).unwrap();
        let b = split(&records, &spec).unwrap();
        assert_eq!(a.manifest(), b.manifest());
        let c = split(&records, &SplitSpec::standard(100)).unwrap();
        assert_ne!(a.manifest(), c.manifest());
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let spec = SplitSpec::new(
            Ratio::new(8, 10),
            Ratio::new(1, 10),
            Ratio::new(2, 10),
            1,
        );
        assert!(matches!(
            split(&pairs(4), &spec),
            Err(CorpusError::BadFractions { .. })
        ));
    }

    #[test]
    fn split_parts_are_disjoint_and_cover_input() {
        let records = pairs(57);
        let spec = SplitSpec::new(Ratio::new(1, 2), Ratio::new(1, 4), Ratio::new(1, 4), 5);
        let data = split(&records, &spec).unwrap();
        assert!(verify_split(&records, &data));
    }

    #[test]
    fn flatten_balances_labels() {
        let docs = flatten(&pairs(27));
        assert_eq!(docs.len(), 54);
        let hpc = docs.iter().filter(|d| d.label == Label::Hpc).count();
        assert_eq!(hpc, 27);
        assert!(flatten(&[]).is_empty());
        let one = flatten(&pairs(1));
        assert_eq!(one[0].pair_id, one[1].pair_id);
        assert_eq!(one[0].label, Label::Hpc);
        assert_eq!(one[1].label, Label::Mgc);
    }
}
