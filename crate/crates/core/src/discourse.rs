//! Discourse-code sequences: PDTB-style sense labels between consecutive
//! sentences, produced by pluggable taggers.
//!
//! Every document maps to a code sequence of exactly one code per sentence.
//! Position 0 is always the START code (rendered "[CLS]" in code files);
//! position i >= 1 carries the relation between sentence i-1 and sentence i.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{self, NetError};
use crate::rng;
use crate::util;

/// Rendered name of the START code in code files.
pub const START_CODE: &str = "[CLS]";
/// Rendered name of the UNK code in code files.
pub const UNK_CODE: &str = "[UNK]";

/// A PDTB-style sense: a level-1 class plus an optional level-2 subtype,
/// rendered "Class.Subtype".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SenseLabel {
    pub class: String,
    pub subtype: Option<String>,
}

impl SenseLabel {
    pub fn new(class: &str, subtype: Option<&str>) -> SenseLabel {
        SenseLabel {
            class: class.to_string(),
            subtype: subtype.map(str::to_string),
        }
    }

    pub fn render(&self) -> String {
        match &self.subtype {
            Some(sub) => format!("{}.{}", self.class, sub),
            None => self.class.clone(),
        }
    }
}

/// Which PDTB sense inventory a vocabulary follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PdtbVersion {
    #[serde(rename = "PDTB2")]
    Pdtb2,
    #[serde(rename = "PDTB3")]
    Pdtb3,
}

impl std::fmt::Display for PdtbVersion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PdtbVersion::Pdtb2 => f.write_str("PDTB2"),
            PdtbVersion::Pdtb3 => f.write_str("PDTB3"),
        }
    }
}

/// The four level-1 classes shared by both inventories.
const LEVEL1: &[&str] = &["Temporal", "Contingency", "Comparison", "Expansion"];

/// PDTB 2.0 level-2 sense types (16).
const PDTB2_LEVEL2: &[(&str, &str)] = &[
    ("Temporal", "Asynchronous"),
    ("Temporal", "Synchrony"),
    ("Contingency", "Cause"),
    ("Contingency", "Pragmatic cause"),
    ("Contingency", "Condition"),
    ("Contingency", "Pragmatic condition"),
    ("Comparison", "Contrast"),
    ("Comparison", "Pragmatic contrast"),
    ("Comparison", "Concession"),
    ("Comparison", "Pragmatic concession"),
    ("Expansion", "Conjunction"),
    ("Expansion", "Instantiation"),
    ("Expansion", "Restatement"),
    ("Expansion", "Alternative"),
    ("Expansion", "Exception"),
    ("Expansion", "List"),
];

/// PDTB 3.0 level-2 sense types (22).
const PDTB3_LEVEL2: &[(&str, &str)] = &[
    ("Temporal", "Asynchronous"),
    ("Temporal", "Synchronous"),
    ("Contingency", "Cause"),
    ("Contingency", "Cause+Belief"),
    ("Contingency", "Cause+SpeechAct"),
    ("Contingency", "Condition"),
    ("Contingency", "Condition+SpeechAct"),
    ("Contingency", "Negative-condition"),
    ("Contingency", "Negative-condition+SpeechAct"),
    ("Contingency", "Purpose"),
    ("Comparison", "Concession"),
    ("Comparison", "Concession+SpeechAct"),
    ("Comparison", "Contrast"),
    ("Comparison", "Similarity"),
    ("Expansion", "Conjunction"),
    ("Expansion", "Disjunction"),
    ("Expansion", "Equivalence"),
    ("Expansion", "Exception"),
    ("Expansion", "Instantiation"),
    ("Expansion", "Level-of-detail"),
    ("Expansion", "Manner"),
    ("Expansion", "Substitution"),
];

/// An ordered code vocabulary: START at index 0, UNK at index 1, then the
/// level-1 classes, then the level-2 senses of the chosen inventory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodeVocab {
    pub version: PdtbVersion,
    labels: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl CodeVocab {
    pub const START: u32 = 0;
    pub const UNK: u32 = 1;

    /// Build the built-in vocabulary for a PDTB version.
    pub fn builtin(version: PdtbVersion) -> CodeVocab {
        let level2 = match version {
            PdtbVersion::Pdtb2 => PDTB2_LEVEL2,
            PdtbVersion::Pdtb3 => PDTB3_LEVEL2,
        };
        let mut labels = vec![START_CODE.to_string(), UNK_CODE.to_string()];
        labels.extend(LEVEL1.iter().map(|c| c.to_string()));
        labels.extend(
            level2
                .iter()
                .map(|(class, sub)| SenseLabel::new(class, Some(sub)).render()),
        );
        CodeVocab::from_labels(version, labels)
    }

    fn from_labels(version: PdtbVersion, labels: Vec<String>) -> CodeVocab {
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.to_lowercase(), i as u32))
            .collect();
        CodeVocab {
            version,
            labels,
            index,
        }
    }

    /// Load a custom vocabulary: JSON `{"version": str, "labels": [str...]}`.
    /// START and UNK are prepended if missing.
    pub fn load(path: &Path) -> Result<CodeVocab, TagError> {
        #[derive(Deserialize)]
        struct File {
            version: String,
            labels: Vec<String>,
        }
        let raw = std::fs::read_to_string(path).map_err(|e| TagError::VocabFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: File = serde_json::from_str(&raw).map_err(|e| TagError::VocabFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let version = match file.version.to_uppercase().as_str() {
            "PDTB2" | "2.0" | "2" => PdtbVersion::Pdtb2,
            "PDTB3" | "3.0" | "3" => PdtbVersion::Pdtb3,
            other => {
                return Err(TagError::VocabFile {
                    path: path.display().to_string(),
                    message: format!("unknown version {other:?}"),
                })
            }
        };
        let mut labels = vec![START_CODE.to_string(), UNK_CODE.to_string()];
        labels.extend(
            file.labels
                .into_iter()
                .filter(|l| l != START_CODE && l != UNK_CODE),
        );
        Ok(CodeVocab::from_labels(version, labels))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    /// Case-insensitive lookup; absent labels map to UNK, never an error.
    pub fn id_of(&self, rendered: &str) -> u32 {
        let key = rendered.to_lowercase();
        if key == "start" || key == "[cls]" || key == "cls" {
            return Self::START;
        }
        self.index.get(&key).copied().unwrap_or(Self::UNK)
    }

    /// Rebuild lookup tables (after deserialization via serde).
    pub fn reindex(self) -> CodeVocab {
        CodeVocab::from_labels(self.version, self.labels)
    }
}

/// Per-document code sequence; one entry per sentence, START first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSequence {
    pub doc_id: String,
    pub codes: Vec<u32>,
}

#[derive(Debug, Error)]
pub enum TagError {
    #[error("document {doc_id:?} has no sentences")]
    NoSentences { doc_id: String },
    #[error("tagger failed on document {doc_id:?} at sentence {index}: {message}")]
    TaggerFailure {
        doc_id: String,
        index: usize,
        message: String,
    },
    #[error("no stored codes for document {doc_id:?}")]
    MissingDoc { doc_id: String },
    #[error("document {doc_id:?}: stored {stored} codes but document has {sentences} sentences")]
    LengthMismatch {
        doc_id: String,
        stored: usize,
        sentences: usize,
    },
    #[error("code vocab file error: {path}: {message}")]
    VocabFile { path: String, message: String },
    #[error("codes file error: {0}")]
    CodesFile(#[from] util::JsonlError),
    #[error("remote tagger: {0}")]
    Remote(#[from] NetError),
    #[error("remote tagger returned {got} senses for {expected} pairs")]
    RemoteLength { expected: usize, got: usize },
}

/// A discourse tagger: produces the full code sequence for a document
/// (START included). Implementations must be safe to call concurrently.
pub trait Tagger: Send + Sync {
    fn vocab(&self) -> &CodeVocab;

    /// Codes for the document, one per sentence, `codes[0] == START`.
    fn codes_for(&self, doc_id: &str, sentences: &[String]) -> Result<Vec<u32>, TagError>;
}

/// Tag a document: delegates to the tagger and enforces the sequence
/// invariants (non-empty, START first, one code per sentence, all codes in
/// vocabulary).
pub fn tag_document(
    doc_id: &str,
    sentences: &[String],
    tagger: &dyn Tagger,
) -> Result<CodeSequence, TagError> {
    if sentences.is_empty() {
        return Err(TagError::NoSentences {
            doc_id: doc_id.to_string(),
        });
    }
    let codes = tagger.codes_for(doc_id, sentences)?;
    if codes.len() != sentences.len() {
        return Err(TagError::LengthMismatch {
            doc_id: doc_id.to_string(),
            stored: codes.len(),
            sentences: sentences.len(),
        });
    }
    debug_assert_eq!(codes[0], CodeVocab::START);
    debug_assert!(codes.iter().all(|&c| (c as usize) < tagger.vocab().len()));
    Ok(CodeSequence {
        doc_id: doc_id.to_string(),
        codes,
    })
}

// ---------------------------------------------------------------------------
// Heuristic tagger
// ---------------------------------------------------------------------------

/// Connective-driven heuristic tagger.
///
/// Classifies each adjacent sentence pair by the second sentence's initial
/// connective. The mapping mirrors observed sense-classifier behaviour on
/// explicit connectives (including "but" mapping to Contingency.Cause);
/// connective-free pairs default to the elaboration sense.
pub struct HeuristicTagger {
    vocab: CodeVocab,
    instantiation: u32,
    cause: u32,
    concession: u32,
    asynchronous: u32,
    default: u32,
}

const INSTANTIATION_CONNECTIVES: &[&str] = &["for example", "for instance"];
const CAUSE_CONNECTIVES: &[&str] = &["so", "because", "therefore", "thus", "but"];
const CONCESSION_CONNECTIVES: &[&str] = &["however", "although", "while", "whereas"];
const TEMPORAL_CONNECTIVES: &[&str] = &["then", "before", "after", "when", "meanwhile"];

impl HeuristicTagger {
    pub fn new(vocab: CodeVocab) -> HeuristicTagger {
        // Level-of-detail exists only in the 3.0 inventory; 2.0 uses
        // Restatement for the same default role.
        let default = match vocab.version {
            PdtbVersion::Pdtb3 => vocab.id_of("Expansion.Level-of-detail"),
            PdtbVersion::Pdtb2 => vocab.id_of("Expansion.Restatement"),
        };
        HeuristicTagger {
            instantiation: vocab.id_of("Expansion.Instantiation"),
            cause: vocab.id_of("Contingency.Cause"),
            concession: vocab.id_of("Comparison.Concession"),
            asynchronous: vocab.id_of("Temporal.Asynchronous"),
            default,
            vocab,
        }
    }

    /// The sense id for a sentence pair: a pure function of the second
    /// sentence's sentence-initial connective, case-insensitive.
    pub fn tag_pair(&self, _first: &str, second: &str) -> u32 {
        let lead = leading_words(second, 2);
        let one = lead.first().map(String::as_str).unwrap_or("");
        let two = lead.join(" ");
        if INSTANTIATION_CONNECTIVES.contains(&two.as_str()) {
            self.instantiation
        } else if CAUSE_CONNECTIVES.contains(&one) {
            self.cause
        } else if CONCESSION_CONNECTIVES.contains(&one) {
            self.concession
        } else if TEMPORAL_CONNECTIVES.contains(&one) {
            self.asynchronous
        } else {
            self.default
        }
    }
}

/// First `n` lowercased word tokens of a sentence (quotes and punctuation
/// stripped).
fn leading_words(sentence: &str, n: usize) -> Vec<String> {
    crate::textproc::word_tokens(sentence)
        .into_iter()
        .take(n)
        .map(|t| t.to_lowercase())
        .collect()
}

impl Tagger for HeuristicTagger {
    fn vocab(&self) -> &CodeVocab {
        &self.vocab
    }

    fn codes_for(&self, _doc_id: &str, sentences: &[String]) -> Result<Vec<u32>, TagError> {
        let mut codes = Vec::with_capacity(sentences.len());
        codes.push(CodeVocab::START);
        for pair in sentences.windows(2) {
            codes.push(self.tag_pair(&pair[0], &pair[1]));
        }
        Ok(codes)
    }
}

// ---------------------------------------------------------------------------
// Precomputed / file tagger
// ---------------------------------------------------------------------------

/// Serialized per-document codes: `{"doc_id": str, "codes": [str...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodesRecord {
    pub doc_id: String,
    pub codes: Vec<String>,
}

/// Tagger backed by an in-memory doc_id -> codes map (the substitute for an
/// external pretrained sense classifier).
pub struct PrecomputedTagger {
    vocab: CodeVocab,
    codes: HashMap<String, Vec<u32>>,
}

impl PrecomputedTagger {
    pub fn new(vocab: CodeVocab, codes: HashMap<String, Vec<u32>>) -> PrecomputedTagger {
        PrecomputedTagger { vocab, codes }
    }

    /// Load from a codes JSONL file. Unknown sense strings map to UNK.
    pub fn from_file(path: &Path, vocab: CodeVocab) -> Result<PrecomputedTagger, TagError> {
        let records: Vec<CodesRecord> = util::read_jsonl(path)?;
        Ok(PrecomputedTagger::from_records(&records, vocab))
    }

    pub fn from_records(records: &[CodesRecord], vocab: CodeVocab) -> PrecomputedTagger {
        let codes = records
            .iter()
            .map(|r| {
                (
                    r.doc_id.clone(),
                    r.codes.iter().map(|c| vocab.id_of(c)).collect(),
                )
            })
            .collect();
        PrecomputedTagger { vocab, codes }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &String> {
        self.codes.keys()
    }

    /// Reassign whole code sequences across documents at random (Fisher-
    /// Yates over the sequence list), cycling codes to fit each document's
    /// sentence count. Destroys any code/class association while keeping
    /// every sequence well-formed; used as a no-signal control.
    pub fn shuffled(&self, seed: u64) -> PrecomputedTagger {
        let mut ids: Vec<&String> = self.codes.keys().collect();
        ids.sort(); // deterministic base order before the shuffle
        let mut sequences: Vec<&Vec<u32>> = ids.iter().map(|id| &self.codes[*id]).collect();
        rng::fisher_yates(&mut sequences, &mut rng::seeded(seed));

        let mut reassigned = HashMap::new();
        for (id, donor) in ids.iter().zip(sequences) {
            let want = self.codes[*id].len();
            let body: Vec<u32> = donor.iter().copied().filter(|&c| c != CodeVocab::START).collect();
            let mut codes = Vec::with_capacity(want);
            codes.push(CodeVocab::START);
            for k in 0..want.saturating_sub(1) {
                let code = if body.is_empty() {
                    CodeVocab::UNK
                } else {
                    body[k % body.len()]
                };
                codes.push(code);
            }
            reassigned.insert((*id).clone(), codes);
        }
        PrecomputedTagger::new(self.vocab.clone(), reassigned)
    }
}

impl Tagger for PrecomputedTagger {
    fn vocab(&self) -> &CodeVocab {
        &self.vocab
    }

    fn codes_for(&self, doc_id: &str, sentences: &[String]) -> Result<Vec<u32>, TagError> {
        let stored = self.codes.get(doc_id).ok_or_else(|| TagError::MissingDoc {
            doc_id: doc_id.to_string(),
        })?;
        if stored.len() != sentences.len() {
            return Err(TagError::LengthMismatch {
                doc_id: doc_id.to_string(),
                stored: stored.len(),
                sentences: sentences.len(),
            });
        }
        Ok(stored.clone())
    }
}

/// Tagger that assigns the same code to every pair; a no-signal control.
pub struct ConstantTagger {
    vocab: CodeVocab,
    code: u32,
}

impl ConstantTagger {
    pub fn new(vocab: CodeVocab, code: u32) -> ConstantTagger {
        ConstantTagger { vocab, code }
    }
}

impl Tagger for ConstantTagger {
    fn vocab(&self) -> &CodeVocab {
        &self.vocab
    }

    fn codes_for(&self, _doc_id: &str, sentences: &[String]) -> Result<Vec<u32>, TagError> {
        let mut codes = vec![self.code; sentences.len()];
        codes[0] = CodeVocab::START;
        Ok(codes)
    }
}

// ---------------------------------------------------------------------------
// Remote tagger
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TagRequestPair<'a> {
    arg1: &'a str,
    arg2: &'a str,
}

#[derive(Serialize)]
struct TagRequest<'a> {
    pairs: Vec<TagRequestPair<'a>>,
}

#[derive(Deserialize)]
struct TagResponse {
    senses: Vec<String>,
}

/// Client for an externally hosted sense classifier.
///
/// Wire protocol: `POST {endpoint}/v1/discourse/tag` with
/// `{"pairs":[{"arg1":...,"arg2":...}]}`, answered by `{"senses":[...]}` of
/// equal length. Requests are batched, retried 3 times with exponential
/// backoff, and bounded to `max_inflight` concurrent calls.
pub struct RemoteTagger {
    vocab: CodeVocab,
    client: net::RetryingClient,
    batch_size: usize,
    max_inflight: usize,
}

impl RemoteTagger {
    pub fn new(
        endpoint: &str,
        timeout: Duration,
        max_inflight: usize,
        vocab: CodeVocab,
    ) -> RemoteTagger {
        RemoteTagger {
            vocab,
            client: net::RetryingClient::new(
                format!("{}/v1/discourse/tag", endpoint.trim_end_matches('/')),
                timeout,
            ),
            batch_size: 32,
            max_inflight: max_inflight.max(1),
        }
    }
}

impl Tagger for RemoteTagger {
    fn vocab(&self) -> &CodeVocab {
        &self.vocab
    }

    fn codes_for(&self, _doc_id: &str, sentences: &[String]) -> Result<Vec<u32>, TagError> {
        let pairs: Vec<(usize, usize)> = (1..sentences.len()).map(|i| (i - 1, i)).collect();
        let batches: Vec<&[(usize, usize)]> = pairs.chunks(self.batch_size.max(1)).collect();

        let responses = net::bounded_map(&batches, self.max_inflight, |batch| {
            let request = TagRequest {
                pairs: batch
                    .iter()
                    .map(|&(a, b)| TagRequestPair {
                        arg1: &sentences[a],
                        arg2: &sentences[b],
                    })
                    .collect(),
            };
            let response: TagResponse = self.client.post_json(&request)?;
            if response.senses.len() != batch.len() {
                return Err(NetError::ResponseShape {
                    expected: batch.len(),
                    got: response.senses.len(),
                });
            }
            Ok(response.senses)
        });

        let mut codes = Vec::with_capacity(sentences.len());
        codes.push(CodeVocab::START);
        for result in responses {
            for sense in result? {
                codes.push(self.vocab.id_of(&sense));
            }
        }
        Ok(codes)
    }
}

/// Render a code sequence to strings for the codes JSONL format.
pub fn render_codes(seq: &CodeSequence, vocab: &CodeVocab) -> CodesRecord {
    CodesRecord {
        doc_id: seq.doc_id.clone(),
        codes: seq
            .codes
            .iter()
            .map(|&c| vocab.label(c).unwrap_or(UNK_CODE).to_string())
            .collect(),
    }
}
