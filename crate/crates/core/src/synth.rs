//! Synthetic validation corpora.
//!
//! Two generators back the end-to-end checks:
//!
//! - [`discourse_corpus`]: classes differ only in their discourse-code
//!   sequences. Sentences are generated with class-specific connectives
//!   (cause-triggering for MGC, instantiation-triggering for HPC), tagged
//!   with the heuristic tagger, and the connectives are then stripped from
//!   the stored text. Content words are sampled from one shared
//!   distribution, so the only class signal left in the artifact is the
//!   code sequence delivered through the precomputed-codes channel.
//! - [`prefix_style_corpus`]: classes differ only in surface style. MGC is
//!   HPC with "Moreover," prepended to every sentence; the style-mimic
//!   pipeline learns to strip it.

use rand::Rng;

use crate::corpus::PairedRecord;
use crate::discourse::{
    render_codes, tag_document, CodeVocab, CodesRecord, HeuristicTagger, PdtbVersion,
    PrecomputedTagger, Tagger,
};
use crate::rng::{self, SeededRng};

/// Shared content vocabulary; nothing here collides with the heuristic
/// tagger's connectives or the sentence splitter's abbreviation list.
pub const CONTENT_WORDS: &[&str] = &[
    "acorn", "basil", "cedar", "dahlia", "elm", "fennel", "ginger", "hazel", "iris", "juniper",
    "kale", "laurel", "maple", "nettle", "oak", "poplar", "quince", "rowan", "sage", "thyme",
    "umber", "violet", "walnut", "yarrow", "zinnia", "amber", "birch", "clover", "dill", "ember",
    "flax", "garnet", "heather", "indigo", "jasper", "kelp", "linden", "moss", "nutmeg", "olive",
];

const MGC_CONNECTIVES: &[&str] = &["So", "Because", "Therefore", "Thus", "But"];
const HPC_CONNECTIVES: &[&str] = &["For example", "For instance"];

#[derive(Debug, Clone)]
pub struct DiscourseCorpusSpec {
    pub pairs: usize,
    pub sentences_per_doc: (usize, usize),
    pub words_per_sentence: (usize, usize),
    pub seed: u64,
}

impl DiscourseCorpusSpec {
    pub fn default_with_seed(seed: u64) -> DiscourseCorpusSpec {
        DiscourseCorpusSpec {
            pairs: 1000,
            sentences_per_doc: (5, 8),
            words_per_sentence: (4, 7),
            seed,
        }
    }
}

/// Pairs plus the per-document code records that carry the class signal.
#[derive(Debug, Clone)]
pub struct DiscourseCorpus {
    pub pairs: Vec<PairedRecord>,
    pub codes: Vec<CodesRecord>,
}

impl DiscourseCorpus {
    /// The precomputed-codes tagger over this corpus (PDTB 3.0 vocabulary).
    pub fn tagger(&self) -> PrecomputedTagger {
        PrecomputedTagger::from_records(&self.codes, CodeVocab::builtin(PdtbVersion::Pdtb3))
    }
}

fn sample_words(rng: &mut SeededRng, range: (usize, usize)) -> Vec<&'static str> {
    let count = rng.random_range(range.0..=range.1);
    (0..count)
        .map(|_| CONTENT_WORDS[rng.random_range(0..CONTENT_WORDS.len())])
        .collect()
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// One document: sentences with class connectives, its codes from the
/// heuristic tagger, then the stored text with connectives stripped.
fn discourse_document(
    rng: &mut SeededRng,
    spec: &DiscourseCorpusSpec,
    connectives: &[&str],
    tagger: &HeuristicTagger,
    doc_id: &str,
) -> (String, CodesRecord) {
    let sentence_count = rng.random_range(spec.sentences_per_doc.0..=spec.sentences_per_doc.1);
    let mut with_connective = Vec::with_capacity(sentence_count);
    let mut stripped = Vec::with_capacity(sentence_count);
    for _ in 0..sentence_count {
        let connective = connectives[rng.random_range(0..connectives.len())];
        let words = sample_words(rng, spec.words_per_sentence);
        with_connective.push(format!("{connective}, {}.", words.join(" ")));
        stripped.push(format!("{}{}.", capitalize(words[0]), words[1..].iter().map(|w| format!(" {w}")).collect::<String>()));
    }
    let seq = tag_document(doc_id, &with_connective, tagger).expect("non-empty synthetic doc");
    let record = render_codes(&seq, tagger.vocab());
    (stripped.join(" "), record)
}

/// Generate the discourse-separable corpus: `spec.pairs` pairs, hence
/// `2 * spec.pairs` documents.
pub fn discourse_corpus(spec: &DiscourseCorpusSpec) -> DiscourseCorpus {
    let tagger = HeuristicTagger::new(CodeVocab::builtin(PdtbVersion::Pdtb3));
    let mut rng = rng::seeded(spec.seed);
    let mut pairs = Vec::with_capacity(spec.pairs);
    let mut codes = Vec::with_capacity(spec.pairs * 2);
    for i in 0..spec.pairs {
        let pair_id = format!("synth-{i:05}");
        let (hpc_text, hpc_codes) = discourse_document(
            &mut rng,
            spec,
            HPC_CONNECTIVES,
            &tagger,
            &format!("{pair_id}-hpc"),
        );
        let (mgc_text, mgc_codes) = discourse_document(
            &mut rng,
            spec,
            MGC_CONNECTIVES,
            &tagger,
            &format!("{pair_id}-mgc"),
        );
        pairs.push(PairedRecord {
            pair_id,
            source: "synth-discourse".to_string(),
            hpc_text,
            mgc_text,
            meta: Default::default(),
        });
        codes.push(hpc_codes);
        codes.push(mgc_codes);
    }
    DiscourseCorpus { pairs, codes }
}

#[derive(Debug, Clone)]
pub struct PrefixStyleCorpusSpec {
    pub pairs: usize,
    pub sentences_per_doc: (usize, usize),
    pub words_per_sentence: (usize, usize),
    /// Number of distinct content words drawn from [`CONTENT_WORDS`].
    pub vocab_words: usize,
    pub seed: u64,
}

impl PrefixStyleCorpusSpec {
    pub fn default_with_seed(seed: u64) -> PrefixStyleCorpusSpec {
        PrefixStyleCorpusSpec {
            pairs: 1200,
            sentences_per_doc: (2, 3),
            words_per_sentence: (4, 7),
            vocab_words: 24,
            seed,
        }
    }
}

/// The style prefix every MGC sentence carries.
pub const STYLE_PREFIX: &str = "Moreover,";

/// Generate the prefix-style corpus: HPC documents of plain sentences, MGC
/// the same sentences with "Moreover," prepended to every one.
pub fn prefix_style_corpus(spec: &PrefixStyleCorpusSpec) -> Vec<PairedRecord> {
    let vocab = &CONTENT_WORDS[..spec.vocab_words.min(CONTENT_WORDS.len())];
    let mut rng = rng::seeded(spec.seed);
    (0..spec.pairs)
        .map(|i| {
            let sentence_count =
                rng.random_range(spec.sentences_per_doc.0..=spec.sentences_per_doc.1);
            let mut hpc_sentences = Vec::with_capacity(sentence_count);
            for _ in 0..sentence_count {
                let count = rng.random_range(spec.words_per_sentence.0..=spec.words_per_sentence.1);
                let words: Vec<&str> = (0..count)
                    .map(|_| vocab[rng.random_range(0..vocab.len())])
                    .collect();
                hpc_sentences.push(format!(
                    "{}{}.",
                    capitalize(words[0]),
                    words[1..].iter().map(|w| format!(" {w}")).collect::<String>()
                ));
            }
            let mgc_sentences: Vec<String> = hpc_sentences
                .iter()
                .map(|s| format!("{STYLE_PREFIX} {s}"))
                .collect();
            PairedRecord {
                pair_id: format!("style-{i:05}"),
                source: "synth-style".to_string(),
                hpc_text: hpc_sentences.join(" "),
                mgc_text: mgc_sentences.join(" "),
                meta: Default::default(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{flatten, Label};
    use crate::textproc::split_sentences;

    #[test]
    fn discourse_corpus_codes_align_with_stored_sentences() {
        let corpus = discourse_corpus(&DiscourseCorpusSpec {
            pairs: 20,
            ..DiscourseCorpusSpec::default_with_seed(9)
        });
        assert_eq!(corpus.pairs.len(), 20);
        assert_eq!(corpus.codes.len(), 40);
        let tagger = corpus.tagger();
        for doc in flatten(&corpus.pairs) {
            let sentences: Vec<String> = split_sentences(&doc.text)
                .into_iter()
                .map(|s| s.text)
                .collect();
            // the stored text must re-split into exactly the tagged count
            let codes = tagger.codes_for(&doc.doc_id, &sentences).unwrap();
            assert_eq!(codes.len(), sentences.len());
        }
    }

    #[test]
    fn discourse_corpus_classes_differ_only_in_codes() {
        let corpus = discourse_corpus(&DiscourseCorpusSpec {
            pairs: 30,
            ..DiscourseCorpusSpec::default_with_seed(10)
        });
        let vocab = CodeVocab::builtin(PdtbVersion::Pdtb3);
        let cause = vocab.label(vocab.id_of("Contingency.Cause")).unwrap().to_string();
        let inst = vocab
            .label(vocab.id_of("Expansion.Instantiation"))
            .unwrap()
            .to_string();
        for record in &corpus.codes {
            let expected = if record.doc_id.ends_with("-mgc") {
                &cause
            } else {
                &inst
            };
            for code in &record.codes[1..] {
                assert_eq!(code, expected, "doc {}", record.doc_id);
            }
        }
        // no connective word survives in the stored text
        for pair in &corpus.pairs {
            for text in [&pair.hpc_text, &pair.mgc_text] {
                let lower = text.to_lowercase();
                for connective in ["so,", "because", "therefore", "thus", "but", "for example", "for instance"] {
                    assert!(
                        !lower.contains(connective),
                        "connective {connective:?} leaked into {text:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn prefix_corpus_mgc_is_hpc_with_prefix() {
        let pairs = prefix_style_corpus(&PrefixStyleCorpusSpec {
            pairs: 10,
            ..PrefixStyleCorpusSpec::default_with_seed(3)
        });
        for pair in &pairs {
            let hpc_sentences = split_sentences(&pair.hpc_text);
            let mgc_sentences = split_sentences(&pair.mgc_text);
            assert_eq!(hpc_sentences.len(), mgc_sentences.len());
            for (h, m) in hpc_sentences.iter().zip(&mgc_sentences) {
                assert_eq!(m.text, format!("{STYLE_PREFIX} {}", h.text));
            }
        }
        let docs = flatten(&pairs);
        assert_eq!(docs.iter().filter(|d| d.label == Label::Hpc).count(), 10);
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = DiscourseCorpusSpec {
            pairs: 5,
            ..DiscourseCorpusSpec::default_with_seed(77)
        };
        let a = discourse_corpus(&spec);
        let b = discourse_corpus(&spec);
        assert_eq!(a.pairs, b.pairs);
        let spec = PrefixStyleCorpusSpec {
            pairs: 5,
            ..PrefixStyleCorpusSpec::default_with_seed(77)
        };
        assert_eq!(prefix_style_corpus(&spec), prefix_style_corpus(&spec));
    }
}
