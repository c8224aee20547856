//! Rule-based universal POS tagger.
//!
//! Token-level only (no context): closed-class lexicons first, then suffix
//! rules, then a noun default. The output tag set is the 11-tag universal
//! inventory {Det, Noun, Adj, Verb, Adp, Pron, Num, Conj, Prt, Adv, X}. The
//! tagger is deliberately simple (corpus statistics built on it are
//! comparative, not a detection signal) but every rule below is fixed and
//! documented so hand counts can reproduce its output exactly.

use serde::{Deserialize, Serialize};

/// Universal POS tags, in the report order used by the statistics tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PosTag {
    Det,
    Noun,
    Adj,
    Verb,
    Adp,
    Pron,
    Num,
    Conj,
    Prt,
    Adv,
    X,
}

/// Report row order (mirrors the statistics table layout).
pub const POS_TAG_ORDER: [PosTag; 11] = [
    PosTag::Det,
    PosTag::Noun,
    PosTag::Adj,
    PosTag::Verb,
    PosTag::Adp,
    PosTag::Pron,
    PosTag::Num,
    PosTag::Conj,
    PosTag::Prt,
    PosTag::Adv,
    PosTag::X,
];

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Det => "Det",
            PosTag::Noun => "Noun",
            PosTag::Adj => "Adj",
            PosTag::Verb => "Verb",
            PosTag::Adp => "Adp",
            PosTag::Pron => "Pron",
            PosTag::Num => "Num",
            PosTag::Conj => "Conj",
            PosTag::Prt => "Prt",
            PosTag::Adv => "Adv",
            PosTag::X => "X",
        }
    }
}

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "each", "every", "either", "neither",
    "both", "all", "some", "any", "no",
];

const PRONOUNS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my", "your",
    "his", "its", "our", "their", "mine", "yours", "hers", "ours", "theirs", "who", "whom",
    "whose", "which", "what", "myself", "yourself", "himself", "herself", "itself", "ourselves",
    "themselves", "someone", "anyone", "everyone",
];

const ADPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "by", "for", "with", "from", "into", "onto", "over", "under", "above",
    "below", "about", "between", "among", "through", "during", "against", "without", "within",
    "upon", "across", "behind", "beyond", "near", "around", "off", "out", "up", "down",
];

// Coordinating and subordinating conjunctions fold into one universal tag.
const CONJUNCTIONS: &[&str] = &[
    "and", "or", "but", "nor", "so", "yet", "because", "although", "though", "while", "whereas",
    "if", "unless", "since", "when", "whenever", "after", "before", "until",
];

// Negation, infinitival "to", and clitics.
const PARTICLES: &[&str] = &["not", "to", "n't", "'s"];

const VERBS: &[&str] = &[
    "be", "am", "is", "are", "was", "were", "been", "being", "have", "has", "had", "having",
    "do", "does", "did", "done", "doing", "will", "would", "shall", "should", "can", "could",
    "may", "might", "must", "go", "goes", "went", "gone", "get", "gets", "got", "make", "makes",
    "made", "say", "says", "said", "see", "sees", "saw", "seen", "run", "runs", "ran", "sit",
    "sits", "sat", "stand", "stands", "stood", "come", "comes", "came", "take", "takes", "took",
    "taken", "know", "knows", "knew", "known", "think", "thinks", "thought", "give", "gives",
    "gave", "given", "find", "finds", "found", "tell", "tells", "told", "keep", "keeps", "kept",
    "let", "lets", "put", "puts", "read", "reads", "write", "writes", "wrote", "written",
];

const ADVERBS: &[&str] = &[
    "very", "too", "also", "just", "now", "then", "here", "there", "never", "always", "often",
    "soon", "already", "still", "again", "once", "twice", "quite", "rather", "almost",
    "perhaps", "maybe", "however", "moreover", "therefore", "thus", "meanwhile", "instead",
    "anyway", "indeed", "well", "even", "away",
];

const ADJECTIVES: &[&str] = &[
    "good", "bad", "big", "small", "new", "old", "high", "low", "long", "short", "great",
    "little", "own", "other", "such", "same", "few", "many", "much", "more", "most", "less",
    "least", "wet", "dry", "cold", "hot", "warm", "red", "blue", "green", "black", "white",
    "early", "late", "full", "empty", "hard", "soft", "fast", "slow", "quick", "heavy", "light",
    "first", "last", "next",
];

// Frequent -ing/-ed endings that are not participles.
const SUFFIX_NOUN_EXCEPTIONS: &[&str] = &[
    "thing", "something", "anything", "everything", "nothing", "king", "ring", "spring",
    "string", "wing", "morning", "evening", "sibling", "ceiling", "building", "bed", "seed",
    "speed", "feed", "breed", "deed", "creed", "hundred",
];

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "twenty", "thirty", "forty", "fifty", "hundred", "thousand", "million",
    "billion",
];

fn looks_numeric(token: &str) -> bool {
    let mut saw_digit = false;
    for c in token.chars() {
        if c.is_ascii_digit() {
            saw_digit = true;
        } else if !matches!(c, '.' | ',' | '-' | '%') {
            return false;
        }
    }
    saw_digit
}

fn is_wordlike(token: &str) -> bool {
    token
        .chars()
        .all(|c| c.is_alphabetic() || matches!(c, '-' | '\'' | '\u{2019}'))
}

const ADJ_SUFFIXES: &[&str] = &["ous", "ful", "ive", "able", "ible", "ic", "less", "ish"];

/// Tag one token. The token is lowercased internally; callers pass word
/// tokens (bare punctuation is not expected here and would tag as X).
pub fn tag_token(token: &str) -> PosTag {
    let lower = token.to_lowercase();
    let t = lower.as_str();
    if looks_numeric(t) || NUMBER_WORDS.contains(&t) {
        return PosTag::Num;
    }
    if DETERMINERS.contains(&t) {
        return PosTag::Det;
    }
    if PRONOUNS.contains(&t) {
        return PosTag::Pron;
    }
    if ADPOSITIONS.contains(&t) {
        return PosTag::Adp;
    }
    if CONJUNCTIONS.contains(&t) {
        return PosTag::Conj;
    }
    if PARTICLES.contains(&t) {
        return PosTag::Prt;
    }
    if VERBS.contains(&t) {
        return PosTag::Verb;
    }
    if ADVERBS.contains(&t) {
        return PosTag::Adv;
    }
    if ADJECTIVES.contains(&t) {
        return PosTag::Adj;
    }
    if SUFFIX_NOUN_EXCEPTIONS.contains(&t) {
        return PosTag::Noun;
    }
    if is_wordlike(t) {
        if t.len() > 3 && (t.ends_with("ing") || t.ends_with("ed")) {
            return PosTag::Verb;
        }
        if t.len() > 2 && t.ends_with("ly") {
            return PosTag::Adv;
        }
        // require a stem of >= 3 chars so "table"/"cable" stay nouns
        if ADJ_SUFFIXES
            .iter()
            .any(|s| t.len() >= s.len() + 3 && t.ends_with(s))
        {
            return PosTag::Adj;
        }
        return PosTag::Noun;
    }
    PosTag::X
}

/// True when the token counts as a present participle for the statistics
/// tables: ends in -ing and tags as Verb.
pub fn is_ing_participle(token: &str) -> bool {
    token.to_lowercase().ends_with("ing") && tag_token(token) == PosTag::Verb
}

/// True when the token counts as a past participle: ends in -ed and tags as
/// Verb.
pub fn is_ed_participle(token: &str) -> bool {
    token.to_lowercase().ends_with("ed") && tag_token(token) == PosTag::Verb
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_classes_win_over_suffixes() {
        assert_eq!(tag_token("during"), PosTag::Adp); // not an -ing verb
        assert_eq!(tag_token("the"), PosTag::Det);
        assert_eq!(tag_token("The"), PosTag::Det);
        assert_eq!(tag_token("because"), PosTag::Conj);
        assert_eq!(tag_token("to"), PosTag::Prt);
    }

    #[test]
    fn suffix_rules() {
        assert_eq!(tag_token("sleeping"), PosTag::Verb);
        assert_eq!(tag_token("walked"), PosTag::Verb);
        assert_eq!(tag_token("deeply"), PosTag::Adv);
        assert_eq!(tag_token("famous"), PosTag::Adj);
        assert_eq!(tag_token("king"), PosTag::Noun); // exception list
        assert_eq!(tag_token("bed"), PosTag::Noun);
    }

    #[test]
    fn numbers_and_defaults() {
        assert_eq!(tag_token("42"), PosTag::Num);
        assert_eq!(tag_token("3.5"), PosTag::Num);
        assert_eq!(tag_token("seven"), PosTag::Num);
        assert_eq!(tag_token("table"), PosTag::Noun);
        assert_eq!(tag_token("dog's"), PosTag::Noun);
        assert_eq!(tag_token("x9z"), PosTag::X);
    }

    #[test]
    fn participle_predicates() {
        assert!(is_ing_participle("running"));
        assert!(!is_ing_participle("king"));
        assert!(!is_ing_participle("during"));
        assert!(is_ed_participle("stopped"));
        assert!(!is_ed_participle("bed"));
    }
}
