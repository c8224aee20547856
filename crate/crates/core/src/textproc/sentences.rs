//! Rule-based sentence segmentation.
//!
//! A boundary is a run of terminal punctuation (`.`, `!`, `?`, optionally
//! followed by closing quotes/brackets) whose next non-space character is an
//! uppercase letter or an opening quote, unless the word before a `.` is on
//! the abbreviation stop-list.

/// Abbreviations whose trailing period never ends a sentence.
const ABBREVIATIONS: &[&str] = &["mr.", "dr.", "e.g.", "i.e.", "etc.", "vs.", "u.s."];

/// A sentence as byte offsets into the source plus the trimmed text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201D}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201C}' | '\u{2018}')
}

/// The word ending at byte `end` (exclusive), including any internal dots,
/// lowercased. Used for the abbreviation check, so "U.S." comes back as
/// "u.s.".
fn word_before(text: &str, end: usize) -> String {
    let mut start = end;
    for (idx, c) in text[..end].char_indices().rev() {
        if c.is_whitespace() {
            break;
        }
        start = idx;
    }
    text[start..end].to_lowercase()
}

/// Split text into sentence spans.
///
/// Spans are trimmed of surrounding whitespace, ordered, non-overlapping,
/// and never empty; text with no qualifying boundary comes back as a single
/// span. Offsets are byte offsets into `text`.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut boundaries: Vec<usize> = Vec::new(); // byte offsets where a sentence ends (exclusive)

    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        // absorb the full terminal run plus closing quotes: "?!", ".)", etc.
        let mut j = i;
        while j + 1 < chars.len() && (is_terminal(chars[j + 1].1) || is_closer(chars[j + 1].1)) {
            j += 1;
        }
        let end_byte = if j + 1 < chars.len() {
            chars[j + 1].0
        } else {
            text.len()
        };

        // next non-whitespace character after the run
        let mut k = j + 1;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let has_gap = k > j + 1;
        let next_ok = k < chars.len() && (chars[k].1.is_uppercase() || is_opener(chars[k].1));

        // abbreviation guard applies when the run is a single '.'
        let single_period = c == '.' && j == i;
        let abbreviated =
            single_period && ABBREVIATIONS.contains(&word_before(text, end_byte).as_str());

        if has_gap && next_ok && !abbreviated {
            boundaries.push(end_byte);
        }
        i = j + 1;
    }

    let mut spans = Vec::new();
    let mut cursor = 0usize;
    for &end in boundaries.iter().chain(std::iter::once(&text.len())) {
        if end <= cursor {
            continue;
        }
        let raw = &text[cursor..end];
        let trimmed = raw.trim();
        if !trimmed.is_empty() {
            let lead = raw.len() - raw.trim_start().len();
            let start = cursor + lead;
            spans.push(SentenceSpan {
                start,
                end: start + trimmed.len(),
                text: trimmed.to_string(),
            });
        }
        cursor = end;
    }
    spans
}
