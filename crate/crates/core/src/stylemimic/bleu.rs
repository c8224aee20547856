//! Modified n-gram precision: the four BLEU components used as difference
//! features.

use std::collections::HashMap;
use std::hash::Hash;

/// Clipped n-gram precisions for n = 1..=4.
///
/// Candidate n-gram counts are capped by the reference's count of the same
/// n-gram; `p_n` is the capped match total over the candidate's n-gram
/// count, and 0 when the candidate has no n-grams or no matches. No brevity
/// penalty: the components are independent features, not a composite score.
pub fn bleu_components<T: Eq + Hash>(candidate: &[T], reference: &[T]) -> [f64; 4] {
    let mut out = [0.0f64; 4];
    for (i, p) in out.iter_mut().enumerate() {
        *p = clipped_precision(candidate, reference, i + 1);
    }
    out
}

fn clipped_precision<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    if candidate.len() < n {
        return 0.0;
    }
    let mut ref_counts: HashMap<&[T], usize> = HashMap::new();
    if reference.len() >= n {
        for gram in reference.windows(n) {
            *ref_counts.entry(gram).or_insert(0) += 1;
        }
    }
    let mut cand_counts: HashMap<&[T], usize> = HashMap::new();
    for gram in candidate.windows(n) {
        *cand_counts.entry(gram).or_insert(0) += 1;
    }
    let total = candidate.len() - n + 1;
    let mut matched = 0usize;
    for (gram, count) in cand_counts {
        if let Some(&cap) = ref_counts.get(gram) {
            matched += count.min(cap);
        }
    }
    matched as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_sequences_score_ones() {
        let t = toks("the quick brown fox jumps");
        assert_eq!(bleu_components(&t, &t), [1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn clipping_example_two_sevenths() {
        // Seven "the" against a reference with two: p1 = 2/7 exactly.
        let candidate = toks("the the the the the the the");
        let reference = toks("the cat is on the mat");
        let p = bleu_components(&candidate, &reference);
        assert_eq!(p[0], 2.0 / 7.0);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[2], 0.0);
        assert_eq!(p[3], 0.0);
    }

    #[test]
    fn disjoint_vocabularies_score_zero() {
        let candidate = toks("alpha beta gamma delta");
        let reference = toks("one two three four");
        assert_eq!(bleu_components(&candidate, &reference), [0.0; 4]);
    }

    #[test]
    fn short_candidate_has_no_higher_ngrams() {
        let candidate = toks("one two");
        let reference = toks("one two");
        let p = bleu_components(&candidate, &reference);
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 1.0);
        assert_eq!(p[2], 0.0); // no trigram exists
        assert_eq!(p[3], 0.0);
    }

    #[test]
    fn all_ones_iff_equal_for_length_four_plus() {
        let a = toks("w x y z w");
        let b = toks("w x y z q");
        let p = bleu_components(&a, &b);
        assert!(p.iter().any(|&v| v < 1.0));
        let p = bleu_components(&a, &a);
        assert!(p.iter().all(|&v| v == 1.0));
    }
}
