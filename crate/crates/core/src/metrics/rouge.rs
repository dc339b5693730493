//! ROUGE-1/2/L over lowercased alphanumeric word tokens, no stemming.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RougeVariant {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "L")]
    Lcs,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

impl RougeScore {
    fn from_overlap(overlap: usize, candidate: usize, reference: usize) -> Self {
        if candidate == 0 || reference == 0 {
            return RougeScore::default();
        }
        let precision = overlap as f64 / candidate as f64;
        let recall = overlap as f64 / reference as f64;
        let f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            precision,
            recall,
            f,
        }
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_overlap(
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge(candidate: &str, reference: &str, variant: RougeVariant) -> RougeScore {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    match variant {
        RougeVariant::One => rouge_n(&c, &r, 1),
        RougeVariant::Two => rouge_n(&c, &r, 2),
        RougeVariant::Lcs => RougeScore::from_overlap(lcs_len(&c, &r), c.len(), r.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_one() {
        for v in [RougeVariant::One, RougeVariant::Two, RougeVariant::Lcs] {
            assert_eq!(
                rouge("The court held that", "the court held, that", v).f,
                1.0
            );
        }
    }

    #[test]
    fn hand_counted_unigrams() {
        let s = rouge("a b c", "a b d", RougeVariant::One);
        assert_eq!((s.precision, s.recall), (2.0 / 3.0, 2.0 / 3.0));
        assert!((s.f - 2.0 / 3.0).abs() < 1e-12);
        // bigrams: {ab, bc} vs {ab, bd} share one of two
        let s = rouge("a b c", "a b d", RougeVariant::Two);
        assert_eq!((s.precision, s.recall), (0.5, 0.5));
    }

    #[test]
    fn lcs_against_table() {
        let s = rouge("a b c", "a b d", RougeVariant::Lcs);
        assert_eq!((s.precision, s.recall), (2.0 / 3.0, 2.0 / 3.0));
        assert_eq!(lcs_len(&[1, 3, 4, 1, 2], &[3, 4, 1, 2, 1, 3]), 4);
    }

    #[test]
    fn empty_reference_is_zero() {
        assert_eq!(rouge("a b", "", RougeVariant::One), RougeScore::default());
        assert_eq!(
            rouge("a b", "...", RougeVariant::Lcs),
            RougeScore::default()
        );
        assert_eq!(rouge("a", "a", RougeVariant::Two), RougeScore::default());
    }

    #[test]
    fn clipped_counts() {
        let s = rouge("the the the", "the cat", RougeVariant::One);
        assert_eq!(s.precision, 1.0 / 3.0);
        assert_eq!(s.recall, 0.5);
    }
}
