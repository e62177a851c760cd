use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

const MAX_ORDER: usize = 4;

/// Corpus BLEU with its intermediate counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuResult {
    /// Clipped n-gram precisions for n = 1..4.
    pub precisions: [f64; MAX_ORDER],
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// In `[0, 100]`.
    pub score: f64,
}

/// Lowercases and makes every character that is neither alphanumeric nor
/// whitespace a token of its own.
pub fn bleu_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Unsmoothed corpus BLEU; zero when any precision is zero.
pub fn bleu<R: AsRef<str>, H: AsRef<str>>(references: &[R], hypotheses: &[H]) -> Result<BleuResult, EvalError> {
    bleu_with_smoothing(references, hypotheses, false)
}

/// With `smooth`, orders n >= 2 use `(matches + 1) / (total + 1)`.
pub fn bleu_with_smoothing<R: AsRef<str>, H: AsRef<str>>(
    references: &[R],
    hypotheses: &[H],
    smooth: bool,
) -> Result<BleuResult, EvalError> {
    if references.len() != hypotheses.len() {
        return Err(EvalError::LengthMismatch { refs: references.len(), hyps: hypotheses.len() });
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (r, h) in references.iter().zip(hypotheses) {
        let rt = bleu_tokenize(r.as_ref());
        let ht = bleu_tokenize(h.as_ref());
        ref_len += rt.len();
        hyp_len += ht.len();
        for n in 1..=MAX_ORDER {
            let rc = ngram_counts(&rt, n);
            for (g, c) in ngram_counts(&ht, n) {
                matches[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
            totals[n - 1] += ht.len().saturating_sub(n - 1);
        }
    }
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        precisions[n] = if smooth && n > 0 {
            (matches[n] + 1) as f64 / (totals[n] + 1) as f64
        } else if totals[n] == 0 {
            0.0
        } else {
            matches[n] as f64 / totals[n] as f64
        };
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let score = if precisions.contains(&0.0) || brevity_penalty == 0.0 {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuResult { precisions, matches, totals, brevity_penalty, hyp_len, ref_len, score })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(bleu_tokenize("Hello, World!"), vec!["hello", ",", "world", "!"]);
        assert_eq!(bleu_tokenize("  "), Vec::<String>::new());
    }

    #[test]
    fn identical_corpus_is_100() {
        let refs = ["The cat sat on the mat.", "A long sentence with many words in it."];
        let b = bleu(&refs, &refs).unwrap();
        assert_eq!(b.score, 100.0);
        assert_eq!(b.brevity_penalty, 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        let b = bleu(&["a b c d"], &["e f g h"]).unwrap();
        assert_eq!(b.score, 0.0);
    }

    #[test]
    fn three_sentence_fixture() {
        let refs = ["the cat is on the mat.", "there is a dog.", "hello world"];
        let hyps = ["the cat on the mat.", "there is dog.", "hello there world"];
        let b = bleu(&refs, &hyps).unwrap();
        // counts tallied by hand from the tokenized pairs
        assert_eq!(b.matches, [12, 6, 2, 1]);
        assert_eq!(b.totals, [13, 10, 7, 4]);
        assert_eq!((b.hyp_len, b.ref_len), (13, 14));
        let bp = (-1.0f64 / 13.0).exp();
        assert!((b.brevity_penalty - bp).abs() < 1e-15);
        let expected = 100.0 * bp * (((12.0f64 / 13.0).ln() + 0.6f64.ln() + (2.0f64 / 7.0).ln() + 0.25f64.ln()) / 4.0).exp();
        assert!((b.score - expected).abs() < 1e-12);
    }

    #[test]
    fn smoothing_rescues_zero_orders() {
        let b = bleu_with_smoothing(&["a b c"], &["a b d"], true).unwrap();
        assert!(b.score > 0.0);
        assert_eq!(bleu(&["a b c"], &["a b d"]).unwrap().score, 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(bleu(&["a"], &["a", "b"]).is_err());
    }
}
