use serde::{Deserialize, Serialize};

use super::report::{EvalReport, SettingWer};
use super::EvalError;
use crate::corpus::{transform_text, PncSetting};

/// Edit operations of a minimal alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn add(&mut self, other: &EditCounts) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.ref_words += other.ref_words;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_words: usize,
    pub wer: f64,
}

impl TryFrom<EditCounts> for WerBreakdown {
    type Error = EvalError;

    fn try_from(c: EditCounts) -> Result<Self, EvalError> {
        if c.ref_words == 0 {
            return Err(EvalError::EmptyReference);
        }
        Ok(Self {
            substitutions: c.substitutions,
            deletions: c.deletions,
            insertions: c.insertions,
            ref_words: c.ref_words,
            wer: c.errors() as f64 / c.ref_words as f64,
        })
    }
}

/// Unit-cost Levenshtein alignment. The backtrace prefers a substitution or
/// match, then an insertion, then a deletion.
pub fn align_counts<S: PartialEq>(reference: &[S], hypothesis: &[S]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            let ins = d[i * w + j - 1] + 1;
            let del = d[(i - 1) * w + j] + 1;
            d[i * w + j] = sub.min(ins).min(del);
        }
    }
    let mut c = EditCounts { ref_words: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(reference[i - 1] != hypothesis[j - 1]);
            if d[(i - 1) * w + j - 1] + diff == here {
                c.substitutions += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i * w + j - 1] + 1 == here {
            c.insertions += 1;
            j -= 1;
        } else {
            c.deletions += 1;
            i -= 1;
        }
    }
    c
}

pub fn wer<S: PartialEq>(reference: &[S], hypothesis: &[S]) -> Result<WerBreakdown, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    align_counts(reference, hypothesis).try_into()
}

fn setting_counts(reference: &str, hypothesis: &str, setting: PncSetting) -> EditCounts {
    let r = transform_text(reference, setting);
    let h = transform_text(hypothesis, setting);
    let rw: Vec<&str> = r.split_whitespace().collect();
    let hw: Vec<&str> = h.split_whitespace().collect();
    align_counts(&rw, &hw)
}

/// WER of one pair under each of the four settings.
pub fn evaluate_settings(reference: &str, hypothesis: &str) -> Result<EvalReport, EvalError> {
    evaluate_corpus(&[reference], &[hypothesis])
}

/// Corpus WER per setting: edit counts summed over utterances, divided by
/// the total reference length.
pub fn evaluate_corpus<R: AsRef<str>, H: AsRef<str>>(references: &[R], hypotheses: &[H]) -> Result<EvalReport, EvalError> {
    if references.len() != hypotheses.len() {
        return Err(EvalError::LengthMismatch { refs: references.len(), hyps: hypotheses.len() });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyHypotheses);
    }
    let settings = PncSetting::ALL
        .into_iter()
        .map(|setting| {
            let mut total = EditCounts::default();
            for (r, h) in references.iter().zip(hypotheses) {
                total.add(&setting_counts(r.as_ref(), h.as_ref(), setting));
            }
            Ok(SettingWer { setting, wer: total.try_into()? })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvalReport { utterances: references.len(), settings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_zero() {
        let w = wer(&words("a b c"), &words("a b c")).unwrap();
        assert_eq!(w.wer, 0.0);
    }

    #[test]
    fn single_deletion() {
        let w = wer(&words("a b c"), &words("a c")).unwrap();
        assert_eq!((w.substitutions, w.deletions, w.insertions), (0, 1, 0));
        assert!((w.wer - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tie_prefers_substitution_then_insertion() {
        // "a" vs "b c": one substitution plus one insertion rather than a deletion and two insertions
        let c = align_counts(&words("a"), &words("b c"));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (1, 0, 1));
        let c = align_counts(&words("a b"), &words("c"));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (1, 1, 0));
    }

    #[test]
    fn empty_reference_is_error() {
        assert_eq!(wer::<&str>(&[], &["a"]), Err(EvalError::EmptyReference));
        let c = align_counts::<&str>(&[], &["a", "b"]);
        assert_eq!(c.insertions, 2);
    }

    fn setting(r: &EvalReport, s: PncSetting) -> f64 {
        r.settings.iter().find(|x| x.setting == s).unwrap().wer.wer
    }

    #[test]
    fn casing_only_difference() {
        let r = evaluate_settings("The cat sat.", "the cat sat.").unwrap();
        assert_eq!(setting(&r, PncSetting::NoPnc), 0.0);
        assert_eq!(setting(&r, PncSetting::OnlyPun), 0.0);
        assert!(setting(&r, PncSetting::Pnc) > 0.0);
        assert!(setting(&r, PncSetting::OnlyCap) > 0.0);
    }

    #[test]
    fn punctuation_only_difference() {
        let r = evaluate_settings("The cat, sat.", "The cat sat").unwrap();
        assert_eq!(setting(&r, PncSetting::NoPnc), 0.0);
        assert_eq!(setting(&r, PncSetting::OnlyCap), 0.0);
        assert!(setting(&r, PncSetting::Pnc) > 0.0);
    }

    #[test]
    fn hand_scored_fixture() {
        // one casing error ("paris") and one punctuation error ("city," for "city.") in ten words
        let reference = "We flew to Paris last week and saw the city.";
        let hypothesis = "We flew to paris last week and saw the city,";
        let r = evaluate_settings(reference, hypothesis).unwrap();
        assert_eq!(setting(&r, PncSetting::Pnc), 0.2);
        assert_eq!(setting(&r, PncSetting::OnlyCap), 0.1);
        assert_eq!(setting(&r, PncSetting::OnlyPun), 0.1);
        assert_eq!(setting(&r, PncSetting::NoPnc), 0.0);
    }

    #[test]
    fn corpus_aggregates_counts() {
        let r = evaluate_corpus(&["a b c d", "e"], &["a b c d", "f"]).unwrap();
        assert_eq!(setting(&r, PncSetting::NoPnc), 0.2);
        assert!(evaluate_corpus(&["a"], &["a", "b"]).is_err());
        assert_eq!(evaluate_corpus::<&str, &str>(&[], &[]), Err(EvalError::EmptyHypotheses));
    }
}
