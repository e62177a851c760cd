//! Greedy CTC and duration-skipping greedy TDT decoding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{CtcLogits, TdtConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("invalid decoder input: {0}")]
    Input(String),
    #[error("joint scorer failed: {0}")]
    Scorer(String),
}

/// Decoder output plus effort accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    /// Encoder frame each token was emitted at; non-decreasing.
    pub emission_frames: Vec<usize>,
    pub joint_calls: usize,
    /// Distinct encoder frames the decoder conditioned on.
    pub frames_visited: usize,
    /// Times the zero-duration cap forced the frame pointer forward.
    pub forced_advances: usize,
    /// Encoder length `T` of the decoded utterance.
    pub num_frames: usize,
}

/// Token and duration logits for one `(frame, prefix)` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOutput {
    pub token_logits: Vec<f64>,
    pub duration_logits: Vec<f64>,
}

/// The joint network as seen by the decoder. Must be deterministic in
/// `(frame, prefix)`.
pub trait JointScorer {
    fn score(&self, frame: usize, prefix: &[usize]) -> Result<JointOutput, DecodeError>;
}

impl<S: JointScorer + ?Sized> JointScorer for &S {
    fn score(&self, frame: usize, prefix: &[usize]) -> Result<JointOutput, DecodeError> {
        (**self).score(frame, prefix)
    }
}

/// Wraps a scorer and replaces its duration head with a single slot, so that
/// decoding with `D = {1}` becomes frame-synchronous.
#[derive(Debug, Clone)]
pub struct UnitDuration<S>(pub S);

impl<S: JointScorer> JointScorer for UnitDuration<S> {
    fn score(&self, frame: usize, prefix: &[usize]) -> Result<JointOutput, DecodeError> {
        let out = self.0.score(frame, prefix)?;
        Ok(JointOutput { token_logits: out.token_logits, duration_logits: vec![0.0] })
    }
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-frame argmax, merge repeats, drop blanks.
pub fn greedy_ctc_decode(logits: &CtcLogits) -> Hypothesis {
    let blank = logits.blank();
    let mut tokens = Vec::new();
    let mut emission_frames = Vec::new();
    let mut prev = None;
    for t in 0..logits.frames() {
        let s = argmax(logits.row(t));
        if Some(s) != prev && s != blank {
            tokens.push(s);
            emission_frames.push(t);
        }
        prev = Some(s);
    }
    Hypothesis {
        tokens,
        emission_frames,
        joint_calls: logits.frames(),
        frames_visited: logits.frames(),
        forced_advances: 0,
        num_frames: logits.frames(),
    }
}

pub const DEFAULT_MAX_TOKENS_PER_FRAME: usize = 10;

/// Greedy token-and-duration decoding.
///
/// At each step the scorer is evaluated at `(t, prefix)`; the argmax token is
/// appended unless it is blank and the frame pointer advances by the argmax
/// duration (at least 1 after a blank). After `max_tokens_per_frame`
/// consecutive zero-advance emissions on one frame the pointer is forced
/// forward by one.
pub fn greedy_tdt_decode<S: JointScorer>(
    scorer: &S,
    frames: usize,
    cfg: &TdtConfig,
    max_tokens_per_frame: usize,
) -> Result<Hypothesis, DecodeError> {
    if frames == 0 {
        return Err(DecodeError::Input("T must be >= 1".into()));
    }
    if max_tokens_per_frame == 0 {
        return Err(DecodeError::Input("max_tokens_per_frame must be >= 1".into()));
    }
    cfg.validate().map_err(|e| DecodeError::Input(e.to_string()))?;

    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        emission_frames: Vec::new(),
        joint_calls: 0,
        frames_visited: 1,
        forced_advances: 0,
        num_frames: frames,
    };
    let mut t = 0;
    let mut stalled = 0;
    while t < frames {
        let out = scorer.score(t, &hyp.tokens)?;
        hyp.joint_calls += 1;
        if out.duration_logits.len() != cfg.durations.len() {
            return Err(DecodeError::Scorer(format!(
                "scorer returned {} duration logits for {} durations",
                out.duration_logits.len(),
                cfg.durations.len()
            )));
        }
        if cfg.blank >= out.token_logits.len() {
            return Err(DecodeError::Scorer(format!(
                "blank {} outside {} token logits",
                cfg.blank,
                out.token_logits.len()
            )));
        }
        let symbol = argmax(&out.token_logits);
        let d = cfg.durations[argmax(&out.duration_logits)];
        let advance = if symbol == cfg.blank {
            d.max(1)
        } else {
            hyp.tokens.push(symbol);
            hyp.emission_frames.push(t);
            if d == 0 {
                stalled += 1;
                if stalled >= max_tokens_per_frame {
                    hyp.forced_advances += 1;
                    1
                } else {
                    0
                }
            } else {
                d
            }
        };
        if advance > 0 {
            t += advance;
            stalled = 0;
            if t < frames {
                hyp.frames_visited += 1;
            }
        }
    }
    Ok(hyp)
}

/// Averages of decoding effort over a set of hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortReport {
    pub utterances: usize,
    pub mean_joint_calls: f64,
    pub mean_frames_visited: f64,
    /// Mean over hypotheses of `frames_visited / T`.
    pub skip_ratio: f64,
}

pub fn decode_effort_report(hyps: &[Hypothesis]) -> Result<EffortReport, DecodeError> {
    if hyps.is_empty() {
        return Err(DecodeError::Input("no hypotheses to summarize".into()));
    }
    if hyps.iter().any(|h| h.num_frames == 0) {
        return Err(DecodeError::Input("hypothesis with zero frames".into()));
    }
    let n = hyps.len() as f64;
    Ok(EffortReport {
        utterances: hyps.len(),
        mean_joint_calls: hyps.iter().map(|h| h.joint_calls as f64).sum::<f64>() / n,
        mean_frames_visited: hyps.iter().map(|h| h.frames_visited as f64).sum::<f64>() / n,
        skip_ratio: hyps.iter().map(|h| h.frames_visited as f64 / h.num_frames as f64).sum::<f64>() / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Returns the same logits at every step, optionally keyed by frame.
    struct Scripted<F: Fn(usize, &[usize]) -> (usize, usize)> {
        symbols: usize,
        slots: usize,
        pick: F,
    }

    impl<F: Fn(usize, &[usize]) -> (usize, usize)> JointScorer for Scripted<F> {
        fn score(&self, frame: usize, prefix: &[usize]) -> Result<JointOutput, DecodeError> {
            let (sym, slot) = (self.pick)(frame, prefix);
            let mut token_logits = vec![0.0; self.symbols];
            token_logits[sym] = 5.0;
            let mut duration_logits = vec![0.0; self.slots];
            duration_logits[slot] = 5.0;
            Ok(JointOutput { token_logits, duration_logits })
        }
    }

    fn cfg(durations: &[usize], blank: usize) -> TdtConfig {
        TdtConfig::new(durations.to_vec(), blank).unwrap()
    }

    #[test]
    fn ctc_collapses_argmax_path() {
        // symbols a=0, b=1, blank=2; path a a blank b
        let rows = [[3.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 0.0, 3.0], [0.0, 3.0, 0.0]];
        let logits = CtcLogits::new(4, 2, rows.concat()).unwrap();
        let hyp = greedy_ctc_decode(&logits);
        assert_eq!(hyp.tokens, vec![0, 1]);
        assert_eq!(hyp.emission_frames, vec![0, 3]);
        assert_eq!(hyp.joint_calls, 4);
    }

    #[test]
    fn ctc_all_blank_is_empty() {
        let logits = CtcLogits::new(3, 2, [0.0, 0.0, 1.0].repeat(3)).unwrap();
        assert!(greedy_ctc_decode(&logits).tokens.is_empty());
    }

    #[test]
    fn ctc_shift_invariant() {
        let values = vec![0.1, 0.9, 0.3, 1.2, -0.5, 0.0];
        let shifted: Vec<f64> = values.iter().enumerate().map(|(i, v)| if i < 3 { v + 7.0 } else { *v }).collect();
        let a = greedy_ctc_decode(&CtcLogits::new(2, 2, values).unwrap());
        let b = greedy_ctc_decode(&CtcLogits::new(2, 2, shifted).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn blanks_with_duration_two_skip_frames() {
        let scorer = Scripted { symbols: 3, slots: 3, pick: |_, _| (2, 2) };
        let hyp = greedy_tdt_decode(&scorer, 6, &cfg(&[0, 1, 2], 2), 10).unwrap();
        assert!(hyp.tokens.is_empty());
        assert_eq!(hyp.frames_visited, 3);
        assert_eq!(hyp.joint_calls, 3);
    }

    #[test]
    fn token_then_blanks() {
        let scorer = Scripted {
            symbols: 3,
            slots: 3,
            pick: |t, p: &[usize]| if t == 0 && p.is_empty() { (0, 2) } else { (2, 2) },
        };
        let hyp = greedy_tdt_decode(&scorer, 6, &cfg(&[0, 1, 2], 2), 10).unwrap();
        assert_eq!(hyp.tokens, vec![0]);
        assert_eq!(hyp.emission_frames, vec![0]);
    }

    #[test]
    fn blank_with_zero_duration_still_advances() {
        let scorer = Scripted { symbols: 2, slots: 2, pick: |_, _| (1, 0) };
        let hyp = greedy_tdt_decode(&scorer, 4, &cfg(&[0, 1], 1), 10).unwrap();
        assert_eq!(hyp.frames_visited, 4);
        assert_eq!(hyp.joint_calls, 4);
    }

    #[test]
    fn zero_duration_loop_is_capped() {
        let scorer = Scripted { symbols: 2, slots: 2, pick: |_, _| (0, 0) };
        let hyp = greedy_tdt_decode(&scorer, 3, &cfg(&[0, 1], 1), 4).unwrap();
        assert_eq!(hyp.tokens.len(), 12);
        assert_eq!(hyp.forced_advances, 3);
        assert_eq!(hyp.joint_calls, 12);
        assert!(hyp.joint_calls <= 3 * 4 + 3);
        assert!(hyp.emission_frames.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn unit_duration_visits_every_frame() {
        let skip = Scripted { symbols: 3, slots: 3, pick: |t, _| if t % 4 == 0 { (0, 2) } else { (2, 2) } };
        let fast = greedy_tdt_decode(&skip, 8, &cfg(&[0, 1, 2], 2), 10).unwrap();
        let slow = greedy_tdt_decode(&UnitDuration(&skip), 8, &cfg(&[1], 2), 10).unwrap();
        assert_eq!(slow.frames_visited, 8);
        assert!(slow.frames_visited >= fast.frames_visited);
        assert_eq!(fast.frames_visited, 4);
    }

    #[test]
    fn duration_head_size_checked() {
        let scorer = Scripted { symbols: 3, slots: 2, pick: |_, _| (2, 1) };
        assert!(matches!(
            greedy_tdt_decode(&scorer, 3, &cfg(&[0, 1, 2], 2), 10),
            Err(DecodeError::Scorer(_))
        ));
    }

    #[test]
    fn effort_report_means() {
        let mk = |fv, t, calls| Hypothesis {
            tokens: vec![],
            emission_frames: vec![],
            joint_calls: calls,
            frames_visited: fv,
            forced_advances: 0,
            num_frames: t,
        };
        let r = decode_effort_report(&[mk(3, 6, 4)]).unwrap();
        assert_eq!(r.skip_ratio, 0.5);
        let r = decode_effort_report(&[mk(5, 5, 7), mk(2, 2, 2)]).unwrap();
        assert_eq!(r.skip_ratio, 1.0);
        let r = decode_effort_report(&[mk(3, 6, 4), mk(4, 4, 6), mk(1, 4, 1)]).unwrap();
        assert!((r.mean_joint_calls - 11.0 / 3.0).abs() < 1e-12);
        assert!((r.mean_frames_visited - 8.0 / 3.0).abs() < 1e-12);
        assert!((r.skip_ratio - (0.5 + 1.0 + 0.25) / 3.0).abs() < 1e-12);
        assert!(decode_effort_report(&[]).is_err());
    }
}
