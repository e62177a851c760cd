//! Brute-force references for the lattice losses.
//!
//! These walk every alignment explicitly and multiply plain probabilities, so
//! they share nothing with the log-domain dynamic programs except the logits.
//! They are exponential in the instance size and only meant for small checks.

use super::{CtcLogits, LatticeError, TdtConfig, TdtLatticeLogits};

/// Largest instance [`enumerate_alignments`] accepts.
pub const MAX_ENUM_FRAMES: usize = 8;
pub const MAX_ENUM_TOKENS: usize = 4;

/// One complete TDT alignment: `(symbol, duration)` steps from `(0, 0)` to `(T, U)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub steps: Vec<(usize, usize)>,
    pub probability: f64,
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Lists every TDT alignment of `target` together with its probability.
pub fn enumerate_alignments(
    logits: &TdtLatticeLogits,
    target: &[usize],
    cfg: &TdtConfig,
) -> Result<Vec<Alignment>, LatticeError> {
    let frames = logits.frames();
    if frames > MAX_ENUM_FRAMES || target.len() > MAX_ENUM_TOKENS {
        return Err(LatticeError::TooLarge { frames, tokens: target.len() });
    }
    cfg.validate()?;
    if logits.rows() != target.len() + 1 || logits.slots() != cfg.durations.len() {
        return Err(LatticeError::Shape("lattice does not match target/config".into()));
    }
    super::check_target(target, logits.symbols(), cfg.blank)?;

    let mut out = Vec::new();
    let mut steps = Vec::new();
    walk(logits, target, cfg, 0, 0, 1.0, &mut steps, &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    logits: &TdtLatticeLogits,
    target: &[usize],
    cfg: &TdtConfig,
    t: usize,
    u: usize,
    prob: f64,
    steps: &mut Vec<(usize, usize)>,
    out: &mut Vec<Alignment>,
) {
    let frames = logits.frames();
    if t == frames {
        if u == target.len() {
            out.push(Alignment { steps: steps.clone(), probability: prob });
        }
        return;
    }
    let p_tok = softmax(logits.token_row(t, u));
    let p_dur = softmax(logits.duration_row(t, u));
    for (slot, &d) in cfg.durations.iter().enumerate() {
        if t + d > frames {
            continue;
        }
        if u < target.len() {
            steps.push((target[u], d));
            walk(logits, target, cfg, t + d, u + 1, prob * p_tok[target[u]] * p_dur[slot], steps, out);
            steps.pop();
        }
        if d >= 1 {
            steps.push((cfg.blank, d));
            walk(logits, target, cfg, t + d, u, prob * p_tok[cfg.blank] * p_dur[slot], steps, out);
            steps.pop();
        }
    }
}

/// Collapses a CTC frame path: merge repeats, then drop blanks.
pub fn ctc_collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != blank {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Sum over all `(V+1)^T` frame paths that collapse to `target`.
pub fn ctc_brute_force(logits: &CtcLogits, target: &[usize]) -> f64 {
    let frames = logits.frames();
    let width = logits.vocab() + 1;
    let probs: Vec<Vec<f64>> = (0..frames).map(|t| softmax(logits.row(t))).collect();
    let mut total = 0.0;
    let mut path = vec![0usize; frames];
    loop {
        if ctc_collapse(&path, logits.blank()) == target {
            total += path.iter().enumerate().map(|(t, &s)| probs[t][s]).product::<f64>();
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == frames {
                return total;
            }
            path[i] += 1;
            if path[i] < width {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Sum over every interleaving of `U` token moves and `T` blank moves that
/// ends with a blank, on a `[T][U+1][V+1]` logit grid.
pub fn rnnt_brute_force(token_logits: &[f64], frames: usize, symbols: usize, target: &[usize], blank: usize) -> f64 {
    let rows = target.len() + 1;
    let prob = |t: usize, u: usize, k: usize| {
        let c = t * rows + u;
        softmax(&token_logits[c * symbols..(c + 1) * symbols])[k]
    };
    fn go(t: usize, u: usize, frames: usize, target: &[usize], blank: usize, prob: &dyn Fn(usize, usize, usize) -> f64) -> f64 {
        if t == frames {
            return if u == target.len() { 1.0 } else { 0.0 };
        }
        let mut acc = prob(t, u, blank) * go(t + 1, u, frames, target, blank, prob);
        if u < target.len() {
            acc += prob(t, u, target[u]) * go(t, u + 1, frames, target, blank, prob);
        }
        acc
    }
    go(0, 0, frames, target, blank, &prob)
}
