//! Sequence-transduction losses over alignment lattices.
//!
//! Every loss here is a negative log-likelihood in nats, computed by a
//! log-domain forward-backward pass in `f64`. Gradients are taken with
//! respect to the *unnormalized* logits, i.e. through the softmax.
//!
//! Infeasible instances (no alignment reaches the accept state) are not
//! errors: they come back as a [`LossResult`] with an infinite loss, zero
//! gradients and `feasible == false`, so a training loop can skip them.

mod ctc;
pub mod oracle;
mod rnnt;
mod tdt;

pub use ctc::ctc_loss;
pub use oracle::{enumerate_alignments, Alignment};
pub use rnnt::rnnt_loss;
pub use tdt::tdt_loss;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("non-finite logit at flat index {0}")]
    NonFinite(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("target token {token} at position {pos} is outside [0, {vocab}) or equals blank")]
    InvalidToken { token: usize, pos: usize, vocab: usize },
    #[error("invalid duration set: {0}")]
    InvalidDurations(String),
    #[error("instance too large for enumeration (T={frames}, U={tokens}); limit is T<=8, U<=4")]
    TooLarge { frames: usize, tokens: usize },
}

/// Per-frame CTC log-odds, `[frame][symbol]`, row-major. The blank is the last
/// symbol (index `vocab`).
#[derive(Debug, Clone, PartialEq)]
pub struct CtcLogits {
    frames: usize,
    vocab: usize,
    values: Vec<f64>,
}

impl CtcLogits {
    /// `values` holds `frames * (vocab + 1)` entries.
    pub fn new(frames: usize, vocab: usize, values: Vec<f64>) -> Result<Self, LatticeError> {
        if frames == 0 || vocab == 0 {
            return Err(LatticeError::Shape(format!(
                "need T >= 1 and V >= 1, got T={frames} V={vocab}"
            )));
        }
        if values.len() != frames * (vocab + 1) {
            return Err(LatticeError::Shape(format!(
                "expected {} values for T={frames} V={vocab}, got {}",
                frames * (vocab + 1),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { frames, vocab, values })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Number of non-blank symbols `V`.
    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn blank(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.vocab + 1;
        &self.values[t * w..(t + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Joint-network outputs over the full `(frame, prefix length)` lattice.
///
/// `token` is `[t][u][k]` with `k` in `0..=V` and `duration` is `[t][u][j]`
/// where slot `j` stands for `durations[j]` of the accompanying [`TdtConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct TdtLatticeLogits {
    frames: usize,
    rows: usize,
    symbols: usize,
    slots: usize,
    token: Vec<f64>,
    duration: Vec<f64>,
}

impl TdtLatticeLogits {
    /// `rows` is `U + 1`, `symbols` is `V + 1` and `slots` is `|D|`.
    pub fn new(
        frames: usize,
        rows: usize,
        symbols: usize,
        slots: usize,
        token: Vec<f64>,
        duration: Vec<f64>,
    ) -> Result<Self, LatticeError> {
        if frames == 0 || rows == 0 || symbols < 2 || slots == 0 {
            return Err(LatticeError::Shape(format!(
                "degenerate lattice T={frames} U+1={rows} V+1={symbols} |D|={slots}"
            )));
        }
        if token.len() != frames * rows * symbols {
            return Err(LatticeError::Shape(format!(
                "token grid has {} values, expected {}",
                token.len(),
                frames * rows * symbols
            )));
        }
        if duration.len() != frames * rows * slots {
            return Err(LatticeError::Shape(format!(
                "duration grid has {} values, expected {}",
                duration.len(),
                frames * rows * slots
            )));
        }
        check_finite(&token)?;
        check_finite(&duration).map_err(|e| match e {
            LatticeError::NonFinite(i) => LatticeError::NonFinite(token.len() + i),
            other => other,
        })?;
        Ok(Self { frames, rows, symbols, slots, token, duration })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `U + 1`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `V + 1`.
    pub fn symbols(&self) -> usize {
        self.symbols
    }

    /// `|D|`.
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn token_row(&self, t: usize, u: usize) -> &[f64] {
        let base = (t * self.rows + u) * self.symbols;
        &self.token[base..base + self.symbols]
    }

    pub fn duration_row(&self, t: usize, u: usize) -> &[f64] {
        let base = (t * self.rows + u) * self.slots;
        &self.duration[base..base + self.slots]
    }

    pub fn token_values(&self) -> &[f64] {
        &self.token
    }

    pub fn duration_values(&self) -> &[f64] {
        &self.duration
    }
}

/// Duration set and blank symbol of a token-and-duration transducer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdtConfig {
    pub durations: Vec<usize>,
    pub blank: usize,
}

/// The duration set used when none is configured. Not a published value.
pub const DEFAULT_DURATIONS: [usize; 5] = [0, 1, 2, 3, 4];

impl TdtConfig {
    pub fn new(durations: Vec<usize>, blank: usize) -> Result<Self, LatticeError> {
        let cfg = Self { durations, blank };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default duration set with the blank at index `vocab`.
    pub fn with_vocab(vocab: usize) -> Self {
        Self { durations: DEFAULT_DURATIONS.to_vec(), blank: vocab }
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        if self.durations.is_empty() {
            return Err(LatticeError::InvalidDurations("empty".into()));
        }
        if self.durations.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LatticeError::InvalidDurations(format!(
                "{:?} is not strictly ascending",
                self.durations
            )));
        }
        if !self.durations.iter().any(|&d| d >= 1) {
            return Err(LatticeError::InvalidDurations(
                "at least one duration must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// CTC weight of the hybrid objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridLossConfig {
    pub lambda: f64,
}

impl Default for HybridLossConfig {
    fn default() -> Self {
        Self { lambda: 0.3 }
    }
}

/// Loss value plus gradients with respect to every input logit.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    pub feasible: bool,
    pub grad_token_logits: Vec<f64>,
    /// `None` for CTC and RNN-T, which have no duration head.
    pub grad_duration_logits: Option<Vec<f64>>,
}

impl LossResult {
    pub(crate) fn infeasible(token_len: usize, duration_len: Option<usize>) -> Self {
        Self {
            loss: f64::INFINITY,
            feasible: false,
            grad_token_logits: vec![0.0; token_len],
            grad_duration_logits: duration_len.map(|n| vec![0.0; n]),
        }
    }
}

/// `L_TDT + lambda * L_CTC`; infinite when either side is infeasible.
pub fn hybrid_loss(tdt: &LossResult, ctc: &LossResult, cfg: &HybridLossConfig) -> f64 {
    if !tdt.feasible || !ctc.feasible || !tdt.loss.is_finite() || !ctc.loss.is_finite() {
        return f64::INFINITY;
    }
    tdt.loss + cfg.lambda * ctc.loss
}

fn check_finite(values: &[f64]) -> Result<(), LatticeError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(LatticeError::NonFinite(i)),
        None => Ok(()),
    }
}

pub(crate) fn check_target(target: &[usize], symbols: usize, blank: usize) -> Result<(), LatticeError> {
    for (pos, &token) in target.iter().enumerate() {
        if token >= symbols || token == blank {
            return Err(LatticeError::InvalidToken { token, pos, vocab: symbols - 1 });
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Numerically stable log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
    let norm = max + sum.ln();
    row.iter().map(|&x| x - norm).collect()
}
