//! Self-check suites: losses against brute-force enumeration, analytic
//! gradients against central finite differences, and normalization of the
//! loss-induced distributions over target sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::oracle::{ctc_brute_force, enumerate_alignments, rnnt_brute_force};
use crate::lattice::{ctc_loss, rnnt_loss, tdt_loss, CtcLogits, TdtConfig, TdtLatticeLogits};
use crate::model::{AttentionContext, Model, ModelConfig, Params};
use ndarray::Array2;

pub const ORACLE_TOLERANCE: f64 = 1e-9;
pub const LOSS_GRADIENT_TOLERANCE: f64 = 1e-4;
pub const MODEL_GRADIENT_TOLERANCE: f64 = 1e-3;
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;
pub const FD_STEP: f64 = 1e-4;
/// Largest share of model coordinates the gradient check may skip for
/// straddling a ReLU kink.
pub const MAX_KINK_FRACTION: f64 = 0.01;
/// Gradient entries smaller than this in magnitude are compared on this
/// absolute scale instead of their own.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Outcome of one check; `worst` is the largest observed error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), cases, worst, tolerance, passed: worst < tolerance }
    }
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:<40} cases={:<5} worst={:.3e} tol={:.0e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.worst,
            self.tolerance
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// A random small lattice instance.
#[derive(Debug, Clone)]
pub struct Instance {
    pub frames: usize,
    pub vocab: usize,
    pub target: Vec<usize>,
    pub durations: Vec<usize>,
    pub ctc: Vec<f64>,
    pub tdt_token: Vec<f64>,
    pub tdt_duration: Vec<f64>,
}

impl Instance {
    /// `T <= max_frames`, `U <= max_tokens`, `V <= max_vocab`, `D` a subset of `{0, 1, 2}`.
    pub fn random<R: Rng>(rng: &mut R, max_frames: usize, max_tokens: usize, max_vocab: usize) -> Self {
        let frames = rng.random_range(1..=max_frames);
        let vocab = rng.random_range(1..=max_vocab);
        let n_tok = rng.random_range(0..=max_tokens);
        let target = (0..n_tok).map(|_| rng.random_range(0..vocab)).collect::<Vec<_>>();
        let durations = loop {
            let d: Vec<usize> = (0..3).filter(|_| rng.random_bool(0.6)).collect();
            if d.iter().any(|&x| x >= 1) {
                break d;
            }
        };
        let symbols = vocab + 1;
        let rows = n_tok + 1;
        let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        let ctc = draw(frames * symbols);
        let tdt_token = draw(frames * rows * symbols);
        let tdt_duration = draw(frames * rows * durations.len());
        Self { frames, vocab, target, durations, ctc, tdt_token, tdt_duration }
    }

    pub fn ctc_logits(&self) -> CtcLogits {
        CtcLogits::new(self.frames, self.vocab, self.ctc.clone()).expect("valid instance")
    }

    pub fn tdt_logits(&self) -> TdtLatticeLogits {
        TdtLatticeLogits::new(
            self.frames,
            self.target.len() + 1,
            self.vocab + 1,
            self.durations.len(),
            self.tdt_token.clone(),
            self.tdt_duration.clone(),
        )
        .expect("valid instance")
    }

    pub fn tdt_config(&self) -> TdtConfig {
        TdtConfig::new(self.durations.clone(), self.vocab).expect("valid instance")
    }
}

fn oracle_gap(loss: f64, feasible: bool, oracle: f64) -> f64 {
    if oracle == 0.0 {
        return if feasible { f64::INFINITY } else { 0.0 };
    }
    (loss + oracle.ln()).abs()
}

/// Loss values of CTC, RNN-T and TDT against enumeration on random instances.
pub fn loss_oracle_suite(trials: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ctc_worst, mut rnnt_worst, mut tdt_worst, mut enum_worst) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let inst = Instance::random(&mut rng, 6, 3, 3);
        let ctc = ctc_loss(&inst.ctc_logits(), &inst.target).expect("valid instance");
        ctc_worst = ctc_worst.max(oracle_gap(ctc.loss, ctc.feasible, ctc_brute_force(&inst.ctc_logits(), &inst.target)));

        let rnnt = rnnt_loss(&inst.tdt_token, inst.frames, inst.vocab + 1, &inst.target, inst.vocab)
            .expect("valid instance");
        let rnnt_ref = rnnt_brute_force(&inst.tdt_token, inst.frames, inst.vocab + 1, &inst.target, inst.vocab);
        rnnt_worst = rnnt_worst.max(oracle_gap(rnnt.loss, rnnt.feasible, rnnt_ref));

        let tdt = tdt_loss(&inst.tdt_logits(), &inst.target, &inst.tdt_config()).expect("valid instance");
        let aligns = enumerate_alignments(&inst.tdt_logits(), &inst.target, &inst.tdt_config()).expect("small");
        let total: f64 = aligns.iter().map(|a| a.probability).sum();
        tdt_worst = tdt_worst.max(oracle_gap(tdt.loss, tdt.feasible, total));
        // probability-space agreement, as the enumeration contract states it
        let p = if tdt.feasible { (-tdt.loss).exp() } else { 0.0 };
        enum_worst = enum_worst.max((p - total).abs());
    }
    vec![
        CheckResult::new("ctc loss vs path enumeration", trials, ctc_worst, ORACLE_TOLERANCE),
        CheckResult::new("rnnt loss vs interleaving enumeration", trials, rnnt_worst, ORACLE_TOLERANCE),
        CheckResult::new("tdt loss vs alignment enumeration", trials, tdt_worst, ORACLE_TOLERANCE),
        CheckResult::new("tdt alignment probability mass", trials, enum_worst, ORACLE_TOLERANCE),
    ]
}

/// Worst relative error between `analytic` and central differences of `f`
/// around `x`.
pub fn finite_difference_check(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let step = FD_STEP;
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let hi = f(&probe);
        probe[i] = x[i] - step;
        let lo = f(&probe);
        probe[i] = x[i];
        let numeric = (hi - lo) / (2.0 * step);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Analytic loss gradients against central differences on feasible random instances.
pub fn loss_gradient_suite(trials: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ctc_worst, mut rnnt_worst, mut tdt_worst) = (0.0f64, 0.0f64, 0.0f64);
    let (mut n_ctc, mut n_rnnt, mut n_tdt) = (0, 0, 0);
    while n_ctc < trials || n_rnnt < trials || n_tdt < trials {
        let inst = Instance::random(&mut rng, 5, 3, 3);
        let (frames, vocab, target) = (inst.frames, inst.vocab, inst.target.clone());

        let ctc = ctc_loss(&inst.ctc_logits(), &target).expect("valid");
        if ctc.feasible && n_ctc < trials {
            let w = finite_difference_check(&inst.ctc, &ctc.grad_token_logits, |x| {
                ctc_loss(&CtcLogits::new(frames, vocab, x.to_vec()).unwrap(), &target).unwrap().loss
            });
            ctc_worst = ctc_worst.max(w);
            n_ctc += 1;
        }

        let rnnt = rnnt_loss(&inst.tdt_token, frames, vocab + 1, &target, vocab).expect("valid");
        if rnnt.feasible && n_rnnt < trials {
            let w = finite_difference_check(&inst.tdt_token, &rnnt.grad_token_logits, |x| {
                rnnt_loss(x, frames, vocab + 1, &target, vocab).unwrap().loss
            });
            rnnt_worst = rnnt_worst.max(w);
            n_rnnt += 1;
        }

        let cfg = inst.tdt_config();
        let tdt = tdt_loss(&inst.tdt_logits(), &target, &cfg).expect("valid");
        if tdt.feasible && n_tdt < trials {
            let rows = target.len() + 1;
            let slots = inst.durations.len();
            let dur = inst.tdt_duration.clone();
            let w_tok = finite_difference_check(&inst.tdt_token, &tdt.grad_token_logits, |x| {
                let l = TdtLatticeLogits::new(frames, rows, vocab + 1, slots, x.to_vec(), dur.clone()).unwrap();
                tdt_loss(&l, &target, &cfg).unwrap().loss
            });
            let tok = inst.tdt_token.clone();
            let grad_dur = tdt.grad_duration_logits.as_ref().expect("tdt has a duration head");
            let w_dur = finite_difference_check(&inst.tdt_duration, grad_dur, |x| {
                let l = TdtLatticeLogits::new(frames, rows, vocab + 1, slots, tok.clone(), x.to_vec()).unwrap();
                tdt_loss(&l, &target, &cfg).unwrap().loss
            });
            tdt_worst = tdt_worst.max(w_tok).max(w_dur);
            n_tdt += 1;
        }
    }
    vec![
        CheckResult::new("ctc gradient vs finite differences", trials, ctc_worst, LOSS_GRADIENT_TOLERANCE),
        CheckResult::new("rnnt gradient vs finite differences", trials, rnnt_worst, LOSS_GRADIENT_TOLERANCE),
        CheckResult::new("tdt gradient vs finite differences", trials, tdt_worst, LOSS_GRADIENT_TOLERANCE),
    ]
}

/// A random tiny model (F=4, H=8, B=1, V=3) with a feasible sample.
fn random_model_case<R: Rng>(rng: &mut R) -> (Model, Array2<f64>, Vec<usize>, f64) {
    loop {
        let durations = match rng.random_range(0..3) {
            0 => vec![0, 1, 2],
            1 => vec![1, 2],
            _ => vec![0, 1],
        };
        let cfg = ModelConfig {
            feature_dim: 4,
            hidden_dim: 8,
            num_blocks: 1,
            attention_context: if rng.random_bool(0.5) {
                AttentionContext::Full
            } else {
                AttentionContext::Windowed(rng.random_range(1..=3))
            },
            subsample_factor: [1, 2, 4][rng.random_range(0..3)],
            vocab_size: 3,
            durations,
            predictor_dim: 5,
            joint_dim: 6,
            seed: rng.random(),
        };
        let mut model = Model::new(cfg).expect("valid tiny config");
        let mut flat = model.params.flatten();
        for v in flat.iter_mut().filter(|v| **v == 0.0) {
            *v = rng.random_range(-0.5..0.5);
        }
        model.params.set_flat(&flat).expect("same length");
        let t_in = rng.random_range(4..=24);
        let features = Array2::from_shape_fn((t_in, 4), |_| rng.random_range(-1.0..1.0));
        let u = rng.random_range(1..=3);
        let target: Vec<usize> = (0..u).map(|_| rng.random_range(0..3)).collect();
        let lambda = rng.random_range(0.1..1.0);
        let loss = model.sample_loss(features.view(), &target, lambda, None).expect("valid sample");
        if loss.feasible {
            return (model, features, target, lambda);
        }
    }
}

/// Full-model hybrid-loss gradients against central differences over every
/// parameter, plus exact gradient routing between the two heads.
///
/// A coordinate whose `±h` probes flip any encoder ReLU is not differentiable
/// on the probe interval and is left out of the comparison; the fraction left
/// out is reported as its own check so the comparison cannot go vacuous.
pub fn model_gradient_suite(trials: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let (mut compared, mut excluded) = (0usize, 0usize);
    let mut routing_violations = 0usize;
    for _ in 0..trials {
        let (model, features, target, lambda) = random_model_case(&mut rng);
        let mut grad = Params::zeros(&model.config);
        model.sample_loss(features.view(), &target, lambda, Some(&mut grad)).expect("valid");
        let analytic = grad.flatten();
        let x = model.params.flatten();
        let pattern = model.relu_pattern(features.view()).expect("valid");
        let mut probe = model.clone();
        let mut at = |v: &[f64]| {
            probe.params.set_flat(v).expect("same length");
            let loss = probe.sample_loss(features.view(), &target, lambda, None).expect("valid").total;
            (loss, probe.relu_pattern(features.view()).expect("valid") == pattern)
        };
        let mut v = x.clone();
        for i in 0..x.len() {
            v[i] = x[i] + FD_STEP;
            let (hi, smooth_hi) = at(&v);
            v[i] = x[i] - FD_STEP;
            let (lo, smooth_lo) = at(&v);
            v[i] = x[i];
            if smooth_hi && smooth_lo {
                worst = worst.max(relative_error(analytic[i], (hi - lo) / (2.0 * FD_STEP)));
                compared += 1;
            } else {
                excluded += 1;
            }
        }

        let mut tdt_only = Params::zeros(&model.config);
        model.sample_loss(features.view(), &target, 0.0, Some(&mut tdt_only)).expect("valid");
        if tdt_only.ctc_head().iter().any(|t| t.iter().any(|&v| v != 0.0)) {
            routing_violations += 1;
        }
        if tdt_only.transducer_head() != grad.transducer_head() {
            routing_violations += 1;
        }
    }
    let excluded_fraction = excluded as f64 / (compared + excluded).max(1) as f64;
    vec![
        CheckResult::new("model gradient vs finite differences", trials, worst, MODEL_GRADIENT_TOLERANCE),
        CheckResult::new("model coordinates straddling a ReLU kink", trials, excluded_fraction, MAX_KINK_FRACTION),
        CheckResult::new("gradient routing between heads", trials, routing_violations as f64, 0.5),
    ]
}

/// All sequences over `0..vocab` of length `0..=max_len`.
pub fn all_sequences(vocab: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for k in 0..vocab {
                let mut s: Vec<usize> = seq.clone();
                s.push(k);
                next.push(s);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Probability of leaving the lattice through a move it forbids (a duration
/// overshooting `T`, or a zero-duration blank), summed over every path of a
/// prefix-independent grid `[t][u]`. Plain recursion, no dynamic programming.
#[allow(clippy::too_many_arguments)]
fn boundary_leak(
    tok: &[f64],
    dur: &[f64],
    frames: usize,
    max_rows: usize,
    symbols: usize,
    durations: &[usize],
    blank: usize,
    t: usize,
    u: usize,
) -> f64 {
    if t == frames {
        return 0.0;
    }
    let slots = durations.len();
    let cell = t * max_rows + u;
    let softmax = |row: &[f64]| {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let p_tok = softmax(&tok[cell * symbols..(cell + 1) * symbols]);
    let p_dur = softmax(&dur[cell * slots..(cell + 1) * slots]);
    let mut leak = 0.0;
    for (k, &pk) in p_tok.iter().enumerate() {
        for (j, &d) in durations.iter().enumerate() {
            let p = pk * p_dur[j];
            let next_u = if k == blank { u } else { u + 1 };
            if t + d > frames || (k == blank && d == 0) || next_u >= max_rows {
                leak += p;
            } else {
                leak += p * boundary_leak(tok, dur, frames, max_rows, symbols, durations, blank, t + d, next_u);
            }
        }
    }
    leak
}

/// `sum_y exp(-loss(y))` over every target sequence.
///
/// CTC (`T <= 4`, `V <= 2`) must sum to one. The TDT lattice only sums to one
/// when `D = {1}`: other duration sets lose the mass of moves that overshoot
/// the last frame, so for those the check is `sum + leak = 1` with the leak
/// computed by [`boundary_leak`].
pub fn normalization_suite(trials: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ctc_worst, mut unit_worst, mut leak_worst) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..trials {
        let frames = rng.random_range(1..=4);
        let vocab = rng.random_range(1..=2);
        let ctc: Vec<f64> = (0..frames * (vocab + 1)).map(|_| rng.random_range(-2.0..2.0)).collect();
        let logits = CtcLogits::new(frames, vocab, ctc).unwrap();
        let mass: f64 = all_sequences(vocab, frames)
            .iter()
            .map(|y| {
                let r = ctc_loss(&logits, y).unwrap();
                if r.feasible { (-r.loss).exp() } else { 0.0 }
            })
            .sum();
        ctc_worst = ctc_worst.max((mass - 1.0).abs());

        let durations = match trial % 3 {
            0 => vec![1],
            1 => vec![1, 2],
            _ => vec![1, 2, 3],
        };
        let frames = rng.random_range(1..=4);
        let vocab = rng.random_range(1..=2);
        let symbols = vocab + 1;
        let slots = durations.len();
        // One master grid sized for the longest reachable target; a target of
        // length U uses rows 0..=U, so every target sees the same model.
        let max_rows = frames + 1;
        let tok: Vec<f64> = (0..frames * max_rows * symbols).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dur: Vec<f64> = (0..frames * max_rows * slots).map(|_| rng.random_range(-2.0..2.0)).collect();
        let cfg = TdtConfig::new(durations.clone(), vocab).unwrap();
        let mass: f64 = all_sequences(vocab, frames)
            .iter()
            .map(|y| {
                let rows = y.len() + 1;
                let mut t_grid = Vec::with_capacity(frames * rows * symbols);
                let mut d_grid = Vec::with_capacity(frames * rows * slots);
                for t in 0..frames {
                    let tb = t * max_rows;
                    t_grid.extend_from_slice(&tok[tb * symbols..(tb + rows) * symbols]);
                    d_grid.extend_from_slice(&dur[tb * slots..(tb + rows) * slots]);
                }
                let l = TdtLatticeLogits::new(frames, rows, symbols, slots, t_grid, d_grid).unwrap();
                let r = tdt_loss(&l, y, &cfg).unwrap();
                if r.feasible { (-r.loss).exp() } else { 0.0 }
            })
            .sum();
        let leak = boundary_leak(&tok, &dur, frames, max_rows, symbols, &durations, vocab, 0, 0);
        if durations == [1] {
            unit_worst = unit_worst.max((mass - 1.0).abs());
        }
        leak_worst = leak_worst.max((mass + leak - 1.0).abs());
    }
    vec![
        CheckResult::new("ctc mass over all targets", trials, ctc_worst, NORMALIZATION_TOLERANCE),
        CheckResult::new("tdt mass over all targets, D={1}", trials.div_ceil(3), unit_worst, NORMALIZATION_TOLERANCE),
        CheckResult::new("tdt mass plus boundary leak", trials, leak_worst, NORMALIZATION_TOLERANCE),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequences_enumerated() {
        assert_eq!(all_sequences(2, 2).len(), 1 + 2 + 4);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(0.0, 1e-9) <= 1e-3);
    }

    #[test]
    fn small_suites_pass() {
        for r in loss_oracle_suite(20, 1)
            .into_iter()
            .chain(loss_gradient_suite(3, 2))
            .chain(normalization_suite(4, 3))
            .chain(model_gradient_suite(2, 4))
        {
            assert!(r.passed, "{r}");
        }
    }
}

