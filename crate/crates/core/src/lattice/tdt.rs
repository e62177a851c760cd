use super::{check_target, log_add, log_softmax, LatticeError, LossResult, TdtConfig, TdtLatticeLogits};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// One outgoing arc of state `(t, u)`.
#[derive(Clone, Copy)]
struct Arc {
    symbol: usize,
    slot: usize,
    to_t: usize,
    to_u: usize,
    weight: f64,
}

/// Token-and-duration transducer loss.
///
/// States are `(t, u)` with `t` in `0..=T` and `u` in `0..=U`; `(0, 0)` is the
/// start and `(T, U)` the accept state. From any state with `t < T`:
///
/// * emitting `y[u]` with duration `d` moves to `(t + d, u + 1)`;
/// * emitting blank with duration `d >= 1` moves to `(t + d, u)`;
///
/// and both require `t + d <= T`. An arc weighs `P_tok(symbol | t, u) * P_dur(d | t, u)`.
pub fn tdt_loss(
    logits: &TdtLatticeLogits,
    target: &[usize],
    cfg: &TdtConfig,
) -> Result<LossResult, LatticeError> {
    cfg.validate()?;
    let frames = logits.frames();
    let rows = logits.rows();
    let symbols = logits.symbols();
    let slots = logits.slots();
    if rows != target.len() + 1 {
        return Err(LatticeError::Shape(format!(
            "lattice has {rows} prefix rows but target has {} tokens",
            target.len()
        )));
    }
    if slots != cfg.durations.len() {
        return Err(LatticeError::Shape(format!(
            "lattice has {slots} duration slots, config has {}",
            cfg.durations.len()
        )));
    }
    if cfg.blank >= symbols {
        return Err(LatticeError::Shape(format!("blank {} outside {symbols} symbols", cfg.blank)));
    }
    check_target(target, symbols, cfg.blank)?;

    let tok_len = frames * rows * symbols;
    let dur_len = frames * rows * slots;
    let n_u = rows;
    let idx = |t: usize, u: usize| t * n_u + u;

    let mut tok_lp = vec![0.0; tok_len];
    let mut dur_lp = vec![0.0; dur_len];
    for t in 0..frames {
        for u in 0..rows {
            let base = idx(t, u);
            tok_lp[base * symbols..(base + 1) * symbols].copy_from_slice(&log_softmax(logits.token_row(t, u)));
            dur_lp[base * slots..(base + 1) * slots].copy_from_slice(&log_softmax(logits.duration_row(t, u)));
        }
    }

    let arcs_from = |t: usize, u: usize| -> Vec<Arc> {
        let base = idx(t, u);
        let mut arcs = Vec::with_capacity(2 * slots);
        for (slot, &d) in cfg.durations.iter().enumerate() {
            if t + d > frames {
                continue;
            }
            let dur = dur_lp[base * slots + slot];
            if u < target.len() {
                let symbol = target[u];
                arcs.push(Arc { symbol, slot, to_t: t + d, to_u: u + 1, weight: tok_lp[base * symbols + symbol] + dur });
            }
            if d >= 1 {
                let symbol = cfg.blank;
                arcs.push(Arc { symbol, slot, to_t: t + d, to_u: u, weight: tok_lp[base * symbols + symbol] + dur });
            }
        }
        arcs
    };

    // Forward: states in (t asc, u asc) order, which is topological because
    // zero-duration arcs only ever increase u.
    let n_states = (frames + 1) * n_u;
    let mut alpha = vec![NEG_INF; n_states];
    alpha[idx(0, 0)] = 0.0;
    for t in 0..frames {
        for u in 0..rows {
            let a = alpha[idx(t, u)];
            if a == NEG_INF {
                continue;
            }
            for arc in arcs_from(t, u) {
                let dst = idx(arc.to_t, arc.to_u);
                alpha[dst] = log_add(alpha[dst], a + arc.weight);
            }
        }
    }
    let log_like = alpha[idx(frames, rows - 1)];
    if log_like == NEG_INF {
        return Ok(LossResult::infeasible(tok_len, Some(dur_len)));
    }

    let mut beta = vec![NEG_INF; n_states];
    beta[idx(frames, rows - 1)] = 0.0;
    for t in (0..frames).rev() {
        for u in (0..rows).rev() {
            let mut acc = NEG_INF;
            for arc in arcs_from(t, u) {
                acc = log_add(acc, arc.weight + beta[idx(arc.to_t, arc.to_u)]);
            }
            beta[idx(t, u)] = acc;
        }
    }

    // Arc posteriors give the gradient w.r.t. the log-probabilities; pushing
    // them through each softmax gives p_k * G - g_k, with G the state's total
    // outgoing posterior.
    let mut grad_tok = vec![0.0; tok_len];
    let mut grad_dur = vec![0.0; dur_len];
    let mut g_tok = vec![0.0; symbols];
    let mut g_dur = vec![0.0; slots];
    for t in 0..frames {
        for u in 0..rows {
            let a = alpha[idx(t, u)];
            if a == NEG_INF {
                continue;
            }
            g_tok.iter_mut().for_each(|g| *g = 0.0);
            g_dur.iter_mut().for_each(|g| *g = 0.0);
            let mut total = 0.0;
            for arc in arcs_from(t, u) {
                let b = beta[idx(arc.to_t, arc.to_u)];
                if b == NEG_INF {
                    continue;
                }
                let post = (a + arc.weight + b - log_like).exp();
                g_tok[arc.symbol] += post;
                g_dur[arc.slot] += post;
                total += post;
            }
            if total == 0.0 {
                continue;
            }
            let base = idx(t, u);
            for k in 0..symbols {
                grad_tok[base * symbols + k] = tok_lp[base * symbols + k].exp() * total - g_tok[k];
            }
            for j in 0..slots {
                grad_dur[base * slots + j] = dur_lp[base * slots + j].exp() * total - g_dur[j];
            }
        }
    }

    Ok(LossResult {
        loss: -log_like,
        feasible: true,
        grad_token_logits: grad_tok,
        grad_duration_logits: Some(grad_dur),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(frames: usize, rows: usize, symbols: usize, slots: usize) -> TdtLatticeLogits {
        TdtLatticeLogits::new(
            frames,
            rows,
            symbols,
            slots,
            vec![0.0; frames * rows * symbols],
            vec![0.0; frames * rows * slots],
        )
        .unwrap()
    }

    #[test]
    fn one_frame_one_token_two_durations() {
        // token(d=1) at 0.25, or token(d=0) then blank(d=1) at 0.0625
        let cfg = TdtConfig::new(vec![0, 1], 1).unwrap();
        let r = tdt_loss(&uniform(1, 2, 2, 2), &[0], &cfg).unwrap();
        assert!((r.loss + 0.3125f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_target_unit_duration_is_all_blanks() {
        let cfg = TdtConfig::new(vec![1], 2).unwrap();
        let frames = 4;
        let tok: Vec<f64> = (0..frames * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let dur = vec![0.5; frames];
        let logits = TdtLatticeLogits::new(frames, 1, 3, 1, tok.clone(), dur).unwrap();
        let r = tdt_loss(&logits, &[], &cfg).unwrap();
        let expected: f64 = (0..frames).map(|t| -log_softmax(&tok[t * 3..t * 3 + 3])[2]).sum();
        assert!((r.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn unreachable_accept_is_flagged() {
        let cfg = TdtConfig::new(vec![1, 2], 3).unwrap();
        let r = tdt_loss(&uniform(2, 4, 4, 2), &[0, 1, 2], &cfg).unwrap();
        assert!(!r.feasible);
        assert!(r.loss.is_infinite());
        assert!(r.grad_token_logits.iter().all(|&g| g == 0.0));
        assert!(r.grad_duration_logits.unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let cfg = TdtConfig::new(vec![0, 1], 1).unwrap();
        assert!(matches!(tdt_loss(&uniform(1, 3, 2, 2), &[0], &cfg), Err(LatticeError::Shape(_))));
        let cfg3 = TdtConfig::new(vec![0, 1, 2], 1).unwrap();
        assert!(matches!(tdt_loss(&uniform(1, 2, 2, 2), &[0], &cfg3), Err(LatticeError::Shape(_))));
    }
}
