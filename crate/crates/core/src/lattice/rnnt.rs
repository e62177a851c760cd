use super::{check_target, log_add, log_softmax, LatticeError, LossResult};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Standard RNN-T loss over a `[T][U+1][V+1]` grid of joint logits.
///
/// Tokens move `(t, u) -> (t, u + 1)`, blanks move `(t, u) -> (t + 1, u)` and an
/// alignment ends with the blank emitted from `(T - 1, U)`.
pub fn rnnt_loss(
    token_logits: &[f64],
    frames: usize,
    symbols: usize,
    target: &[usize],
    blank: usize,
) -> Result<LossResult, LatticeError> {
    let rows = target.len() + 1;
    if frames == 0 || symbols < 2 {
        return Err(LatticeError::Shape(format!("degenerate grid T={frames} V+1={symbols}")));
    }
    if token_logits.len() != frames * rows * symbols {
        return Err(LatticeError::Shape(format!(
            "grid has {} values, expected {}x{}x{}",
            token_logits.len(),
            frames,
            rows,
            symbols
        )));
    }
    if blank >= symbols {
        return Err(LatticeError::Shape(format!("blank {blank} outside {symbols} symbols")));
    }
    if let Some(i) = token_logits.iter().position(|v| !v.is_finite()) {
        return Err(LatticeError::NonFinite(i));
    }
    check_target(target, symbols, blank)?;

    let cell = |t: usize, u: usize| t * rows + u;
    let logp: Vec<Vec<f64>> = (0..frames * rows)
        .map(|c| log_softmax(&token_logits[c * symbols..(c + 1) * symbols]))
        .collect();
    let emit = |t: usize, u: usize| logp[cell(t, u)][target[u]];
    let skip = |t: usize, u: usize| logp[cell(t, u)][blank];

    let mut alpha = vec![NEG_INF; frames * rows];
    for t in 0..frames {
        for u in 0..rows {
            let v = if t == 0 && u == 0 {
                0.0
            } else {
                let mut acc = NEG_INF;
                if t > 0 {
                    acc = log_add(acc, alpha[cell(t - 1, u)] + skip(t - 1, u));
                }
                if u > 0 {
                    acc = log_add(acc, alpha[cell(t, u - 1)] + emit(t, u - 1));
                }
                acc
            };
            alpha[cell(t, u)] = v;
        }
    }
    let log_like = alpha[cell(frames - 1, rows - 1)] + skip(frames - 1, rows - 1);
    if log_like == NEG_INF {
        return Ok(LossResult::infeasible(token_logits.len(), None));
    }

    let mut beta = vec![NEG_INF; frames * rows];
    for t in (0..frames).rev() {
        for u in (0..rows).rev() {
            let v = if t == frames - 1 && u == rows - 1 {
                skip(t, u)
            } else {
                let mut acc = NEG_INF;
                if t + 1 < frames {
                    acc = log_add(acc, skip(t, u) + beta[cell(t + 1, u)]);
                }
                if u + 1 < rows {
                    acc = log_add(acc, emit(t, u) + beta[cell(t, u + 1)]);
                }
                acc
            };
            beta[cell(t, u)] = v;
        }
    }

    let mut grad = vec![0.0; token_logits.len()];
    for t in 0..frames {
        for u in 0..rows {
            let a = alpha[cell(t, u)];
            if a == NEG_INF {
                continue;
            }
            let c = cell(t, u);
            let mut g_blank = 0.0;
            let mut g_emit = 0.0;
            if t == frames - 1 && u == rows - 1 {
                g_blank = (a + skip(t, u) - log_like).exp();
            } else if t + 1 < frames {
                g_blank = (a + skip(t, u) + beta[cell(t + 1, u)] - log_like).exp();
            }
            if u + 1 < rows {
                g_emit = (a + emit(t, u) + beta[cell(t, u + 1)] - log_like).exp();
            }
            let total = g_blank + g_emit;
            if total == 0.0 {
                continue;
            }
            let g = &mut grad[c * symbols..(c + 1) * symbols];
            for k in 0..symbols {
                g[k] = logp[c][k].exp() * total;
            }
            g[blank] -= g_blank;
            if u + 1 < rows {
                g[target[u]] -= g_emit;
            }
        }
    }

    Ok(LossResult { loss: -log_like, feasible: true, grad_token_logits: grad, grad_duration_logits: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_alignment_token_then_blank() {
        let r = rnnt_loss(&[0.0; 4], 1, 2, &[0], 1).unwrap();
        assert!((r.loss + 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_checked() {
        assert!(rnnt_loss(&[0.0; 3], 1, 2, &[0], 1).is_err());
        assert!(rnnt_loss(&[0.0; 4], 1, 2, &[1], 1).is_err());
    }
}
