use super::{check_target, log_add, log_softmax, CtcLogits, LatticeError, LossResult};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Minimum number of frames a CTC alignment of `target` needs: one per token
/// plus one blank between each pair of equal neighbours.
pub fn ctc_min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// CTC negative log-likelihood of `target` with gradients w.r.t. the logits.
pub fn ctc_loss(logits: &CtcLogits, target: &[usize]) -> Result<LossResult, LatticeError> {
    let frames = logits.frames();
    let width = logits.vocab() + 1;
    let blank = logits.blank();
    check_target(target, width, blank)?;

    if frames < ctc_min_frames(target) {
        return Ok(LossResult::infeasible(frames * width, None));
    }

    // Blank-augmented label sequence: blank, y1, blank, y2, ..., yU, blank.
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(target.iter().flat_map(|&y| [y, blank]))
        .collect();
    let s_len = ext.len();

    let logp: Vec<Vec<f64>> = (0..frames).map(|t| log_softmax(logits.row(t))).collect();

    // alpha[t][s] and beta[t][s] both include the emission at frame t.
    let mut alpha = vec![vec![NEG_INF; s_len]; frames];
    alpha[0][0] = logp[0][ext[0]];
    if s_len > 1 {
        alpha[0][1] = logp[0][ext[1]];
    }
    for t in 1..frames {
        for s in 0..s_len {
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = log_add(acc, alpha[t - 1][s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, alpha[t - 1][s - 2]);
            }
            if acc != NEG_INF {
                alpha[t][s] = acc + logp[t][ext[s]];
            }
        }
    }

    let last = frames - 1;
    let log_like = if s_len > 1 {
        log_add(alpha[last][s_len - 1], alpha[last][s_len - 2])
    } else {
        alpha[last][0]
    };
    if log_like == NEG_INF {
        return Ok(LossResult::infeasible(frames * width, None));
    }

    let mut beta = vec![vec![NEG_INF; s_len]; frames];
    beta[last][s_len - 1] = logp[last][ext[s_len - 1]];
    if s_len > 1 {
        beta[last][s_len - 2] = logp[last][ext[s_len - 2]];
    }
    for t in (0..last).rev() {
        for s in 0..s_len {
            let mut acc = beta[t + 1][s];
            if s + 1 < s_len {
                acc = log_add(acc, beta[t + 1][s + 1]);
            }
            if s + 2 < s_len && ext[s] != blank && ext[s] != ext[s + 2] {
                acc = log_add(acc, beta[t + 1][s + 2]);
            }
            if acc != NEG_INF {
                beta[t][s] = acc + logp[t][ext[s]];
            }
        }
    }

    // d(-log P)/d logit[t][k] = softmax[t][k] - occupancy[t][k].
    let mut grad = vec![0.0; frames * width];
    for t in 0..frames {
        let mut occ = vec![NEG_INF; width];
        for s in 0..s_len {
            let k = ext[s];
            occ[k] = log_add(occ[k], alpha[t][s] + beta[t][s]);
        }
        let g = &mut grad[t * width..(t + 1) * width];
        for k in 0..width {
            let post = if occ[k] == NEG_INF {
                0.0
            } else {
                (occ[k] - logp[t][k] - log_like).exp()
            };
            g[k] = logp[t][k].exp() - post;
        }
    }

    Ok(LossResult { loss: -log_like, feasible: true, grad_token_logits: grad, grad_duration_logits: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::oracle::ctc_brute_force;

    #[test]
    fn single_frame_uniform() {
        let logits = CtcLogits::new(1, 1, vec![0.0, 0.0]).unwrap();
        let r = ctc_loss(&logits, &[0]).unwrap();
        assert!((r.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(r.feasible);
    }

    #[test]
    fn too_many_tokens_is_infeasible() {
        let logits = CtcLogits::new(1, 2, vec![0.1, 0.2, 0.3]).unwrap();
        let r = ctc_loss(&logits, &[0, 1]).unwrap();
        assert!(!r.feasible);
        assert!(r.loss.is_infinite());
        assert!(r.grad_token_logits.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn repeats_need_a_separating_blank() {
        assert_eq!(ctc_min_frames(&[1, 1]), 3);
        let logits = CtcLogits::new(2, 2, vec![0.0; 6]).unwrap();
        assert!(!ctc_loss(&logits, &[1, 1]).unwrap().feasible);
        let logits = CtcLogits::new(3, 2, vec![0.0; 9]).unwrap();
        let r = ctc_loss(&logits, &[1, 1]).unwrap();
        // exactly one path: 1, blank, 1
        assert!((r.loss - 3.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_matches_enumeration() {
        let values = vec![0.3, -1.2, 0.7, 1.1, 0.05, -0.4];
        let logits = CtcLogits::new(2, 2, values).unwrap();
        let r = ctc_loss(&logits, &[0]).unwrap();
        let oracle = ctc_brute_force(&logits, &[0]);
        assert!((r.loss + oracle.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_all_blank() {
        let values = vec![0.3, -1.2, 0.7, 1.1];
        let logits = CtcLogits::new(2, 1, values.clone()).unwrap();
        let r = ctc_loss(&logits, &[]).unwrap();
        let expected: f64 = (0..2).map(|t| -log_softmax(&values[t * 2..t * 2 + 2])[1]).sum();
        assert!((r.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_token_rejected() {
        let logits = CtcLogits::new(2, 1, vec![0.0; 4]).unwrap();
        assert!(matches!(ctc_loss(&logits, &[1]), Err(LatticeError::InvalidToken { .. })));
    }
}
