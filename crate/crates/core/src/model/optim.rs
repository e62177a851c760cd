use serde::{Deserialize, Serialize};

use super::Params;

/// `max_lr · min(step / warmup, sqrt(warmup / step))` for `step >= 1`; with no
/// warmup the rate decays as `max_lr / sqrt(step)`.
pub fn learning_rate(max_lr: f64, warmup_steps: u64, step: u64) -> f64 {
    let step = step.max(1) as f64;
    if warmup_steps == 0 {
        return max_lr / step.sqrt();
    }
    let w = warmup_steps as f64;
    max_lr * (step / w).min((w / step).sqrt())
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    #[serde(skip)]
    m: Option<Params>,
    #[serde(skip)]
    v: Option<Params>,
    /// Updates applied so far.
    pub step: u64,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self { beta1: 0.9, beta2: 0.98, eps: 1e-9, weight_decay, m: None, v: None, step: 0 }
    }

    /// One update with learning rate `lr`.
    pub fn update(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        self.step += 1;
        let m = self.m.get_or_insert_with(|| zeros_like(params));
        let v = self.v.get_or_insert_with(|| zeros_like(params));
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let tensors = params.tensors_mut().into_iter().zip(grads.tensors()).zip(m.tensors_mut()).zip(v.tensors_mut());
        for (((p, g), m), v) in tensors {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * *p);
            });
        }
    }
}

fn zeros_like(p: &Params) -> Params {
    let mut z = p.clone();
    z.scale(0.0);
    z
}
