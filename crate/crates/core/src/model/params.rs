use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelConfig, ModelError};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

/// All trainable tensors. Row-vector convention: a layer computes `x · W + b`
/// with biases stored as `1 × n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub sub_w: Array2<f64>,
    pub sub_b: Array2<f64>,
    pub blocks: Vec<BlockParams>,
    /// `V + 1` rows; row `V` is the start symbol.
    pub pred_emb: Array2<f64>,
    pub pred_w: Array2<f64>,
    pub joint_enc: Array2<f64>,
    pub joint_pred: Array2<f64>,
    pub joint_b: Array2<f64>,
    pub tok_w: Array2<f64>,
    pub tok_b: Array2<f64>,
    pub dur_w: Array2<f64>,
    pub dur_b: Array2<f64>,
    pub ctc_w: Array2<f64>,
    pub ctc_b: Array2<f64>,
}

/// Tensor names and shapes in canonical order.
pub(crate) fn layout(cfg: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let (f, h, p, j) = (cfg.feature_dim, cfg.hidden_dim, cfg.predictor_dim, cfg.joint_dim);
    let (v1, d) = (cfg.vocab_size + 1, cfg.durations.len());
    let mut out = vec![
        ("sub_w".to_string(), (cfg.subsample_factor * f, h)),
        ("sub_b".to_string(), (1, h)),
    ];
    for b in 0..cfg.num_blocks {
        for (name, shape) in [
            ("wq", (h, h)),
            ("wk", (h, h)),
            ("wv", (h, h)),
            ("wo", (h, h)),
            ("w1", (h, 4 * h)),
            ("b1", (1, 4 * h)),
            ("w2", (4 * h, h)),
            ("b2", (1, h)),
        ] {
            out.push((format!("block{b}.{name}"), shape));
        }
    }
    for (name, shape) in [
        ("pred_emb", (v1, p)),
        ("pred_w", (p, p)),
        ("joint_enc", (h, j)),
        ("joint_pred", (p, j)),
        ("joint_b", (1, j)),
        ("tok_w", (j, v1)),
        ("tok_b", (1, v1)),
        ("dur_w", (j, d)),
        ("dur_b", (1, d)),
        ("ctc_w", (h, v1)),
        ("ctc_b", (1, v1)),
    ] {
        out.push((name.to_string(), shape));
    }
    out
}

fn is_bias(name: &str) -> bool {
    name.rsplit('.').next().is_some_and(|n| n.ends_with("_b") || n == "b1" || n == "b2")
}

impl Params {
    /// Builds from tensors in canonical order, checking every shape.
    pub fn from_tensors(cfg: &ModelConfig, tensors: Vec<Array2<f64>>) -> Result<Self, ModelError> {
        let lay = layout(cfg);
        if tensors.len() != lay.len() {
            return Err(ModelError::Shape(format!("expected {} tensors, got {}", lay.len(), tensors.len())));
        }
        for ((name, shape), t) in lay.iter().zip(&tensors) {
            if t.dim() != *shape {
                return Err(ModelError::Shape(format!("{name}: expected {shape:?}, got {:?}", t.dim())));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        let sub_w = next();
        let sub_b = next();
        let blocks = (0..cfg.num_blocks)
            .map(|_| BlockParams {
                wq: next(),
                wk: next(),
                wv: next(),
                wo: next(),
                w1: next(),
                b1: next(),
                w2: next(),
                b2: next(),
            })
            .collect();
        Ok(Self {
            sub_w,
            sub_b,
            blocks,
            pred_emb: next(),
            pred_w: next(),
            joint_enc: next(),
            joint_pred: next(),
            joint_b: next(),
            tok_w: next(),
            tok_b: next(),
            dur_w: next(),
            dur_b: next(),
            ctc_w: next(),
            ctc_b: next(),
        })
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let tensors = layout(cfg).into_iter().map(|(_, s)| Array2::zeros(s)).collect();
        Self::from_tensors(cfg, tensors).expect("layout shapes")
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init(cfg: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let tensors = layout(cfg)
            .into_iter()
            .map(|(name, (r, c))| {
                if is_bias(&name) {
                    Array2::zeros((r, c))
                } else {
                    let a = (6.0 / (r + c) as f64).sqrt();
                    Array2::from_shape_fn((r, c), |_| rng.random_range(-a..a))
                }
            })
            .collect();
        Self::from_tensors(cfg, tensors).expect("layout shapes")
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![&self.sub_w, &self.sub_b];
        for b in &self.blocks {
            out.extend([&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.b1, &b.w2, &b.b2]);
        }
        out.extend([
            &self.pred_emb,
            &self.pred_w,
            &self.joint_enc,
            &self.joint_pred,
            &self.joint_b,
            &self.tok_w,
            &self.tok_b,
            &self.dur_w,
            &self.dur_b,
            &self.ctc_w,
            &self.ctc_b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.sub_w, &mut self.sub_b];
        for b in &mut self.blocks {
            out.extend([&mut b.wq, &mut b.wk, &mut b.wv, &mut b.wo, &mut b.w1, &mut b.b1, &mut b.w2, &mut b.b2]);
        }
        out.extend([
            &mut self.pred_emb,
            &mut self.pred_w,
            &mut self.joint_enc,
            &mut self.joint_pred,
            &mut self.joint_b,
            &mut self.tok_w,
            &mut self.tok_b,
            &mut self.dur_w,
            &mut self.dur_b,
            &mut self.ctc_w,
            &mut self.ctc_b,
        ]);
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|v| v * s);
        }
    }

    /// Tensors of the CTC head only.
    pub fn ctc_head(&self) -> [&Array2<f64>; 2] {
        [&self.ctc_w, &self.ctc_b]
    }

    /// Predictor, joint combiner and both transducer heads.
    pub fn transducer_head(&self) -> [&Array2<f64>; 9] {
        [
            &self.pred_emb,
            &self.pred_w,
            &self.joint_enc,
            &self.joint_pred,
            &self.joint_b,
            &self.tok_w,
            &self.tok_b,
            &self.dur_w,
            &self.dur_b,
        ]
    }

    /// All values flattened in canonical order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.num_values() {
            return Err(ModelError::Shape(format!("expected {} values, got {}", self.num_values(), values.len())));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            for (dst, &src) in t.iter_mut().zip(&values[off..]) {
                *dst = src;
            }
            off += t.len();
        }
        Ok(())
    }
}
