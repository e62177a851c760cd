use ndarray::{s, Array2, ArrayView2, Axis};

use super::{AttentionContext, ModelConfig, ModelError, Params};
use crate::decode::{greedy_ctc_decode, greedy_tdt_decode, DecodeError, Hypothesis, JointOutput, JointScorer, UnitDuration};
use crate::lattice::{ctc_loss, tdt_loss, CtcLogits, TdtConfig, TdtLatticeLogits};

/// Fixed sinusoidal position table, `frames × dim`.
pub fn positional_encoding(frames: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((frames, dim), |(t, i)| {
        let freq = 1.0 / 10000f64.powf((i - i % 2) as f64 / dim as f64);
        let x = t as f64 * freq;
        if i % 2 == 0 {
            x.sin()
        } else {
            x.cos()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

/// Per-sample losses. `total` is `L_TDT + lambda * L_CTC`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLoss {
    pub tdt: f64,
    pub ctc: f64,
    pub total: f64,
    pub feasible: bool,
}

struct BlockCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    p: Array2<f64>,
    c: Array2<f64>,
    a: Array2<f64>,
    m1: Array2<f64>,
    r: Array2<f64>,
}

struct EncoderCache {
    x0: Array2<f64>,
    z: Array2<f64>,
    blocks: Vec<BlockCache>,
    enc: Array2<f64>,
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu_mask(d: &mut Array2<f64>, pre: &Array2<f64>) {
    ndarray::Zip::from(d).and(pre).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
}

fn sum_rows(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = Params::init(&config);
        Ok(Self { config, params })
    }

    pub fn with_params(config: ModelConfig, params: Params) -> Result<Self, ModelError> {
        config.validate()?;
        let check = Params::zeros(&config);
        for (a, b) in params.tensors().iter().zip(check.tensors()) {
            if a.dim() != b.dim() {
                return Err(ModelError::Shape(format!("parameter shape {:?} vs {:?}", a.dim(), b.dim())));
            }
        }
        if params.tensors().len() != check.tensors().len() {
            return Err(ModelError::Shape("parameter count does not match config".into()));
        }
        Ok(Self { config, params })
    }

    fn check_features(&self, features: &ArrayView2<f64>) -> Result<(), ModelError> {
        if features.nrows() == 0 || features.ncols() != self.config.feature_dim {
            return Err(ModelError::Shape(format!(
                "features are {}x{}, expected Tx{} with T >= 1",
                features.nrows(),
                features.ncols(),
                self.config.feature_dim
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("input features".into()));
        }
        Ok(())
    }

    /// Stacks `subsample_factor` consecutive frames per output row, zero-padding the tail.
    fn stack_frames(&self, features: &ArrayView2<f64>) -> Array2<f64> {
        let (k, f) = (self.config.subsample_factor, self.config.feature_dim);
        let t_out = self.config.output_frames(features.nrows());
        let mut x0 = Array2::zeros((t_out, k * f));
        for (i, row) in features.rows().into_iter().enumerate() {
            let (r, j) = (i / k, i % k);
            x0.slice_mut(s![r, j * f..(j + 1) * f]).assign(&row);
        }
        x0
    }

    /// Subsampler output before the nonlinearity.
    pub fn subsample_linear(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check_features(&features)?;
        let x0 = self.stack_frames(&features);
        Ok(x0.dot(&self.params.sub_w) + &self.params.sub_b)
    }

    /// Subsampler output: projection, ReLU, then the position table.
    pub fn subsample(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        let z = self.subsample_linear(features)?;
        Ok(relu(&z) + positional_encoding(z.nrows(), self.config.hidden_dim))
    }

    fn allowed(&self, i: usize, j: usize) -> bool {
        match self.config.attention_context {
            AttentionContext::Full => true,
            AttentionContext::Windowed(w) => i.abs_diff(j) <= w,
        }
    }

    fn encode_cached(&self, features: &ArrayView2<f64>) -> EncoderCache {
        let p = &self.params;
        let h = self.config.hidden_dim;
        let scale = 1.0 / (h as f64).sqrt();
        let x0 = self.stack_frames(features);
        let z = x0.dot(&p.sub_w) + &p.sub_b;
        let mut x = relu(&z) + positional_encoding(z.nrows(), h);
        let mut blocks = Vec::with_capacity(p.blocks.len());
        for bp in &p.blocks {
            let q = x.dot(&bp.wq);
            let k = x.dot(&bp.wk);
            let v = x.dot(&bp.wv);
            let mut att = q.dot(&k.t()) * scale;
            let n = att.nrows();
            for i in 0..n {
                let mut row = att.row_mut(i);
                let mut max = f64::NEG_INFINITY;
                for j in 0..n {
                    if self.allowed(i, j) {
                        max = max.max(row[j]);
                    }
                }
                let mut sum = 0.0;
                for j in 0..n {
                    row[j] = if self.allowed(i, j) { (row[j] - max).exp() } else { 0.0 };
                    sum += row[j];
                }
                row.mapv_inplace(|e| e / sum);
            }
            let c = att.dot(&v);
            let a = &x + &c.dot(&bp.wo);
            let m1 = a.dot(&bp.w1) + &bp.b1;
            let r = relu(&m1);
            let out = &a + &(r.dot(&bp.w2) + &bp.b2);
            blocks.push(BlockCache { x, q, k, v, p: att, c, a, m1, r });
            x = out;
        }
        EncoderCache { x0, z, blocks, enc: x }
    }

    /// Which ReLU units of the encoder are active (pre-activation > 0), in
    /// subsampler-then-block order. The loss is smooth in the parameters
    /// wherever this pattern is constant.
    pub fn relu_pattern(&self, features: ArrayView2<f64>) -> Result<Vec<bool>, ModelError> {
        self.check_features(&features)?;
        let cache = self.encode_cached(&features);
        let mut out: Vec<bool> = cache.z.iter().map(|&v| v > 0.0).collect();
        for b in &cache.blocks {
            out.extend(b.m1.iter().map(|&v| v > 0.0));
        }
        Ok(out)
    }

    /// Encoder states, `ceil(T_in / subsample_factor) × H`.
    pub fn encode(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check_features(&features)?;
        Ok(self.encode_cached(&features).enc)
    }

    fn encode_backward(&self, cache: &EncoderCache, d_enc: Array2<f64>, g: &mut Params) {
        let h = self.config.hidden_dim;
        let scale = 1.0 / (h as f64).sqrt();
        let mut d = d_enc;
        for (bi, (bp, bc)) in self.params.blocks.iter().zip(&cache.blocks).enumerate().rev() {
            let gb = &mut g.blocks[bi];
            gb.b2 += &sum_rows(&d);
            gb.w2 += &bc.r.t().dot(&d);
            let mut d_m1 = d.dot(&bp.w2.t());
            relu_mask(&mut d_m1, &bc.m1);
            gb.b1 += &sum_rows(&d_m1);
            gb.w1 += &bc.a.t().dot(&d_m1);
            let d_a = &d + &d_m1.dot(&bp.w1.t());

            gb.wo += &bc.c.t().dot(&d_a);
            let d_c = d_a.dot(&bp.wo.t());
            let d_p = d_c.dot(&bc.v.t());
            let d_v = bc.p.t().dot(&d_c);
            let inner = (&d_p * &bc.p).sum_axis(Axis(1)).insert_axis(Axis(1));
            let d_s = &bc.p * &(&d_p - &inner) * scale;
            let d_q = d_s.dot(&bc.k);
            let d_k = d_s.t().dot(&bc.q);
            gb.wq += &bc.x.t().dot(&d_q);
            gb.wk += &bc.x.t().dot(&d_k);
            gb.wv += &bc.x.t().dot(&d_v);
            d = d_a + d_q.dot(&bp.wq.t()) + d_k.dot(&bp.wk.t()) + d_v.dot(&bp.wv.t());
        }
        relu_mask(&mut d, &cache.z);
        g.sub_b += &sum_rows(&d);
        g.sub_w += &cache.x0.t().dot(&d);
    }

    pub fn ctc_logits(&self, enc: &Array2<f64>) -> Result<CtcLogits, ModelError> {
        let logits = enc.dot(&self.params.ctc_w) + &self.params.ctc_b;
        let values = logits.iter().copied().collect();
        Ok(CtcLogits::new(enc.nrows(), self.config.vocab_size, values)?)
    }

    fn prev_tokens(&self, target: &[usize]) -> Vec<usize> {
        std::iter::once(self.config.vocab_size).chain(target.iter().copied()).collect()
    }

    /// Predictor output for each previous token, projected into the joint space.
    fn predictor(&self, prev: &[usize]) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let p = &self.params;
        let e = p.pred_emb.select(Axis(0), prev);
        let pp = e.dot(&p.pred_w);
        let pj = pp.dot(&p.joint_pred);
        (e, pp, pj)
    }

    /// Combiner activations for every `(t, u)` row in `[t][u]` order.
    fn joint_hidden(&self, enc: &Array2<f64>, pj: &Array2<f64>) -> Array2<f64> {
        let ej = enc.dot(&self.params.joint_enc) + &self.params.joint_b;
        let (t_len, rows, h) = (ej.nrows(), pj.nrows(), ej.ncols());
        let mut g = Array2::zeros((t_len * rows, h));
        for t in 0..t_len {
            for u in 0..rows {
                let mut out = g.row_mut(t * rows + u);
                out.assign(&ej.row(t));
                out += &pj.row(u);
                out.mapv_inplace(f64::tanh);
            }
        }
        g
    }

    /// Full token and duration lattice for `target`.
    pub fn tdt_logits(&self, enc: &Array2<f64>, target: &[usize]) -> Result<TdtLatticeLogits, ModelError> {
        let (_, _, pj) = self.predictor(&self.prev_tokens(target));
        let g = self.joint_hidden(enc, &pj);
        self.lattice_from_hidden(enc.nrows(), target.len() + 1, &g)
    }

    fn lattice_from_hidden(&self, frames: usize, rows: usize, g: &Array2<f64>) -> Result<TdtLatticeLogits, ModelError> {
        let p = &self.params;
        let tok = g.dot(&p.tok_w) + &p.tok_b;
        let dur = g.dot(&p.dur_w) + &p.dur_b;
        Ok(TdtLatticeLogits::new(
            frames,
            rows,
            self.config.vocab_size + 1,
            self.config.durations.len(),
            tok.iter().copied().collect(),
            dur.iter().copied().collect(),
        )?)
    }

    /// Hybrid loss of one sample. When `grads` is given, the gradient of
    /// `total` is added into it (nothing is added for infeasible samples).
    pub fn sample_loss(
        &self,
        features: ArrayView2<f64>,
        target: &[usize],
        lambda: f64,
        grads: Option<&mut Params>,
    ) -> Result<SampleLoss, ModelError> {
        self.check_features(&features)?;
        let cache = self.encode_cached(&features);
        let enc = &cache.enc;
        let cfg = self.config.tdt_config();

        let ctc_in = self.ctc_logits(enc)?;
        let ctc = ctc_loss(&ctc_in, target)?;

        let prev = self.prev_tokens(target);
        let (e, pp, pj) = self.predictor(&prev);
        let g_hid = self.joint_hidden(enc, &pj);
        let lattice = self.lattice_from_hidden(enc.nrows(), prev.len(), &g_hid)?;
        let tdt = tdt_loss(&lattice, target, &cfg)?;

        let feasible = ctc.feasible && tdt.feasible;
        if feasible && !(ctc.loss.is_finite() && tdt.loss.is_finite()) {
            return Err(ModelError::NonFinite(format!("loss (tdt {}, ctc {})", tdt.loss, ctc.loss)));
        }
        let total = if feasible { tdt.loss + lambda * ctc.loss } else { f64::INFINITY };
        let out = SampleLoss { tdt: tdt.loss, ctc: ctc.loss, total, feasible };
        let Some(g) = grads else { return Ok(out) };
        if !feasible {
            return Ok(out);
        }

        let p = &self.params;
        let (t_len, rows) = (enc.nrows(), prev.len());
        let v1 = self.config.vocab_size + 1;
        let d_tok = Array2::from_shape_vec((t_len * rows, v1), tdt.grad_token_logits)
            .map_err(|e| ModelError::Shape(e.to_string()))?;
        let d_dur_vals = tdt.grad_duration_logits.expect("tdt loss returns duration gradients");
        let d_dur = Array2::from_shape_vec((t_len * rows, cfg.durations.len()), d_dur_vals)
            .map_err(|e| ModelError::Shape(e.to_string()))?;

        g.tok_w += &g_hid.t().dot(&d_tok);
        g.tok_b += &sum_rows(&d_tok);
        g.dur_w += &g_hid.t().dot(&d_dur);
        g.dur_b += &sum_rows(&d_dur);
        let mut d_z = d_tok.dot(&p.tok_w.t()) + d_dur.dot(&p.dur_w.t());
        ndarray::Zip::from(&mut d_z).and(&g_hid).for_each(|d, &a| *d *= 1.0 - a * a);
        g.joint_b += &sum_rows(&d_z);
        let d_z3 = d_z.into_shape_with_order((t_len, rows, self.config.joint_dim)).expect("row-major");
        let d_ej = d_z3.sum_axis(Axis(1));
        let d_pj = d_z3.sum_axis(Axis(0));
        g.joint_enc += &enc.t().dot(&d_ej);
        let mut d_enc = d_ej.dot(&p.joint_enc.t());
        g.joint_pred += &pp.t().dot(&d_pj);
        let d_pp = d_pj.dot(&p.joint_pred.t());
        g.pred_w += &e.t().dot(&d_pp);
        let d_e = d_pp.dot(&p.pred_w.t());
        for (u, &tok) in prev.iter().enumerate() {
            let mut row = g.pred_emb.row_mut(tok);
            row += &d_e.row(u);
        }

        if lambda != 0.0 {
            let d_ctc = Array2::from_shape_vec((t_len, v1), ctc.grad_token_logits)
                .map_err(|e| ModelError::Shape(e.to_string()))?
                * lambda;
            g.ctc_w += &enc.t().dot(&d_ctc);
            g.ctc_b += &sum_rows(&d_ctc);
            d_enc += &d_ctc.dot(&p.ctc_w.t());
        }
        self.encode_backward(&cache, d_enc, g);
        Ok(out)
    }

    pub fn decode_ctc(&self, features: ArrayView2<f64>) -> Result<Hypothesis, ModelError> {
        let enc = self.encode(features)?;
        Ok(greedy_ctc_decode(&self.ctc_logits(&enc)?))
    }

    /// Greedy TDT decode; `unit_duration` ignores the duration head and
    /// advances one frame per blank.
    pub fn decode_tdt(
        &self,
        features: ArrayView2<f64>,
        max_tokens_per_frame: usize,
        unit_duration: bool,
    ) -> Result<Hypothesis, ModelError> {
        let enc = self.encode(features)?;
        let scorer = UtteranceScorer::new(self, &enc);
        let frames = enc.nrows();
        let res = if unit_duration {
            let cfg = TdtConfig { durations: vec![1], blank: self.config.vocab_size };
            greedy_tdt_decode(&UnitDuration(&scorer), frames, &cfg, max_tokens_per_frame)
        } else {
            greedy_tdt_decode(&scorer, frames, &self.config.tdt_config(), max_tokens_per_frame)
        };
        res.map_err(|e| ModelError::Shape(e.to_string()))
    }
}

/// Joint network over the encoder states of one utterance.
pub struct UtteranceScorer<'a> {
    model: &'a Model,
    enc_proj: Array2<f64>,
}

impl<'a> UtteranceScorer<'a> {
    pub fn new(model: &'a Model, enc: &Array2<f64>) -> Self {
        let enc_proj = enc.dot(&model.params.joint_enc) + &model.params.joint_b;
        Self { model, enc_proj }
    }
}

impl JointScorer for UtteranceScorer<'_> {
    fn score(&self, frame: usize, prefix: &[usize]) -> Result<JointOutput, DecodeError> {
        if frame >= self.enc_proj.nrows() {
            return Err(DecodeError::Scorer(format!("frame {frame} out of range")));
        }
        let prev = prefix.last().copied().unwrap_or(self.model.config.vocab_size);
        if prev > self.model.config.vocab_size {
            return Err(DecodeError::Scorer(format!("token {prev} out of range")));
        }
        let (_, _, pj) = self.model.predictor(&[prev]);
        let p = &self.model.params;
        let g = (&self.enc_proj.slice(s![frame..frame + 1, ..]) + &pj).mapv(f64::tanh);
        let tok = g.dot(&p.tok_w) + &p.tok_b;
        let dur = g.dot(&p.dur_w) + &p.dur_b;
        Ok(JointOutput { token_logits: tok.iter().copied().collect(), duration_logits: dur.iter().copied().collect() })
    }
}
