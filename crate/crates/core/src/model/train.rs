use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::batch::{bucket_batches, default_bucket_sizes, BucketSize};
use super::optim::{learning_rate, AdamW};
use super::{Model, ModelError, Params, SampleLoss};
use crate::corpus::SegmentRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_lr: f64,
    pub warmup_steps: u64,
    /// Optimizer updates to run.
    pub total_steps: u64,
    pub weight_decay: f64,
    /// CTC weight of the hybrid loss.
    pub lambda: f64,
    pub grad_accum_batches: usize,
    pub bucket_batch_sizes: Vec<BucketSize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_lr: 3e-4,
            warmup_steps: 100,
            total_steps: 1000,
            weight_decay: 1e-2,
            lambda: 0.3,
            grad_accum_batches: 2,
            bucket_batch_sizes: default_bucket_sizes(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.warmup_steps > self.total_steps {
            return bad(format!("warmup_steps {} exceeds total_steps {}", self.warmup_steps, self.total_steps));
        }
        if self.grad_accum_batches == 0 {
            return bad("grad_accum_batches must be >= 1".into());
        }
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) || !(self.weight_decay >= 0.0) || !(self.lambda >= 0.0) {
            return bad("max_lr must be positive; weight_decay and lambda non-negative".into());
        }
        if self.bucket_batch_sizes.iter().any(|b| b.batch_size == 0) {
            return bad("all batch sizes must be >= 1".into());
        }
        Ok(())
    }
}

/// One training example. Rows of `features` from `length` on are padding and
/// never reach the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Array2<f64>,
    pub length: usize,
    pub target: Vec<usize>,
}

impl Sample {
    pub fn new(features: Array2<f64>, target: Vec<usize>) -> Self {
        let length = features.nrows();
        Self { features, length, target }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Optimizer updates applied so far.
    pub step: u64,
    /// Means over the feasible samples of the batch.
    pub tdt: f64,
    pub ctc: f64,
    pub total: f64,
    pub samples: usize,
    pub skipped: usize,
    /// Whether this batch completed an accumulation cycle.
    pub updated: bool,
    pub lr: f64,
}

/// Owns the parameters and optimizer state between steps.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub optimizer: AdamW,
    accum: Params,
    accum_batches: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let accum = Params::zeros(&model.config);
        let optimizer = AdamW::new(config.weight_decay);
        Ok(Self { model, config, optimizer, accum, accum_batches: 0 })
    }

    /// Forward and backward over `batch`; applies an update every
    /// `grad_accum_batches` calls using the mean of the accumulated batch
    /// gradients. On error the trainer state is left unchanged.
    pub fn training_step(&mut self, batch: &[Sample]) -> Result<StepReport, ModelError> {
        let model = &self.model;
        let lambda = self.config.lambda;
        let results: Vec<Result<(SampleLoss, Params), ModelError>> = batch
            .par_iter()
            .map(|s| {
                if s.length == 0 || s.length > s.features.nrows() {
                    return Err(ModelError::Shape(format!("sample length {} out of range", s.length)));
                }
                let mut g = Params::zeros(&model.config);
                let l = model.sample_loss(s.features.slice(s![..s.length, ..]), &s.target, lambda, Some(&mut g))?;
                Ok((l, g))
            })
            .collect();

        let mut grad = Params::zeros(&model.config);
        let (mut tdt, mut ctc, mut total, mut n) = (0.0, 0.0, 0.0, 0usize);
        for r in results {
            let (l, g) = r?;
            if l.feasible {
                grad.add_scaled(&g, 1.0);
                tdt += l.tdt;
                ctc += l.ctc;
                total += l.total;
                n += 1;
            }
        }
        let mut report = StepReport {
            step: self.optimizer.step,
            tdt: f64::NAN,
            ctc: f64::NAN,
            total: f64::NAN,
            samples: batch.len(),
            skipped: batch.len() - n,
            updated: false,
            lr: 0.0,
        };
        if n == 0 {
            return Ok(report);
        }
        let inv = 1.0 / n as f64;
        (report.tdt, report.ctc, report.total) = (tdt * inv, ctc * inv, total * inv);
        if !grad.is_finite() {
            return Err(ModelError::NonFinite("gradient".into()));
        }
        self.accum.add_scaled(&grad, inv);
        self.accum_batches += 1;
        if self.accum_batches == self.config.grad_accum_batches {
            let mut g = std::mem::replace(&mut self.accum, Params::zeros(&self.model.config));
            g.scale(1.0 / self.accum_batches as f64);
            self.accum_batches = 0;
            let lr = learning_rate(self.config.max_lr, self.config.warmup_steps, self.optimizer.step + 1);
            let before = (self.model.params.clone(), self.optimizer.clone());
            self.optimizer.update(&mut self.model.params, &g, lr);
            if !self.model.params.is_finite() {
                (self.model.params, self.optimizer) = before;
                return Err(ModelError::NonFinite("parameters after update".into()));
            }
            report.updated = true;
            report.lr = lr;
            report.step = self.optimizer.step;
        }
        Ok(report)
    }

    /// Trains until `total_steps` updates, drawing a fresh bucketed schedule
    /// for every pass over the data. `records[i]` describes `samples[i]`.
    pub fn run(
        &mut self,
        samples: &[Sample],
        records: &[SegmentRecord],
        mut on_batch: impl FnMut(&StepReport, &Model) -> Result<(), ModelError>,
    ) -> Result<(), ModelError> {
        if samples.len() != records.len() {
            return Err(ModelError::Shape("samples and records differ in length".into()));
        }
        let mut epoch = 0u64;
        while self.optimizer.step < self.config.total_steps {
            let sched = bucket_batches(records, &self.config.bucket_batch_sizes, self.config.seed.wrapping_add(epoch))?;
            if sched.batches.is_empty() {
                return Err(ModelError::Config("no training record falls in any bucket".into()));
            }
            let mut progressed = false;
            for idx in &sched.batches {
                let batch: Vec<Sample> = idx.iter().map(|&i| samples[i].clone()).collect();
                let rep = self.training_step(&batch)?;
                progressed |= rep.skipped < rep.samples;
                on_batch(&rep, &self.model)?;
                if self.optimizer.step >= self.config.total_steps {
                    break;
                }
            }
            if !progressed {
                return Err(ModelError::Config("every training sample is infeasible".into()));
            }
            epoch += 1;
        }
        Ok(())
    }
}
