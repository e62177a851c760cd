//! Toy hybrid TDT-CTC encoder with hand-derived backpropagation, AdamW and a
//! duration-bucketed training loop.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LatticeError, TdtConfig, DEFAULT_DURATIONS};

mod batch;
mod checkpoint;
mod network;
mod optim;
mod params;
mod train;

pub use batch::{bucket_batches, default_bucket_sizes, BatchSchedule, BucketSize};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use network::{positional_encoding, Model, SampleLoss, UtteranceScorer};
pub use optim::{learning_rate, AdamW};
pub use params::{BlockParams, Params};
pub use train::{Sample, StepReport, TrainConfig, Trainer};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionContext {
    Full,
    /// Each frame attends to frames at most `w` away.
    Windowed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub attention_context: AttentionContext,
    pub subsample_factor: usize,
    /// Non-blank symbols; the blank and the start symbol are both index `V`.
    pub vocab_size: usize,
    pub durations: Vec<usize>,
    pub predictor_dim: usize,
    /// Width of the joint combiner.
    pub joint_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_dim: 80,
            hidden_dim: 32,
            num_blocks: 2,
            attention_context: AttentionContext::Full,
            subsample_factor: 8,
            vocab_size: 40,
            durations: DEFAULT_DURATIONS.to_vec(),
            predictor_dim: 32,
            joint_dim: 32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("subsample_factor", self.subsample_factor),
            ("vocab_size", self.vocab_size),
            ("predictor_dim", self.predictor_dim),
            ("joint_dim", self.joint_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be >= 1")));
            }
        }
        if self.attention_context == AttentionContext::Windowed(0) {
            return Err(ModelError::Config("attention window must be >= 1".into()));
        }
        self.tdt_config().validate()?;
        Ok(())
    }

    pub fn tdt_config(&self) -> TdtConfig {
        TdtConfig { durations: self.durations.clone(), blank: self.vocab_size }
    }

    /// Encoder frames produced from `input_frames` feature frames.
    pub fn output_frames(&self, input_frames: usize) -> usize {
        input_frames.div_ceil(self.subsample_factor)
    }
}
