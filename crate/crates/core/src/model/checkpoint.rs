//! Checkpoint container.
//!
//! ```text
//! TDTLAB-CKPT v1\n
//! {json header}\n
//! raw little-endian f64 values of every tensor, in header order
//! ```
//!
//! The header holds the model config, the optional vocabulary and training
//! config, the update count, and the name and shape of each tensor.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::layout;
use super::{ModelConfig, ModelError, Params, TrainConfig};

pub const CHECKPOINT_MAGIC: &str = "TDTLAB-CKPT v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: Params,
    pub step: u64,
    pub vocab: Option<Vec<String>>,
    pub train: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    step: u64,
    vocab: Option<Vec<String>>,
    train: Option<TrainConfig>,
    tensors: Vec<(String, [usize; 2])>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.clone(),
            step: self.step,
            vocab: self.vocab.clone(),
            train: self.train.clone(),
            tensors: layout(&self.model).into_iter().map(|(n, (r, c))| (n, [r, c])).collect(),
        };
        let mut out = format!("{CHECKPOINT_MAGIC}\n").into_bytes();
        out.extend(serde_json::to_string(&header).expect("header serializes").into_bytes());
        out.push(b'\n');
        for t in self.params.tensors() {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let mut lines = bytes.splitn(3, |&b| b == b'\n');
        let magic = lines.next().unwrap_or_default();
        if magic != CHECKPOINT_MAGIC.as_bytes() {
            return Err(bad("missing magic line".into()));
        }
        let header_line = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let data = lines.next().ok_or_else(|| bad("missing tensor data".into()))?;
        let header: Header = serde_json::from_slice(header_line).map_err(|e| bad(format!("header: {e}")))?;
        header.model.validate()?;
        let expected: Vec<(String, [usize; 2])> =
            layout(&header.model).into_iter().map(|(n, (r, c))| (n, [r, c])).collect();
        if header.tensors != expected {
            return Err(bad("tensor table does not match the model config".into()));
        }
        let total: usize = expected.iter().map(|(_, [r, c])| r * c).sum();
        if data.len() != total * 8 {
            return Err(bad(format!("expected {} data bytes, found {}", total * 8, data.len())));
        }
        let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let tensors = expected
            .iter()
            .map(|(_, [r, c])| Array2::from_shape_fn((*r, *c), |_| values.next().expect("length checked")))
            .collect();
        let params = Params::from_tensors(&header.model, tensors)?;
        if !params.is_finite() {
            return Err(ModelError::NonFinite("checkpoint tensors".into()));
        }
        Ok(Self { model: header.model, params, step: header.step, vocab: header.vocab, train: header.train })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io { path: path.to_path_buf(), source: e })?;
    Checkpoint::from_bytes(&bytes)
}
