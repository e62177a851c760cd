//! Feature files: `u32` frame count, `u32` feature dim, then row-major `f32`
//! frames, everything little-endian.

use std::path::Path;

use ndarray::Array2;

use super::CorpusError;

pub fn encode_features(features: &Array2<f64>) -> Vec<u8> {
    let (frames, dim) = features.dim();
    let mut out = Vec::with_capacity(8 + 4 * frames * dim);
    out.extend_from_slice(&(frames as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for v in features.iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<Array2<f64>, CorpusError> {
    if bytes.len() < 8 {
        return Err(CorpusError::Invalid("feature file shorter than its header".into()));
    }
    let frames = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != 4 * frames * dim {
        return Err(CorpusError::Invalid(format!(
            "feature file declares {frames}x{dim} but holds {} bytes of data",
            body.len()
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Array2::from_shape_vec((frames, dim), data).expect("length checked"))
}

pub fn write_features(path: &Path, features: &Array2<f64>) -> Result<(), CorpusError> {
    std::fs::write(path, encode_features(features)).map_err(|e| CorpusError::io(path, e))
}

pub fn read_features(path: &Path) -> Result<Array2<f64>, CorpusError> {
    let bytes = std::fs::read(path).map_err(|e| CorpusError::io(path, e))?;
    decode_features(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let f = Array2::from_shape_vec((2, 3), vec![0.5, -1.0, 2.0, 0.0, 0.25, 8.0]).unwrap();
        let bytes = encode_features(&f);
        assert_eq!(&bytes[0..8], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &0.5f32.to_le_bytes());
        assert_eq!(decode_features(&bytes).unwrap(), f);
    }

    #[test]
    fn truncated_file() {
        let f = Array2::<f64>::zeros((2, 2));
        let bytes = encode_features(&f);
        assert!(decode_features(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_features(&bytes[..3]).is_err());
    }
}
