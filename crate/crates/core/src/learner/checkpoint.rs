//! Binary checkpoints: magic, `u32` version, `u32` layer count, per-layer
//! `(in, out)` as `u32` pairs, then each layer's weights (row-major) and bias
//! as little-endian `f64`.

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Layer, LearnerError, ModelParams, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CPSWCKPT";
const VERSION: u32 = 1;

pub fn encode_checkpoint(p: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * p.num_params() + 8 * p.layers().len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.layers().len() as u32).to_le_bytes());
    for l in p.layers() {
        out.extend_from_slice(&(l.weight.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(l.weight.ncols() as u32).to_le_bytes());
    }
    for v in p.to_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let bad = |m: &str| LearnerError::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut pos = 8;
    let mut word = || -> Result<usize> {
        let w = bytes.get(pos..pos + 4).ok_or_else(|| bad("truncated header"))?;
        pos += 4;
        Ok(u32::from_le_bytes(w.try_into().expect("4 bytes")) as usize)
    };
    let version = word()?;
    if version != VERSION as usize {
        return Err(LearnerError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = word()?;
    let shapes = (0..count).map(|_| Ok((word()?, word()?))).collect::<Result<Vec<_>>>()?;
    let start = 16 + 8 * count;
    let values: Vec<f64> = bytes
        .get(start..)
        .ok_or_else(|| bad("truncated header"))?
        .chunks(8)
        .map(|c| c.try_into().map(f64::from_le_bytes).map_err(|_| bad("trailing bytes")))
        .collect::<Result<_>>()?;
    let need: usize = shapes.iter().map(|(i, o)| i * o + o).sum();
    if values.len() != need {
        return Err(LearnerError::Checkpoint(format!("{} values, shapes need {need}", values.len())));
    }
    let mut it = values.into_iter();
    let layers = shapes
        .iter()
        .map(|&(i, o)| Layer {
            weight: Array2::from_shape_vec((i, o), it.by_ref().take(i * o).collect()).expect("sized"),
            bias: Array1::from_iter(it.by_ref().take(o)),
        })
        .collect();
    ModelParams::new(layers)
}

pub fn save_checkpoint(path: &Path, p: &ModelParams) -> Result<()> {
    std::fs::write(path, encode_checkpoint(p)).map_err(|e| LearnerError::Io { path: path.to_path_buf(), source: e })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| LearnerError::Io { path: path.to_path_buf(), source: e })?;
    decode_checkpoint(&bytes)
}
