//! IDX digit files (`0x00000803` image tensors, `0x00000801` label vectors).

use std::path::Path;

use super::{DatasetError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Greyscale digits as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDigits {
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` values in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub labels: Vec<u8>,
}

impl RawDigits {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| DatasetError::TruncatedFile(format!("{what}: header ends at byte {}", bytes.len())))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGE_MAGIC {
        return Err(DatasetError::BadMagic { expected: IMAGE_MAGIC, found: magic });
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(DatasetError::TruncatedFile(format!("images: need {need} bytes, have {}", bytes.len())));
    }
    let pixels = bytes[16..need].iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok((rows, cols, pixels))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABEL_MAGIC {
        return Err(DatasetError::BadMagic { expected: LABEL_MAGIC, found: magic });
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(DatasetError::TruncatedFile(format!("labels: need {need} bytes, have {}", bytes.len())));
    }
    Ok(bytes[8..need].to_vec())
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<RawDigits> {
    let (rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    let count = pixels.len() / (rows * cols).max(1);
    if count != labels.len() {
        return Err(DatasetError::CountMismatch { images: count, labels: labels.len() });
    }
    Ok(RawDigits { rows, cols, pixels, labels })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DatasetError::FileNotFound(path.to_path_buf()),
        _ => DatasetError::Io { path: path.to_path_buf(), source: e },
    })
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<RawDigits> {
    parse_idx(&read(images)?, &read(labels)?)
}

/// Serialises digits back to the IDX pair (pixels rounded to bytes).
pub fn encode_idx(digits: &RawDigits) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + digits.pixels.len());
    for v in [IMAGE_MAGIC, digits.len() as u32, digits.rows as u32, digits.cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(digits.pixels.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + digits.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(digits.len() as u32).to_be_bytes());
    lab.extend_from_slice(&digits.labels);
    (img, lab)
}
