//! Biased coloured-digit domains, IDX ingestion and the on-disk tensor format.
//!
//! Binary label `y = 1` iff the digit is below 5, flipped with probability
//! `noise`. Each domain has a bias `e`: with probability `e` the colour follows
//! the rule `y = 0 -> red, y = 1 -> green`, otherwise the opposite colour is
//! used. Red ink goes to channel 0, green ink to channel 1.

mod glyph;
pub mod idx;
mod store;

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::ImageTensor;

pub use glyph::{render as render_glyph, GlyphStyle};
pub use idx::{load_idx, RawDigits};
pub use store::{
    load_manifest, read_dataset, sha256_hex, write_dataset, write_domains, DomainEntry, Manifest, TENSOR_MAGIC,
};

pub const RED: u8 = 0;
pub const GREEN: u8 = 1;
pub const SIDE: usize = 28;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid spec field `{field}`: {message}")]
    InvalidSpec { field: String, message: String },
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("not a CPSW1 tensor file")]
    BadTensorMagic,
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Source {
    #[default]
    Synthetic,
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    pub source: Source,
    pub biases: Vec<f64>,
    /// Optional display names, one per bias.
    pub names: Vec<String>,
    pub noise: f64,
    pub seed: u64,
    /// Samples per domain.
    pub size: usize,
    /// 3 for RGB, 2 for the red/green-only variant.
    pub channels: usize,
    /// Colour from the clean label, then flip (default: flip, then colour).
    pub flip_after_color: bool,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            source: Source::Synthetic,
            biases: vec![0.1, 0.3, 0.9],
            names: vec!["+90%".into(), "+80%".into(), "-90%".into()],
            noise: 0.25,
            seed: 0,
            size: 5000,
            channels: 3,
            flip_after_color: false,
        }
    }
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> DatasetError {
    DatasetError::InvalidSpec { field: field.into(), message: message.into() }
}

impl GenSpec {
    /// One synthetic domain, handy for tests and quick runs.
    pub fn single(bias: f64, noise: f64, size: usize, seed: u64) -> Self {
        GenSpec { biases: vec![bias], names: Vec::new(), noise, size, seed, ..GenSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.biases.is_empty() {
            return Err(invalid("biases", "at least one domain is required"));
        }
        for (i, &b) in self.biases.iter().enumerate() {
            if !(0.0..=1.0).contains(&b) {
                return Err(invalid(format!("biases[{i}]"), format!("{b} is outside [0, 1]")));
            }
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(invalid("noise", format!("{} is outside [0, 0.5)", self.noise)));
        }
        if self.size == 0 {
            return Err(invalid("size", "must be positive"));
        }
        if !matches!(self.channels, 2 | 3) {
            return Err(invalid("channels", format!("{} (expected 2 or 3)", self.channels)));
        }
        if !self.names.is_empty() && self.names.len() != self.biases.len() {
            return Err(invalid("names", format!("{} names for {} biases", self.names.len(), self.biases.len())));
        }
        Ok(())
    }

    pub fn domain_name(&self, d: usize) -> String {
        self.names.get(d).cloned().unwrap_or_else(|| format!("e={}", self.biases[d]))
    }
}

/// One generated (or loaded) domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub name: String,
    pub bias: f64,
    pub noise: f64,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `N x C x H x W`, row-major.
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
    /// Source digit per sample, when known.
    pub digits: Option<Vec<u8>>,
    pub colors: Vec<u8>,
}

impl DomainDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn raw_image(&self, i: usize) -> &[f32] {
        let n = self.pixels_per_image();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn image(&self, i: usize) -> ImageTensor {
        ImageTensor::new(
            self.channels,
            self.height,
            self.width,
            self.raw_image(i).iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("stored images are valid")
    }

    /// Flattened images as an `N x (C H W)` matrix.
    pub fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec(
            (self.len(), self.pixels_per_image()),
            self.images.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("consistent sizes")
    }

    /// Fraction of class-`y` samples drawn in `color`.
    pub fn color_rate(&self, y: u8, color: u8) -> f64 {
        let (hit, total) = self
            .labels
            .iter()
            .zip(&self.colors)
            .filter(|(&l, _)| l == y)
            .fold((0usize, 0usize), |(h, t), (_, &c)| (h + usize::from(c == color), t + 1));
        hit as f64 / total.max(1) as f64
    }
}

/// Colour read back from an image: the channel among red/green with more ink.
pub fn infer_color(image: &[f32], plane: usize) -> u8 {
    let red: f32 = image[..plane].iter().sum();
    let green: f32 = image[plane..2 * plane].iter().sum();
    if green > red {
        GREEN
    } else {
        RED
    }
}

/// Mixes `(seed, domain, index)` into an independent per-sample seed.
pub fn sample_seed(seed: u64, domain: u64, index: u64) -> u64 {
    crate::seeds::mix(seed, domain, index)
}

fn color_for(y: u8, bias: f64, rng: &mut ChaCha8Rng) -> u8 {
    if rng.gen::<f64>() < bias {
        y
    } else {
        1 - y
    }
}

pub fn generate(spec: &GenSpec) -> Result<Vec<DomainDataset>> {
    spec.validate()?;
    let raw = match &spec.source {
        Source::Synthetic => None,
        Source::Idx { images, labels } => {
            let raw = load_idx(images, labels)?;
            if (raw.rows, raw.cols) != (SIDE, SIDE) {
                return Err(invalid("source", format!("IDX images are {}x{}, expected 28x28", raw.rows, raw.cols)));
            }
            let need = spec.size * spec.biases.len();
            if raw.len() < need {
                return Err(invalid("size", format!("{need} samples requested, IDX file has {}", raw.len())));
            }
            Some(raw)
        }
    };
    let plane = SIDE * SIDE;
    let mut out = Vec::with_capacity(spec.biases.len());
    for (d, &bias) in spec.biases.iter().enumerate() {
        let mut images = vec![0.0f32; spec.size * spec.channels * plane];
        let mut labels = Vec::with_capacity(spec.size);
        let mut digits = Vec::with_capacity(spec.size);
        let mut colors = Vec::with_capacity(spec.size);
        for i in 0..spec.size {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(spec.seed, d as u64, i as u64));
            let (digit, gray) = match &raw {
                None => {
                    let digit = rng.gen_range(0..10u8);
                    (digit, render_glyph(digit, SIDE, &mut rng))
                }
                Some(raw) => {
                    let k = d * spec.size + i;
                    (raw.labels[k], raw.image(k).to_vec())
                }
            };
            let clean = u8::from(digit < 5);
            let flip = rng.gen::<f64>() < spec.noise;
            let (label, color) = if spec.flip_after_color {
                let color = color_for(clean, bias, &mut rng);
                (clean ^ u8::from(flip), color)
            } else {
                let label = clean ^ u8::from(flip);
                (label, color_for(label, bias, &mut rng))
            };
            let base = (i * spec.channels + usize::from(color)) * plane;
            images[base..base + plane].copy_from_slice(&gray);
            labels.push(label);
            digits.push(digit);
            colors.push(color);
        }
        out.push(DomainDataset {
            name: spec.domain_name(d),
            bias,
            noise: spec.noise,
            channels: spec.channels,
            height: SIDE,
            width: SIDE,
            images,
            labels,
            digits: Some(digits),
            colors,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Trains on every domain not listed in `held_out`.
pub fn split_domains(n_domains: usize, held_out: &[usize]) -> Result<Split> {
    if n_domains < 2 {
        return Err(DatasetError::InvalidSplit(format!("need at least 2 domains, have {n_domains}")));
    }
    if held_out.is_empty() {
        return Err(DatasetError::InvalidSplit("no test domain".into()));
    }
    let mut test = held_out.to_vec();
    test.sort_unstable();
    test.dedup();
    if let Some(&bad) = test.iter().find(|&&d| d >= n_domains) {
        return Err(DatasetError::InvalidSplit(format!("domain {bad} does not exist")));
    }
    let train: Vec<usize> = (0..n_domains).filter(|d| !test.contains(d)).collect();
    if train.is_empty() {
        return Err(DatasetError::InvalidSplit("no training domain left".into()));
    }
    Ok(Split { train, test })
}

/// Default protocol: hold out the domain named `-90%`, else the last one.
pub fn default_split(names: &[String]) -> Result<Split> {
    let held = names.iter().position(|n| n == "-90%").unwrap_or(names.len().saturating_sub(1));
    split_domains(names.len(), &[held])
}

pub fn leave_one_out(n_domains: usize) -> Result<Vec<Split>> {
    (0..n_domains).map(|d| split_domains(n_domains, &[d])).collect()
}
