//! Centred 2-D DFT, low/high-pass frequency masks, and spectrum mixing for
//! building paired ("simulated") samples.
//!
//! Conventions: images are channel-major (`C x H x W`), every channel is
//! transformed independently, the forward transform is unnormalised and the
//! inverse carries the `1 / (H W)` factor. Spectra are stored with the zero
//! frequency moved to index `(H / 2, W / 2)` (integer division).

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("mixing bound delta must lie in [0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("mixing ratio lambda must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

/// Real image, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height < 2 || width < 2 || channels == 0 {
            return Err(SpectralError::InvalidImage(format!(
                "need H, W >= 2 and at least one channel, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(SpectralError::InvalidImage(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(SpectralError::InvalidImage(format!("non-finite value {bad}")));
        }
        Ok(ImageTensor { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        ImageTensor { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Centred complex spectrum of an [`ImageTensor`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl SpectrumGrid {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(SpectralError::DimensionMismatch(format!(
                "{} coefficients for {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(SpectrumGrid { channels, height, width, data })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> Complex64 {
        self.data[(c * self.height + i) * self.width + j]
    }

    fn check_same(&self, other: &SpectrumGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(SpectralError::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// `a * self + b * other`, coefficient-wise.
    pub fn combine(&self, a: f64, other: &SpectrumGrid, b: f64) -> Result<SpectrumGrid> {
        self.check_same(other)?;
        Ok(SpectrumGrid {
            data: self.data.iter().zip(&other.data).map(|(x, y)| x * a + y * b).collect(),
            channels: self.channels,
            height: self.height,
            width: self.width,
        })
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Result of an inverse transform: the real part plus the largest discarded
/// imaginary magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Inverse {
    pub image: ImageTensor,
    pub max_imag: f64,
}

/// Cached FFT plans for one `H x W` grid size.
#[derive(Clone)]
pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("height", &self.height).field("width", &self.width).finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn check(&self, h: usize, w: usize) -> Result<()> {
        if (h, w) != (self.height, self.width) {
            return Err(SpectralError::DimensionMismatch(format!(
                "plan is {}x{}, input is {h}x{w}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// In-place 2-D transform of one channel plane (natural, unshifted order).
    fn transform(&self, plane: &mut [Complex64], inverse: bool) {
        let (h, w) = (self.height, self.width);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for r in plane.chunks_exact_mut(w) {
            row.process(r);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = plane[i * w + j];
            }
            col.process(&mut column);
            for i in 0..h {
                plane[i * w + j] = column[i];
            }
        }
    }

    pub fn forward(&self, img: &ImageTensor) -> Result<SpectrumGrid> {
        self.check(img.height, img.width)?;
        let (h, w) = (self.height, self.width);
        let mut out = vec![Complex64::new(0.0, 0.0); img.data.len()];
        let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
        for c in 0..img.channels {
            let src = &img.data[c * h * w..(c + 1) * h * w];
            for (p, &v) in plane.iter_mut().zip(src) {
                *p = Complex64::new(v, 0.0);
            }
            self.transform(&mut plane, false);
            let dst = &mut out[c * h * w..(c + 1) * h * w];
            for i in 0..h {
                for j in 0..w {
                    dst[((i + h / 2) % h) * w + (j + w / 2) % w] = plane[i * w + j];
                }
            }
        }
        Ok(SpectrumGrid { channels: img.channels, height: h, width: w, data: out })
    }

    pub fn inverse(&self, spec: &SpectrumGrid) -> Result<Inverse> {
        self.check(spec.height, spec.width)?;
        let (h, w) = (self.height, self.width);
        let scale = 1.0 / (h * w) as f64;
        let mut data = vec![0.0; spec.data.len()];
        let mut max_imag = 0.0f64;
        let mut plane = vec![Complex64::new(0.0, 0.0); h * w];
        for c in 0..spec.channels {
            let src = &spec.data[c * h * w..(c + 1) * h * w];
            for i in 0..h {
                for j in 0..w {
                    plane[i * w + j] = src[((i + h / 2) % h) * w + (j + w / 2) % w];
                }
            }
            self.transform(&mut plane, true);
            for (d, z) in data[c * h * w..(c + 1) * h * w].iter_mut().zip(&plane) {
                *d = z.re * scale;
                max_imag = max_imag.max((z.im * scale).abs());
            }
        }
        Ok(Inverse {
            image: ImageTensor { channels: spec.channels, height: h, width: w, data },
            max_imag,
        })
    }
}

/// Forward centred DFT, planning a fresh transform. Prefer [`Fft2`] in loops.
pub fn dft2(img: &ImageTensor) -> SpectrumGrid {
    Fft2::new(img.height, img.width)
        .forward(img)
        .expect("plan built for this size")
}

/// Inverse of [`dft2`]; the real part is kept and the imaginary residue reported.
pub fn idft2(spec: &SpectrumGrid) -> Inverse {
    Fft2::new(spec.height, spec.width)
        .inverse(spec)
        .expect("plan built for this size")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    Low,
    High,
}

/// How the low- and high-pass masks are shaped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskScheme {
    /// Low pass keeps `min(|i - H/2|, |j - W/2|) <= S/2` (a centred cross);
    /// high pass drops `min(...) <= (min(H, W) - S)/2`. The two masks do not
    /// tile the grid in general.
    #[default]
    Cross,
    /// Cross-shaped low pass, high pass is its exact complement.
    CrossComplement,
    /// Centred square low pass `max(|i - H/2|, |j - W/2|) <= S/2`, high pass
    /// is its complement.
    Square,
}

impl fmt::Display for MaskScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskScheme::Cross => "cross",
            MaskScheme::CrossComplement => "cross-complement",
            MaskScheme::Square => "square",
        })
    }
}

impl std::str::FromStr for MaskScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cross" => Ok(MaskScheme::Cross),
            "cross-complement" => Ok(MaskScheme::CrossComplement),
            "square" => Ok(MaskScheme::Square),
            other => Err(format!("unknown mask scheme `{other}`")),
        }
    }
}

/// Binary frequency mask over a centred `H x W` spectrum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterMask {
    height: usize,
    width: usize,
    band: Band,
    size: usize,
    scheme: MaskScheme,
    bits: Vec<bool>,
}

/// Distances of `(i, j)` from the (possibly fractional) grid centre.
fn centre_distances(i: usize, j: usize, h: usize, w: usize) -> (f64, f64) {
    ((i as f64 - h as f64 / 2.0).abs(), (j as f64 - w as f64 / 2.0).abs())
}

fn low_bit(scheme: MaskScheme, di: f64, dj: f64, size: usize) -> bool {
    let radius = size as f64 / 2.0;
    match scheme {
        MaskScheme::Cross | MaskScheme::CrossComplement => di.min(dj) <= radius,
        MaskScheme::Square => di.max(dj) <= radius,
    }
}

impl FilterMask {
    pub fn new(height: usize, width: usize, band: Band, size: usize, scheme: MaskScheme) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                let (di, dj) = centre_distances(i, j, height, width);
                let low = low_bit(scheme, di, dj, size);
                let bit = match (band, scheme) {
                    (Band::Low, _) => low,
                    (Band::High, MaskScheme::Cross) => {
                        let cut = (height.min(width) as f64 - size as f64) / 2.0;
                        di.min(dj) > cut
                    }
                    (Band::High, _) => !low,
                };
                bits.push(bit);
            }
        }
        FilterMask { height, width, band, size, scheme, bits }
    }

    pub fn low(height: usize, width: usize, size: usize, scheme: MaskScheme) -> Self {
        Self::new(height, width, Band::Low, size, scheme)
    }

    pub fn high(height: usize, width: usize, size: usize, scheme: MaskScheme) -> Self {
        Self::new(height, width, Band::High, size, scheme)
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn scheme(&self) -> MaskScheme {
        self.scheme
    }

    pub fn bit(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.width + j]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// `mask ⊙ spectrum`, applied to every channel.
pub fn apply_mask(spec: &SpectrumGrid, mask: &FilterMask) -> Result<SpectrumGrid> {
    if (spec.height, spec.width) != (mask.height, mask.width) {
        return Err(SpectralError::DimensionMismatch(format!(
            "spectrum {}x{}, mask {}x{}",
            spec.height, spec.width, mask.height, mask.width
        )));
    }
    let plane = spec.height * spec.width;
    let data = spec
        .data
        .iter()
        .enumerate()
        .map(|(k, &z)| if mask.bits[k % plane] { z } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(SpectrumGrid { data, channels: spec.channels, height: spec.height, width: spec.width })
}

/// Low and high band images `(x_l, x_h)` of `img`.
pub fn split_bands(fft: &Fft2, img: &ImageTensor, size: usize, scheme: MaskScheme) -> Result<(ImageTensor, ImageTensor)> {
    let spec = fft.forward(img)?;
    let low = FilterMask::low(img.height, img.width, size, scheme);
    let high = FilterMask::high(img.height, img.width, size, scheme);
    let xl = fft.inverse(&apply_mask(&spec, &low)?)?.image;
    let xh = fft.inverse(&apply_mask(&spec, &high)?)?.image;
    Ok((xl, xh))
}

/// Spectrum of the simulated sample:
/// `high(F(xi)) + (1 - lambda) low(F(xi)) + lambda low(F(xj))`.
pub fn mixed_spectrum(
    fi: &SpectrumGrid,
    fj: &SpectrumGrid,
    lambda: f64,
    size: usize,
    scheme: MaskScheme,
) -> Result<SpectrumGrid> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SpectralError::InvalidLambda(lambda));
    }
    fi.check_same(fj)?;
    let low = FilterMask::low(fi.height, fi.width, size, scheme);
    let high = FilterMask::high(fi.height, fi.width, size, scheme);
    let hi = apply_mask(fi, &high)?;
    let mixed_low = apply_mask(fi, &low)?.combine(1.0 - lambda, &apply_mask(fj, &low)?, lambda)?;
    hi.combine(1.0, &mixed_low, 1.0)
}

/// Simulated sample for `xi` paired with `xj`; it keeps `xi`'s label.
pub fn mix_spectra(
    xi: &ImageTensor,
    xj: &ImageTensor,
    lambda: f64,
    size: usize,
    scheme: MaskScheme,
) -> Result<ImageTensor> {
    if xi.shape() != xj.shape() {
        return Err(SpectralError::DimensionMismatch(format!("{:?} vs {:?}", xi.shape(), xj.shape())));
    }
    let fft = Fft2::new(xi.height, xi.width);
    let mixed = mixed_spectrum(&fft.forward(xi)?, &fft.forward(xj)?, lambda, size, scheme)?;
    Ok(fft.inverse(&mixed)?.image)
}

/// Draws the mixing ratio `lambda ~ U(0, delta)`.
pub fn sample_lambda<R: Rng + ?Sized>(delta: f64, rng: &mut R) -> Result<f64> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(SpectralError::InvalidDelta(delta));
    }
    Ok(rng.gen::<f64>() * delta)
}
