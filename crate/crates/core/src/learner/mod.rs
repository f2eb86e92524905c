//! Small tanh MLP with the combined objective
//! `L + alpha * L_psw + beta * L_ps` and hand-written backpropagation.
//!
//! Per-sample loss is cross-entropy on softly clamped logits
//! `B * tanh(z / B)`, with `B` chosen so that every loss lies in `[0, omega]`.

mod checkpoint;
mod metrics;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::spectral::ImageTensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use metrics::{read_metrics_csv, write_metrics_csv, MetricsRow};
pub use train::{accuracy, estimate_propensity, evaluate, train, DomainPropensity, TrainConfig, TrainResult};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch has no propensity weights")]
    MissingWeights,
    #[error("batch has no simulated twins")]
    MissingTwins,
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss { epoch: usize, step: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Propensity(#[from] crate::propensity::PropensityError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error("{}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("metrics csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LearnerError>;

/// Affine map `x W + b`; `weight` is `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Layers applied in order, tanh between them, the last one is the head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<Layer>,
}

impl ModelParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(LearnerError::ShapeMismatch("model needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.weight.ncols() != l.bias.len() {
                return Err(LearnerError::ShapeMismatch(format!(
                    "layer {k}: weight has {} outputs, bias has {}",
                    l.weight.ncols(),
                    l.bias.len()
                )));
            }
            if k > 0 && layers[k - 1].weight.ncols() != l.weight.nrows() {
                return Err(LearnerError::ShapeMismatch(format!("layer {k} does not chain onto layer {}", k - 1)));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(LearnerError::ShapeMismatch(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(ModelParams { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Layer { weight: Array2::zeros((w[0], w[1])), bias: Array1::zeros(w[1]) })
            .collect();
        ModelParams { layers }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut p = Self::zeros(sizes);
        for l in &mut p.layers {
            let (fan_in, fan_out) = l.weight.dim();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            l.weight.mapv_inplace(|_| rng.gen_range(-a..a));
        }
        p
    }

    /// `[input, hidden..., classes]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weight.nrows()];
        s.extend(self.layers.iter().map(|l| l.weight.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer (weights row-major, then bias).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(LearnerError::ShapeMismatch(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &ModelParams) {
        for (l, g) in self.layers.iter_mut().zip(&other.layers) {
            l.weight.scaled_add(a, &g.weight);
            l.bias.scaled_add(a, &g.bias);
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(LearnerError::ShapeMismatch(format!("input has {cols} features, model expects {}", self.input_dim())));
        }
        Ok(())
    }

    fn run(&self, x: ArrayView2<f64>) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.weight);
            z += &l.bias;
            inputs.push(a);
            if k < last {
                z.mapv_inplace(f64::tanh);
            }
            a = z;
        }
        Trace { inputs, logits: a }
    }

    /// Raw logits for each row of `x`.
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.run(x).logits)
    }

    /// Encoder output `g(x)`: the last hidden activation (the input itself
    /// for a model without hidden layers).
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut a = x.to_owned();
        for l in &self.layers[..self.layers.len() - 1] {
            let mut z = a.dot(&l.weight);
            z += &l.bias;
            z.mapv_inplace(f64::tanh);
            a = z;
        }
        Ok(a)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.rows().into_iter().map(|r| argmax(r.as_slice().expect("contiguous"))).collect())
    }

    /// Backpropagates logit deltas. `head_delta`, when given, replaces
    /// `delta` for the last layer's own parameters only.
    fn backprop(&self, trace: &Trace, mut delta: Array2<f64>, head_delta: Option<&Array2<f64>>, grads: &mut ModelParams) {
        let last = self.layers.len() - 1;
        for k in (0..=last).rev() {
            let input = &trace.inputs[k];
            let d = if k == last { head_delta.unwrap_or(&delta) } else { &delta };
            grads.layers[k].weight += &input.t().dot(d);
            grads.layers[k].bias += &d.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weight.t());
                back.zip_mut_with(input, |b, &a| *b *= 1.0 - a * a);
                delta = back;
            }
        }
    }
}

struct Trace {
    inputs: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Logits of one image.
pub fn forward(p: &ModelParams, img: &ImageTensor) -> Result<Vec<f64>> {
    let x = ArrayView2::from_shape((1, img.data().len()), img.data()).expect("row view");
    Ok(p.logits(x)?.row(0).to_vec())
}

/// Clamp radius keeping cross-entropy within `[0, omega]` for `m` classes.
pub fn logit_bound(omega: f64, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(LearnerError::ConfigInvalid("need at least two classes".into()));
    }
    let b = ((omega.exp() - 1.0) / (m as f64 - 1.0)).ln() / 2.0;
    if !(b > 0.0) {
        return Err(LearnerError::ConfigInvalid(format!("omega {omega} must exceed ln({m})")));
    }
    Ok(b)
}

/// Per-row cross-entropy and its derivative with respect to the raw logits.
fn cross_entropy(logits: &Array2<f64>, labels: &[usize], bound: Option<f64>) -> (Vec<f64>, Array2<f64>) {
    let mut losses = Vec::with_capacity(labels.len());
    let mut grad = Array2::zeros(logits.dim());
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let c: Vec<f64> = match bound {
            Some(b) => row.iter().map(|z| b * (z / b).tanh()).collect(),
            None => row.to_vec(),
        };
        let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = c.iter().map(|v| (v - max).exp()).sum();
        losses.push(max + sum.ln() - c[y]);
        for (k, gk) in g.iter_mut().enumerate() {
            let soft = (c[k] - max).exp() / sum;
            let dl_dc = soft - f64::from(u8::from(k == y));
            let dc_dz = match bound {
                Some(b) => 1.0 - (c[k] / b).powi(2),
                None => 1.0,
            };
            *gk = dl_dc * dc_dz;
        }
    }
    (losses, grad)
}

/// A mini-batch of one domain (rows are flattened images).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Array2<f64>,
    pub labels: Vec<usize>,
    pub domain: usize,
    /// PSW weights `1 / pi` (or self-normalised), one per row.
    pub weights: Option<Vec<f64>>,
    /// Simulated twins, row-aligned with `images` and sharing their labels.
    pub twins: Option<Array2<f64>>,
}

impl Batch {
    pub fn new(images: Array2<f64>, labels: Vec<usize>, domain: usize) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(LearnerError::ShapeMismatch(format!("{} images, {} labels", images.nrows(), labels.len())));
        }
        Ok(Batch { images, labels, domain, weights: None, twins: None })
    }

    pub fn from_images(images: &[ImageTensor], labels: Vec<usize>, domain: usize) -> Result<Self> {
        let d = images.first().map_or(0, |i| i.data().len());
        if images.iter().any(|i| i.data().len() != d) {
            return Err(LearnerError::ShapeMismatch("images of different sizes".into()));
        }
        let flat: Vec<f64> = images.iter().flat_map(|i| i.data().iter().copied()).collect();
        Self::new(Array2::from_shape_vec((images.len(), d), flat).expect("sizes checked"), labels, domain)
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Result<Self> {
        if w.len() != self.len() {
            return Err(LearnerError::ShapeMismatch(format!("{} weights for {} samples", w.len(), self.len())));
        }
        if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(LearnerError::ShapeMismatch("weights must be positive and finite".into()));
        }
        self.weights = Some(w);
        Ok(self)
    }

    pub fn with_twins(mut self, twins: Array2<f64>) -> Result<Self> {
        if twins.dim() != self.images.dim() {
            return Err(LearnerError::ShapeMismatch(format!("twins {:?} vs images {:?}", twins.dim(), self.images.dim())));
        }
        self.twins = Some(twins);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Loss composition: `base + alpha * psw + beta * ps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub alpha: f64,
    pub beta: f64,
    /// Loss ceiling; `None` disables logit clamping.
    pub omega: Option<f64>,
    /// Keep the head out of the `L_ps` update.
    pub freeze_head: bool,
}

impl Objective {
    pub fn erm() -> Self {
        Objective { alpha: 0.0, beta: 0.0, omega: Some(10.0), freeze_head: false }
    }

    pub fn new(alpha: f64, beta: f64) -> Self {
        Objective { alpha, beta, ..Self::erm() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(LearnerError::ConfigInvalid(format!("alpha {} and beta {} must be >= 0", self.alpha, self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub base: f64,
    pub psw: f64,
    pub ps: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl LossReport {
    pub fn compose(base: f64, psw: f64, ps: f64, alpha: f64, beta: f64) -> Self {
        LossReport { base, psw, ps, total: base + alpha * psw + beta * ps, alpha, beta }
    }
}

fn bound_for(p: &ModelParams, omega: Option<f64>) -> Result<Option<f64>> {
    omega.map(|o| logit_bound(o, p.classes())).transpose()
}

fn sample_losses(p: &ModelParams, x: &Array2<f64>, labels: &[usize], omega: Option<f64>) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= p.classes()) {
        return Err(LearnerError::ShapeMismatch(format!("label {bad} with {} classes", p.classes())));
    }
    let logits = p.logits(x.view())?;
    Ok(cross_entropy(&logits, labels, bound_for(p, omega)?).0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean cross-entropy.
pub fn loss_erm(p: &ModelParams, batch: &Batch, omega: Option<f64>) -> Result<f64> {
    Ok(mean(&sample_losses(p, &batch.images, &batch.labels, omega)?))
}

/// Correct predictions and summed clamped loss over `x`, from one forward pass.
pub(crate) fn score(p: &ModelParams, x: ArrayView2<f64>, labels: &[usize], omega: f64) -> Result<(usize, f64)> {
    let logits = p.logits(x)?;
    let correct = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &y)| argmax(r.as_slice().expect("contiguous")) == y)
        .count();
    let losses = cross_entropy(&logits, labels, Some(logit_bound(omega, p.classes())?)).0;
    Ok((correct, losses.iter().sum()))
}

/// `(1/N) sum w_i l_i`.
pub fn loss_psw(p: &ModelParams, batch: &Batch, omega: Option<f64>) -> Result<f64> {
    let w = batch.weights.as_ref().ok_or(LearnerError::MissingWeights)?;
    let l = sample_losses(p, &batch.images, &batch.labels, omega)?;
    Ok(l.iter().zip(w).map(|(l, w)| l * w).sum::<f64>() / l.len() as f64)
}

/// `(1/2N)` times the summed loss over originals and twins.
pub fn loss_ps(p: &ModelParams, batch: &Batch, omega: Option<f64>) -> Result<f64> {
    let twins = batch.twins.as_ref().ok_or(LearnerError::MissingTwins)?;
    let a = sample_losses(p, &batch.images, &batch.labels, omega)?;
    let b = sample_losses(p, twins, &batch.labels, omega)?;
    Ok((a.iter().sum::<f64>() + b.iter().sum::<f64>()) / (2 * a.len()) as f64)
}

/// Weights or twins may be absent when their coefficient is zero; the
/// corresponding component is then reported as if `pi = 1` or the twins
/// equalled the originals (both reduce to `base`).
pub fn total_loss(p: &ModelParams, batch: &Batch, obj: &Objective) -> Result<LossReport> {
    Ok(backward_impl(p, batch, obj, false)?.0)
}

/// Loss report and gradient of the total objective.
pub fn backward(p: &ModelParams, batch: &Batch, obj: &Objective) -> Result<(LossReport, ModelParams)> {
    let (report, grads) = backward_impl(p, batch, obj, true)?;
    Ok((report, grads.expect("requested")))
}

fn backward_impl(p: &ModelParams, batch: &Batch, obj: &Objective, want_grad: bool) -> Result<(LossReport, Option<ModelParams>)> {
    obj.validate()?;
    if batch.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    p.check_input(batch.images.ncols())?;
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= p.classes()) {
        return Err(LearnerError::ShapeMismatch(format!("label {bad} with {} classes", p.classes())));
    }
    if obj.alpha > 0.0 && batch.weights.is_none() {
        return Err(LearnerError::MissingWeights);
    }
    if obj.beta > 0.0 && batch.twins.is_none() {
        return Err(LearnerError::MissingTwins);
    }
    let bound = bound_for(p, obj.omega)?;
    let n = batch.len() as f64;

    let trace = p.run(batch.images.view());
    let (losses, dl) = cross_entropy(&trace.logits, &batch.labels, bound);
    let base = mean(&losses);
    let psw = match &batch.weights {
        Some(w) => losses.iter().zip(w).map(|(l, w)| l * w).sum::<f64>() / n,
        None => base,
    };
    let twin_pass = match (&batch.twins, obj.beta > 0.0) {
        (Some(t), true) => Some(p.run(t.view())),
        _ => None,
    };
    let twin_losses = twin_pass.as_ref().map(|t| cross_entropy(&t.logits, &batch.labels, bound));
    let ps = match (&twin_losses, &batch.twins) {
        (Some((tl, _)), _) => (losses.iter().sum::<f64>() + tl.iter().sum::<f64>()) / (2.0 * n),
        (None, Some(t)) => {
            let tl = cross_entropy(&p.run(t.view()).logits, &batch.labels, bound).0;
            (losses.iter().sum::<f64>() + tl.iter().sum::<f64>()) / (2.0 * n)
        }
        (None, None) => base,
    };
    let report = LossReport::compose(base, psw, ps, obj.alpha, obj.beta);
    if !want_grad {
        return Ok((report, None));
    }

    let coeff_head: Vec<f64> = (0..batch.len())
        .map(|i| {
            let w = batch.weights.as_ref().map_or(1.0, |w| w[i]);
            (1.0 + obj.alpha * w) / n
        })
        .collect();
    let ps_coeff = obj.beta / (2.0 * n);
    let scale_rows = |d: &Array2<f64>, coeff: &dyn Fn(usize) -> f64| {
        let mut out = d.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row *= coeff(i);
        }
        out
    };
    let delta_full = scale_rows(&dl, &|i| coeff_head[i] + ps_coeff);
    let mut grads = ModelParams::zeros(&p.sizes());
    if obj.freeze_head && obj.beta > 0.0 {
        let delta_head = scale_rows(&dl, &|i| coeff_head[i]);
        p.backprop(&trace, delta_full, Some(&delta_head), &mut grads);
    } else {
        p.backprop(&trace, delta_full, None, &mut grads);
    }
    if let (Some(t), Some((_, tdl))) = (&twin_pass, &twin_losses) {
        let delta = tdl * ps_coeff;
        if obj.freeze_head {
            let zero = Array2::zeros(delta.dim());
            p.backprop(t, delta, Some(&zero), &mut grads);
        } else {
            p.backprop(t, delta, None, &mut grads);
        }
    }
    Ok((report, Some(grads)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelParams {
        ModelParams::new(vec![
            Layer { weight: array![[0.5, -0.25], [0.1, 0.3], [-0.2, 0.4]], bias: array![0.05, -0.1] },
            Layer { weight: array![[1.0, -1.0], [0.5, 0.25]], bias: array![0.0, 0.2] },
        ])
        .unwrap()
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let p = ModelParams::zeros(&[12, 4, 2]);
        let img = ImageTensor::new(3, 2, 2, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(forward(&p, &img).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn single_layer_scales_input() {
        let p = ModelParams::new(vec![Layer { weight: array![[2.0, -3.0]], bias: array![0.0, 0.0] }]).unwrap();
        let x = array![[0.7]];
        let z = p.logits(x.view()).unwrap();
        assert!((z[[0, 0]] - 1.4).abs() < 1e-15 && (z[[0, 1]] + 2.1).abs() < 1e-15);
        // without hidden layers the encoder is the identity
        assert_eq!(p.encode(x.view()).unwrap(), x);
    }

    #[test]
    fn tiny_model_logits_by_hand() {
        let x = array![[1.0, 2.0, -1.0]];
        // hidden pre-activations: 0.5 + 0.2 + 0.2 + 0.05 = 0.95, -0.25 + 0.6 - 0.4 - 0.1 = -0.15
        let h = [0.95f64.tanh(), (-0.15f64).tanh()];
        let expect = [h[0] + 0.5 * h[1], -h[0] + 0.25 * h[1] + 0.2];
        let got = tiny().logits(x.view()).unwrap();
        assert!((got[[0, 0]] - expect[0]).abs() < 1e-15);
        assert!((got[[0, 1]] - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn shape_checks() {
        assert!(matches!(tiny().logits(array![[1.0, 2.0]].view()), Err(LearnerError::ShapeMismatch(_))));
        let bad = vec![
            Layer { weight: Array2::zeros((3, 2)), bias: Array1::zeros(2) },
            Layer { weight: Array2::zeros((3, 2)), bias: Array1::zeros(2) },
        ];
        assert!(ModelParams::new(bad).is_err());
    }

    #[test]
    fn bound_keeps_loss_below_omega() {
        for m in [2, 3, 10] {
            let b = logit_bound(10.0, m).unwrap();
            let mut row = vec![b * 50.0; m];
            row[0] = -b * 50.0;
            let logits = Array2::from_shape_vec((1, m), row).unwrap();
            let (l, _) = cross_entropy(&logits, &[0], Some(b));
            assert!(l[0] <= 10.0 + 1e-12 && l[0] > 9.99, "m={m} loss {}", l[0]);
        }
        assert!((logit_bound(10.0, 2).unwrap() - (10f64.exp() - 1.0).ln() / 2.0).abs() < 1e-15);
        assert!(logit_bound(0.5, 2).is_err());
    }

    #[test]
    fn uniform_and_confident_losses() {
        let p = ModelParams::zeros(&[3, 2]);
        let b = Batch::new(array![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]], vec![0, 1], 0).unwrap();
        assert!((loss_erm(&p, &b, Some(10.0)).unwrap() - 2f64.ln()).abs() < 1e-15);
        let p = ModelParams::new(vec![Layer { weight: array![[20.0, -20.0]], bias: array![0.0, 0.0] }]).unwrap();
        let b = Batch::new(array![[1.0]], vec![0], 0).unwrap();
        assert!(loss_erm(&p, &b, Some(10.0)).unwrap() < 1e-3);
        assert!(loss_erm(&p, &b, None).unwrap() < 1e-15);
    }

    #[test]
    fn two_sample_cross_entropy() {
        // logits (1, 0) and (0, 2) with labels 0 and 0, unclamped
        let p = ModelParams::new(vec![Layer { weight: array![[1.0, 0.0], [0.0, 2.0]], bias: array![0.0, 0.0] }]).unwrap();
        let b = Batch::new(array![[1.0, 0.0], [0.0, 1.0]], vec![0, 0], 0).unwrap();
        let expect = ((1.0 + (-1f64).exp()).ln() + (1.0 + 2f64.exp()).ln()) / 2.0;
        assert!((loss_erm(&p, &b, None).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn component_losses() {
        let p = tiny();
        let x = array![[1.0, 2.0, -1.0], [0.3, -0.2, 0.9]];
        let b = Batch::new(x.clone(), vec![0, 1], 0).unwrap();
        assert!(matches!(loss_psw(&p, &b, None), Err(LearnerError::MissingWeights)));
        assert!(matches!(loss_ps(&p, &b, None), Err(LearnerError::MissingTwins)));
        let erm = loss_erm(&p, &b, None).unwrap();
        let b1 = b.clone().with_weights(vec![1.0, 1.0]).unwrap().with_twins(x.clone()).unwrap();
        assert_eq!(loss_psw(&p, &b1, None).unwrap(), erm);
        assert!((loss_ps(&p, &b1, None).unwrap() - erm).abs() < 1e-15);

        let single = Batch::new(array![[1.0, 2.0, -1.0]], vec![1], 0).unwrap();
        let l = loss_erm(&p, &single, None).unwrap();
        let w = single.with_weights(vec![2.0]).unwrap();
        assert!((loss_psw(&p, &w, None).unwrap() - 2.0 * l).abs() < 1e-15);

        let twins = array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let b2 = b.with_twins(twins.clone()).unwrap();
        let orig = sample_losses(&p, &x, &[0, 1], None).unwrap();
        let tw = sample_losses(&p, &twins, &[0, 1], None).unwrap();
        let expect = (orig[0] + orig[1] + tw[0] + tw[1]) / 4.0;
        assert!((loss_ps(&p, &b2, None).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn composition() {
        let r = LossReport::compose(1.0, 2.0, 3.0, 0.5, 0.25);
        assert_eq!(r.total, 2.75);
        let p = tiny();
        let b = Batch::new(array![[1.0, 2.0, -1.0], [0.3, -0.2, 0.9]], vec![0, 1], 0).unwrap();
        let r = total_loss(&p, &b, &Objective::erm()).unwrap();
        assert_eq!(r.total, r.base);
        assert!(matches!(total_loss(&p, &b, &Objective::new(0.1, 0.0)), Err(LearnerError::MissingWeights)));
        assert!(matches!(total_loss(&p, &b, &Objective::new(0.0, 0.1)), Err(LearnerError::MissingTwins)));
        assert!(matches!(total_loss(&p, &b, &Objective::new(-1.0, 0.0)), Err(LearnerError::ConfigInvalid(_))));
    }

    #[test]
    fn symmetric_point_has_zero_head_bias_gradient() {
        let p = ModelParams::zeros(&[2, 3, 2]);
        let b = Batch::new(array![[1.0, 0.0], [0.0, 1.0]], vec![0, 1], 0)
            .unwrap()
            .with_weights(vec![2.0, 2.0])
            .unwrap();
        let (_, g) = backward(&p, &b, &Objective::new(0.5, 0.0)).unwrap();
        assert!(g.layers()[1].bias.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn weight_scales_gradient_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ModelParams::init(&[3, 4, 2], &mut rng);
        let x = array![[1.0, 2.0, -1.0]];
        let grad_psw = |w: f64| {
            let b = Batch::new(x.clone(), vec![1], 0).unwrap().with_weights(vec![w]).unwrap();
            let (_, g1) = backward(&p, &b, &Objective { omega: None, ..Objective::new(1.0, 0.0) }).unwrap();
            let (_, g0) = backward(&p, &b, &Objective { omega: None, ..Objective::erm() }).unwrap();
            let mut d = g1;
            d.add_scaled(-1.0, &g0);
            d.to_flat()
        };
        let (a, b) = (grad_psw(1.5), grad_psw(3.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_head_ignores_twin_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ModelParams::init(&[3, 4, 2], &mut rng);
        let x = array![[1.0, 2.0, -1.0], [0.5, 0.5, 0.5]];
        let b = Batch::new(x.clone(), vec![1, 0], 0).unwrap().with_twins(x.mapv(|v| v * 0.5)).unwrap();
        let frozen = Objective { freeze_head: true, ..Objective::new(0.0, 1.0) };
        let (_, g_frozen) = backward(&p, &b, &frozen).unwrap();
        let (_, g_erm) = backward(&p, &b, &Objective::erm()).unwrap();
        let (_, g_full) = backward(&p, &b, &Objective::new(0.0, 1.0)).unwrap();
        assert_eq!(g_frozen.layers()[1], g_erm.layers()[1]);
        assert_eq!(g_frozen.layers()[0], g_full.layers()[0]);
    }

    #[test]
    fn flat_roundtrip() {
        let mut p = tiny();
        let mut flat = p.to_flat();
        assert_eq!(flat.len(), 3 * 2 + 2 + 2 * 2 + 2);
        flat[0] = 9.0;
        p.set_flat(&flat).unwrap();
        assert_eq!(p.layers()[0].weight[[0, 0]], 9.0);
        assert!(p.set_flat(&flat[1..]).is_err());
    }
}
