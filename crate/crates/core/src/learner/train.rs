//! End-to-end training loop.
//!
//! Per epoch: refresh the propensity table from clusterings of `g(x_h)` and
//! `g(x_l)` (every `refresh` epochs), draw simulated twins, then run
//! single-domain mini-batches of plain gradient descent on the objective.

use ndarray::{s, Array2, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{backward, logit_bound, Batch, LearnerError, LossReport, MetricsRow, ModelParams, Objective, Result};
use crate::datasets::DomainDataset;
use crate::propensity::{
    build_table, kmeans, propensity_rows, sample_propensity, FeatureOrigin, FeatureSet, PropensityRow, PropensityTable,
};
use crate::seeds::{subseed, substream};
use crate::spectral::{sample_lambda, split_bands, Fft2, MaskScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub step: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Loss ceiling used for logit clamping.
    pub omega: f64,
    /// Filter size `S`; defaults to a quarter of the image height.
    pub filter_size: Option<usize>,
    pub mask_scheme: MaskScheme,
    /// Mixing ratios are drawn from `U(0, delta)`.
    pub delta: f64,
    /// Number of spurious-feature clusters `n`.
    pub spurious_clusters: usize,
    /// Propensity floor.
    pub floor: f64,
    /// Recluster every `refresh` epochs.
    pub refresh: usize,
    pub self_normalize: bool,
    pub freeze_head: bool,
    /// One table over all training domains instead of one per domain.
    pub pooled_propensity: bool,
    pub kmeans_iters: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            hidden: vec![64],
            step: 0.1,
            batch_size: 128,
            epochs: 20,
            alpha: 0.0,
            beta: 0.0,
            omega: 10.0,
            filter_size: None,
            mask_scheme: MaskScheme::Cross,
            delta: 1.0,
            spurious_clusters: 2,
            floor: 0.05,
            refresh: 1,
            self_normalize: false,
            freeze_head: false,
            pooled_propensity: false,
            kmeans_iters: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let bad = |m: String| Err(LearnerError::ConfigInvalid(m));
        if self.epochs == 0 || self.batch_size == 0 || self.refresh == 0 || self.kmeans_iters == 0 {
            return bad("epochs, batch_size, refresh and kmeans_iters must be positive".into());
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad(format!("step {} must be positive", self.step));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad(format!("alpha {} and beta {} must be >= 0", self.alpha, self.beta));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            return bad(format!("delta {} must lie in [0, 1]", self.delta));
        }
        if self.spurious_clusters == 0 {
            return bad("spurious_clusters must be positive".into());
        }
        if !(0.0..=1.0 / classes as f64).contains(&self.floor) {
            return bad(format!("floor {} must lie in [0, 1/{classes}]", self.floor));
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer of width 0".into());
        }
        logit_bound(self.omega, classes)?;
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        Objective { alpha: self.alpha, beta: self.beta, omega: Some(self.omega), freeze_head: self.freeze_head }
    }
}

/// Final cluster assignments and propensities of one training domain (or of
/// the pooled set, named `pooled`).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPropensity {
    pub domain: String,
    pub table: PropensityTable,
    pub rows: Vec<PropensityRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: ModelParams,
    pub history: Vec<MetricsRow>,
    pub propensity: Vec<DomainPropensity>,
}

impl TrainResult {
    /// Final-epoch accuracy on `domain`.
    pub fn final_accuracy(&self, domain: &str) -> Option<f64> {
        self.history.iter().rev().find(|r| r.domain == domain).map(|r| r.accuracy)
    }
}

const EVAL_CHUNK: usize = 1024;

/// Accuracy and mean clamped cross-entropy over a whole domain.
pub fn evaluate(p: &ModelParams, ds: &DomainDataset, omega: f64) -> Result<(f64, f64)> {
    evaluate_rows(p, ds.matrix().view(), &labels_of(ds), omega)
}

fn labels_of(ds: &DomainDataset) -> Vec<usize> {
    ds.labels.iter().map(|&l| usize::from(l)).collect()
}

fn evaluate_rows(p: &ModelParams, x: ArrayView2<f64>, labels: &[usize], omega: f64) -> Result<(f64, f64)> {
    if labels.is_empty() {
        return Err(LearnerError::EmptyBatch);
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    for start in (0..labels.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(labels.len());
        let (c, l) = super::score(p, x.slice(s![start..end, ..]), &labels[start..end], omega)?;
        correct += c;
        loss += l;
    }
    let n = labels.len() as f64;
    Ok((correct as f64 / n, loss / n))
}

pub fn accuracy(p: &ModelParams, ds: &DomainDataset) -> Result<f64> {
    let x = ds.matrix();
    let pred = p.predict(x.view())?;
    Ok(pred.iter().zip(&ds.labels).filter(|(a, &b)| **a == usize::from(b)).count() as f64 / ds.len() as f64)
}

/// Low and high band images of every sample, stored as `f32` rows.
struct Bands {
    low: Array2<f32>,
    high: Array2<f32>,
}

fn bands(ds: &DomainDataset, size: usize, scheme: MaskScheme) -> Result<Bands> {
    let fft = Fft2::new(ds.height, ds.width);
    let d = ds.pixels_per_image();
    let mut low = Array2::zeros((ds.len(), d));
    let mut high = Array2::zeros((ds.len(), d));
    for i in 0..ds.len() {
        let (xl, xh) = split_bands(&fft, &ds.image(i), size, scheme)?;
        low.row_mut(i).iter_mut().zip(xl.data()).for_each(|(o, &v)| *o = v as f32);
        high.row_mut(i).iter_mut().zip(xh.data()).for_each(|(o, &v)| *o = v as f32);
    }
    Ok(Bands { low, high })
}

fn encode_f32(p: &ModelParams, x: &Array2<f32>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((x.nrows(), p.sizes()[p.sizes().len() - 2]));
    for start in (0..x.nrows()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(x.nrows());
        let chunk = x.slice(s![start..end, ..]).mapv(f64::from);
        out.slice_mut(s![start..end, ..]).assign(&p.encode(chunk.view())?);
    }
    Ok(out)
}

fn stack(parts: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = parts.iter().map(|a| a.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("same width")
}

/// Propensities `pi[d][i]` for every training sample, plus tables for reporting.
fn refresh_propensity(
    p: &ModelParams,
    cfg: &TrainConfig,
    classes: usize,
    domains: &[&DomainDataset],
    bands: &[Bands],
    round: u64,
) -> Result<(Vec<Vec<f64>>, Vec<DomainPropensity>)> {
    let mut feats_c = Vec::new();
    let mut feats_s = Vec::new();
    for b in bands {
        feats_c.push(encode_f32(p, &b.high)?);
        feats_s.push(encode_f32(p, &b.low)?);
    }
    let groups: Vec<Vec<usize>> = if cfg.pooled_propensity {
        vec![(0..domains.len()).collect()]
    } else {
        (0..domains.len()).map(|d| vec![d]).collect()
    };
    let mut pi: Vec<Vec<f64>> = domains.iter().map(|d| vec![0.0; d.len()]).collect();
    let mut report = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        let c = stack(&members.iter().map(|&d| feats_c[d].clone()).collect::<Vec<_>>());
        let s = stack(&members.iter().map(|&d| feats_s[d].clone()).collect::<Vec<_>>());
        let ids: Vec<usize> = (0..c.nrows()).collect();
        let seed = subseed(cfg.seed, "kmeans", round * 1000 + g as u64);
        let c_fs = FeatureSet::new(c, FeatureOrigin::Invariant, ids.clone())?;
        let s_fs = FeatureSet::new(s, FeatureOrigin::Spurious, ids.clone())?;
        let cc = kmeans(&c_fs, classes, seed, cfg.kmeans_iters)?;
        let sc = kmeans(&s_fs, cfg.spurious_clusters.min(s_fs.len()), seed ^ 1, cfg.kmeans_iters)?;
        let table = build_table(&cc, &sc, cfg.floor)?;
        let mut k = 0;
        for &d in members {
            for slot in pi[d].iter_mut() {
                *slot = sample_propensity(&table, &cc, &sc, k)?;
                k += 1;
            }
        }
        let name = if cfg.pooled_propensity { "pooled".to_string() } else { domains[members[0]].name.clone() };
        let rows = propensity_rows(&table, &cc, &sc, &ids)?;
        report.push(DomainPropensity { domain: name, table, rows });
    }
    Ok((pi, report))
}

/// Clusters and propensity tables of `domains` under the encoder of `p`.
pub fn estimate_propensity(p: &ModelParams, cfg: &TrainConfig, domains: &[&DomainDataset]) -> Result<Vec<DomainPropensity>> {
    let first = domains.first().ok_or_else(|| LearnerError::ConfigInvalid("no domains".into()))?;
    let size = cfg.filter_size.unwrap_or(first.height / 4);
    let band_sets: Vec<Bands> = domains.iter().map(|d| bands(d, size, cfg.mask_scheme)).collect::<Result<_>>()?;
    Ok(refresh_propensity(p, cfg, p.classes(), domains, &band_sets, 0)?.1)
}

#[derive(Default, Clone, Copy)]
struct Running {
    n: f64,
    psw: f64,
    ps: f64,
    total: f64,
}

impl Running {
    fn add(&mut self, r: &LossReport, n: usize) {
        let n = n as f64;
        self.n += n;
        self.psw += r.psw * n;
        self.ps += r.ps * n;
        self.total += r.total * n;
    }
}

/// Trains on `train_domains` and evaluates every domain after each epoch.
pub fn train(cfg: &TrainConfig, train_domains: &[&DomainDataset], test_domains: &[&DomainDataset]) -> Result<TrainResult> {
    let first = train_domains
        .first()
        .ok_or_else(|| LearnerError::ConfigInvalid("at least one training domain is required".into()))?;
    let classes = train_domains
        .iter()
        .flat_map(|d| d.labels.iter())
        .map(|&l| usize::from(l) + 1)
        .max()
        .unwrap_or(2)
        .max(2);
    cfg.validate(classes)?;
    let shape = (first.channels, first.height, first.width);
    for d in train_domains.iter().chain(test_domains) {
        if (d.channels, d.height, d.width) != shape {
            return Err(LearnerError::ShapeMismatch(format!("domain {} has a different image shape", d.name)));
        }
        if d.is_empty() {
            return Err(LearnerError::ConfigInvalid(format!("domain {} is empty", d.name)));
        }
    }
    let obj = cfg.objective();
    let mut sizes = vec![first.pixels_per_image()];
    sizes.extend(&cfg.hidden);
    sizes.push(classes);
    let mut params = ModelParams::init(&sizes, &mut substream(cfg.seed, "init"));
    let mut shuffle_rng = substream(cfg.seed, "shuffle");
    let mut pair_rng = substream(cfg.seed, "pairing");
    let mut lambda_rng = substream(cfg.seed, "lambda");

    let xs: Vec<Array2<f64>> = train_domains.iter().map(|d| d.matrix()).collect();
    let ys: Vec<Vec<usize>> = train_domains.iter().map(|d| labels_of(d)).collect();
    let test_xs: Vec<Array2<f64>> = test_domains.iter().map(|d| d.matrix()).collect();
    let test_ys: Vec<Vec<usize>> = test_domains.iter().map(|d| labels_of(d)).collect();
    let need_bands = cfg.alpha > 0.0 || cfg.beta > 0.0;
    let size = cfg.filter_size.unwrap_or(first.height / 4);
    let band_sets: Vec<Bands> = if need_bands {
        train_domains.iter().map(|d| bands(d, size, cfg.mask_scheme)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut pi: Option<Vec<Vec<f64>>> = None;
    let mut propensity = Vec::new();
    let mut history = Vec::new();
    let mut step_count = 0usize;
    for epoch in 0..cfg.epochs {
        if cfg.alpha > 0.0 && epoch % cfg.refresh == 0 {
            let (new_pi, report) =
                refresh_propensity(&params, cfg, classes, train_domains, &band_sets, (epoch / cfg.refresh) as u64)?;
            pi = Some(new_pi);
            propensity = report;
        }

        let mut batches: Vec<(usize, Vec<usize>)> = Vec::new();
        for (d, ds) in train_domains.iter().enumerate() {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut shuffle_rng);
            batches.extend(order.chunks(cfg.batch_size).map(|c| (d, c.to_vec())));
        }
        batches.shuffle(&mut shuffle_rng);

        let mut running = vec![Running::default(); train_domains.len()];
        for (d, idx) in &batches {
            let d = *d;
            let x = xs[d].select(ndarray::Axis(0), idx);
            let labels: Vec<usize> = idx.iter().map(|&i| ys[d][i]).collect();
            let mut batch = Batch::new(x, labels, d)?;
            if let Some(pi) = &pi {
                let mut w: Vec<f64> = idx.iter().map(|&i| 1.0 / pi[d][i]).collect();
                if cfg.self_normalize {
                    let m = w.iter().sum::<f64>() / w.len() as f64;
                    w.iter_mut().for_each(|v| *v /= m);
                }
                batch = batch.with_weights(w)?;
            }
            if cfg.beta > 0.0 {
                let b = &band_sets[d];
                let mut twins = Array2::<f64>::zeros(batch.images.dim());
                for (r, &i) in idx.iter().enumerate() {
                    let j = pair_rng.gen_range(0..train_domains[d].len());
                    let lambda = sample_lambda(cfg.delta, &mut lambda_rng)?;
                    Zip::from(twins.row_mut(r))
                        .and(b.high.row(i))
                        .and(b.low.row(i))
                        .and(b.low.row(j))
                        .for_each(|t, &h, &li, &lj| {
                            *t = f64::from(h) + (1.0 - lambda) * f64::from(li) + lambda * f64::from(lj);
                        });
                }
                batch = batch.with_twins(twins)?;
            }
            let (report, grads) = backward(&params, &batch, &obj)?;
            if !report.total.is_finite() || grads.to_flat().iter().any(|g| !g.is_finite()) {
                return Err(LearnerError::NonFiniteLoss {
                    epoch,
                    step: step_count,
                    detail: format!("{report:?}"),
                });
            }
            params.add_scaled(-cfg.step, &grads);
            running[d].add(&report, idx.len());
            step_count += 1;
        }

        for (d, ds) in train_domains.iter().enumerate() {
            let (acc, base) = evaluate_rows(&params, xs[d].view(), &ys[d], cfg.omega)?;
            let r = running[d];
            history.push(MetricsRow {
                epoch: epoch + 1,
                domain: ds.name.clone(),
                split: "train".into(),
                accuracy: acc,
                base_loss: base,
                psw_loss: Some(r.psw / r.n),
                ps_loss: Some(r.ps / r.n),
                total_loss: Some(r.total / r.n),
            });
        }
        for (d, ds) in test_domains.iter().enumerate() {
            let (acc, base) = evaluate_rows(&params, test_xs[d].view(), &test_ys[d], cfg.omega)?;
            history.push(MetricsRow {
                epoch: epoch + 1,
                domain: ds.name.clone(),
                split: "test".into(),
                accuracy: acc,
                base_loss: base,
                psw_loss: None,
                ps_loss: None,
                total_loss: None,
            });
        }
    }
    Ok(TrainResult { params, history, propensity })
}
