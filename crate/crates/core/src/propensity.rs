//! Feature clustering and the cluster-level propensity table `P(C | S)`.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("empty feature set")]
    EmptyInput,
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { k: usize, n: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("clusterings cover {c} and {s} samples")]
    MisalignedSamples { c: usize, s: usize },
    #[error("sample index {index} out of range ({len} samples)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("floor {floor} cannot be met by {m} rows (need floor <= 1/m)")]
    InvalidFloor { floor: f64, m: usize },
    #[error("propensity csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, PropensityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureOrigin {
    /// Encoded high-frequency part.
    Invariant,
    /// Encoded low-frequency part.
    Spurious,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    vectors: Array2<f64>,
    origin: FeatureOrigin,
    sample_ids: Vec<usize>,
}

impl FeatureSet {
    pub fn new(vectors: Array2<f64>, origin: FeatureOrigin, sample_ids: Vec<usize>) -> Result<Self> {
        if vectors.nrows() == 0 {
            return Err(PropensityError::EmptyInput);
        }
        if sample_ids.len() != vectors.nrows() {
            return Err(PropensityError::InvalidArgument(format!(
                "{} sample ids for {} vectors",
                sample_ids.len(),
                vectors.nrows()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(PropensityError::InvalidArgument("non-finite feature".into()));
        }
        Ok(FeatureSet { vectors, origin, sample_ids })
    }

    /// Rows numbered `0..N`.
    pub fn from_rows(rows: &[Vec<f64>], origin: FeatureOrigin) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(PropensityError::InvalidArgument("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let vectors = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| PropensityError::InvalidArgument(e.to_string()))?;
        Self::new(vectors, origin, (0..rows.len()).collect())
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn origin(&self) -> FeatureOrigin {
        self.origin
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    k: usize,
    centroids: Array2<f64>,
    assignments: Vec<usize>,
    inertia: f64,
    /// Inertia after every assignment step.
    history: Vec<f64>,
}

impl Clustering {
    /// A clustering given directly by labels (no geometry).
    pub fn from_assignments(k: usize, assignments: Vec<usize>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(PropensityError::EmptyInput);
        }
        if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
            return Err(PropensityError::InvalidArgument(format!("assignment {bad} >= k = {k}")));
        }
        Ok(Clustering { k, centroids: Array2::zeros((k, 0)), assignments, inertia: 0.0, history: Vec::new() })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn inertia_history(&self) -> &[f64] {
        &self.history
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid per point (lowest index on ties) and total squared distance.
fn assign(x: &Array2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(x.nrows());
    let mut dists = Vec::with_capacity(x.nrows());
    for row in x.rows() {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in centroids.rows().into_iter().enumerate() {
            let d = sq_dist(row, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels.push(best.0);
        dists.push(best.1);
    }
    (labels, dists)
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Lloyd's algorithm with farthest-point seeding.
///
/// The first centre is a uniform draw from `seed`; each further centre is the
/// point farthest from those already chosen. Iterates until the assignment
/// stops changing or `max_iters` assignment steps have run. A cluster left
/// empty is moved onto the point currently farthest from its own centroid.
pub fn kmeans(fs: &FeatureSet, k: usize, seed: u64, max_iters: usize) -> Result<Clustering> {
    let x = &fs.vectors;
    let n = x.nrows();
    if n == 0 {
        return Err(PropensityError::EmptyInput);
    }
    if k == 0 || k > n {
        return Err(PropensityError::TooFewPoints { k, n });
    }
    if max_iters == 0 {
        return Err(PropensityError::InvalidArgument("max_iters must be at least 1".into()));
    }
    let d = x.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Array2::zeros((k, d));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut nearest: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let pick = argmax(&nearest);
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.rows().into_iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(r, x.row(pick)));
        }
    }

    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    loop {
        let (labels, dists) = assign(x, &centroids);
        let inertia: f64 = dists.iter().sum();
        history.push(inertia);
        let converged = previous.as_ref() == Some(&labels);
        if converged || history.len() == max_iters {
            return Ok(Clustering { k, centroids, assignments: labels, inertia, history });
        }

        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let mut row = sums.row_mut(l);
            row += &x.row(i);
            counts[l] += 1;
        }
        let mut reseeded = dists.clone();
        for c in 0..k {
            if counts[c] > 0 {
                let mean = &sums.row(c) / counts[c] as f64;
                centroids.row_mut(c).assign(&mean);
            } else {
                let pick = argmax(&reseeded);
                centroids.row_mut(c).assign(&x.row(pick));
                reseeded[pick] = f64::NEG_INFINITY;
            }
        }
        previous = Some(labels);
    }
}

/// Cluster-level propensities: column `l` holds `P(C = k | S = l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityTable {
    m: usize,
    n: usize,
    probs: Vec<f64>,
    raw: Vec<f64>,
    counts: Vec<u64>,
    floor: f64,
}

impl PropensityTable {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Clipped, renormalised probability.
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.probs[k * self.n + l]
    }

    /// Conditional frequency before clipping (uniform for empty columns).
    pub fn raw(&self, k: usize, l: usize) -> f64 {
        self.raw[k * self.n + l]
    }

    pub fn count(&self, k: usize, l: usize) -> u64 {
        self.counts[k * self.n + l]
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        (0..self.m).map(|k| self.get(k, l)).collect()
    }
}

/// Raises every entry to at least `floor` and rescales the unclipped entries
/// so the column still sums to one.
fn clip_column(col: &mut [f64], floor: f64) {
    let mut pinned = vec![false; col.len()];
    let raw = col.to_vec();
    loop {
        let pinned_mass = floor * pinned.iter().filter(|&&p| p).count() as f64;
        let free_raw: f64 = raw.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(v, _)| v).sum();
        let scale = if free_raw > 0.0 { (1.0 - pinned_mass) / free_raw } else { 0.0 };
        let mut changed = false;
        for i in 0..col.len() {
            if pinned[i] {
                col[i] = floor;
            } else {
                col[i] = raw[i] * scale;
                if col[i] < floor {
                    pinned[i] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

/// Counts `(C, S)` cluster pairs and normalises each `S` column.
pub fn build_table(c: &Clustering, s: &Clustering, floor: f64) -> Result<PropensityTable> {
    if c.len() != s.len() {
        return Err(PropensityError::MisalignedSamples { c: c.len(), s: s.len() });
    }
    let (m, n) = (c.k, s.k);
    if !(0.0..=1.0 / m as f64).contains(&floor) {
        return Err(PropensityError::InvalidFloor { floor, m });
    }
    let mut counts = vec![0u64; m * n];
    for (&a, &b) in c.assignments.iter().zip(&s.assignments) {
        counts[a * n + b] += 1;
    }
    let mut raw = vec![0.0; m * n];
    let mut probs = vec![0.0; m * n];
    for l in 0..n {
        let total: u64 = (0..m).map(|k| counts[k * n + l]).sum();
        let mut col: Vec<f64> = (0..m)
            .map(|k| if total == 0 { 1.0 / m as f64 } else { counts[k * n + l] as f64 / total as f64 })
            .collect();
        for k in 0..m {
            raw[k * n + l] = col[k];
        }
        clip_column(&mut col, floor);
        for k in 0..m {
            probs[k * n + l] = col[k];
        }
    }
    Ok(PropensityTable { m, n, probs, raw, counts, floor })
}

fn check_aligned(table: &PropensityTable, c: &Clustering, s: &Clustering) -> Result<()> {
    if c.len() != s.len() {
        return Err(PropensityError::MisalignedSamples { c: c.len(), s: s.len() });
    }
    if c.k != table.m || s.k != table.n {
        return Err(PropensityError::InvalidArgument(format!(
            "table is {}x{}, clusterings have k = {} and {}",
            table.m, table.n, c.k, s.k
        )));
    }
    Ok(())
}

/// `π_i`: the table entry at sample `i`'s `(C, S)` cluster pair.
pub fn sample_propensity(table: &PropensityTable, c: &Clustering, s: &Clustering, i: usize) -> Result<f64> {
    check_aligned(table, c, s)?;
    if i >= c.len() {
        return Err(PropensityError::IndexOutOfRange { index: i, len: c.len() });
    }
    Ok(table.get(c.assignments[i], s.assignments[i]))
}

/// `1 / π_i` for each index; with `self_normalize` the batch mean becomes 1.
pub fn psw_weights(
    table: &PropensityTable,
    c: &Clustering,
    s: &Clustering,
    indices: &[usize],
    self_normalize: bool,
) -> Result<Vec<f64>> {
    let mut w = indices
        .iter()
        .map(|&i| sample_propensity(table, c, s, i).map(|p| 1.0 / p))
        .collect::<Result<Vec<f64>>>()?;
    if self_normalize && !w.is_empty() {
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|v| *v /= mean);
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityRow {
    pub sample_id: usize,
    pub c_cluster: usize,
    pub s_cluster: usize,
    pub pi: f64,
}

/// One row per sample, `sample_ids[i]` labelling position `i`.
pub fn propensity_rows(
    table: &PropensityTable,
    c: &Clustering,
    s: &Clustering,
    sample_ids: &[usize],
) -> Result<Vec<PropensityRow>> {
    check_aligned(table, c, s)?;
    if sample_ids.len() != c.len() {
        return Err(PropensityError::MisalignedSamples { c: c.len(), s: sample_ids.len() });
    }
    Ok(sample_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| PropensityRow {
            sample_id: id,
            c_cluster: c.assignments[i],
            s_cluster: s.assignments[i],
            pi: table.get(c.assignments[i], s.assignments[i]),
        })
        .collect())
}

pub fn write_propensity_csv<W: Write>(w: W, rows: &[PropensityRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_propensity_csv<R: Read>(r: R) -> Result<Vec<PropensityRow>> {
    let rows = csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<Vec<PropensityRow>, _>>()?;
    if let Some(bad) = rows.iter().find(|r| !(r.pi > 0.0 && r.pi <= 1.0)) {
        return Err(PropensityError::InvalidArgument(format!(
            "sample {} has propensity {} outside (0, 1]",
            bad.sample_id, bad.pi
        )));
    }
    Ok(rows)
}
