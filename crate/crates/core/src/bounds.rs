//! Generalization bound for the propensity-weighted empirical risk, and a
//! Monte Carlo check of its coverage on an enumerable population.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::propensity::{build_table, sample_propensity, Clustering, PropensityError};
use crate::seeds::{mix, substream};

#[derive(Debug, thiserror::Error)]
pub enum BoundError {
    #[error("confidence delta must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("propensity {value} at index {index} is outside (0, 1]")]
    ZeroPropensity { index: usize, value: f64 },
    #[error("invalid bound input: {0}")]
    InvalidInput(String),
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error(transparent)]
    Propensity(#[from] PropensityError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BoundError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInput {
    pub empirical_risk: f64,
    pub omega: f64,
    pub hypothesis_count: usize,
    pub confidence_delta: f64,
    pub propensities: Vec<f64>,
}

impl BoundInput {
    pub fn n(&self) -> usize {
        self.propensities.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_delta > 0.0 && self.confidence_delta < 1.0) {
            return Err(BoundError::InvalidConfidence(self.confidence_delta));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(BoundError::InvalidInput(format!("omega must be positive, got {}", self.omega)));
        }
        if self.hypothesis_count == 0 {
            return Err(BoundError::InvalidInput("hypothesis count must be positive".into()));
        }
        if self.propensities.is_empty() {
            return Err(BoundError::InvalidInput("no propensities".into()));
        }
        if !self.empirical_risk.is_finite() {
            return Err(BoundError::InvalidInput(format!("empirical risk {}", self.empirical_risk)));
        }
        if let Some((index, &value)) = self.propensities.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
            return Err(BoundError::ZeroPropensity { index, value });
        }
        Ok(())
    }

    fn confidence_term(&self) -> f64 {
        ((2.0 * self.hypothesis_count as f64 / self.confidence_delta).ln() / 2.0).sqrt()
    }
}

/// `(omega / N) sqrt(ln(2|H|/delta) / 2) sqrt(sum 1/pi^2)`.
pub fn slack(b: &BoundInput) -> Result<f64> {
    b.validate()?;
    let inv: f64 = b.propensities.iter().map(|p| 1.0 / (p * p)).sum();
    Ok(b.omega / b.n() as f64 * b.confidence_term() * inv.sqrt())
}

pub fn psw_bound(b: &BoundInput) -> Result<f64> {
    Ok(b.empirical_risk + slack(b)?)
}

/// Hoeffding ranges `l_i / pi_i` instead of `omega / pi_i`. Losses must lie in
/// `[0, omega]`.
pub fn slack_tight(b: &BoundInput, losses: &[f64]) -> Result<f64> {
    b.validate()?;
    if losses.len() != b.n() {
        return Err(BoundError::InvalidInput(format!("{} losses for {} propensities", losses.len(), b.n())));
    }
    if let Some(l) = losses.iter().find(|&&l| !(0.0..=b.omega).contains(&l)) {
        return Err(BoundError::InvalidInput(format!("loss {l} outside [0, {}]", b.omega)));
    }
    let s: f64 = losses.iter().zip(&b.propensities).map(|(l, p)| (l / p).powi(2)).sum();
    Ok(b.confidence_term() * s.sqrt() / b.n() as f64)
}

pub fn psw_bound_tight(b: &BoundInput, losses: &[f64]) -> Result<f64> {
    Ok(b.empirical_risk + slack_tight(b, losses)?)
}

/// A fixed finite population with known propensities and, for each
/// hypothesis, the loss on every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pi: Vec<f64>,
    losses: Vec<Vec<f64>>,
    omega: f64,
}

impl Population {
    pub fn new(pi: Vec<f64>, losses: Vec<Vec<f64>>, omega: f64) -> Result<Self> {
        if pi.is_empty() || losses.is_empty() {
            return Err(BoundError::ScenarioInvalid("empty population or hypothesis class".into()));
        }
        if let Some((index, &value)) = pi.iter().enumerate().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
            return Err(BoundError::ZeroPropensity { index, value });
        }
        for (h, l) in losses.iter().enumerate() {
            if l.len() != pi.len() {
                return Err(BoundError::ScenarioInvalid(format!("hypothesis {h} has {} losses for {} points", l.len(), pi.len())));
            }
            if l.iter().any(|&v| !(0.0..=omega).contains(&v)) {
                return Err(BoundError::ScenarioInvalid(format!("hypothesis {h} has a loss outside [0, {omega}]")));
            }
        }
        Ok(Population { pi, losses, omega })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn hypotheses(&self) -> usize {
        self.losses.len()
    }

    pub fn propensities(&self) -> &[f64] {
        &self.pi
    }

    pub fn losses(&self, h: usize) -> &[f64] {
        &self.losses[h]
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Exact risk of hypothesis `h` under the manipulated distribution.
    pub fn true_risk(&self, h: usize) -> f64 {
        self.losses[h].iter().sum::<f64>() / self.len() as f64
    }

    /// One draw of the reveal mask: point `i` is kept with probability `pi_i`.
    pub fn reveal<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        self.pi.iter().map(|&p| rng.gen::<f64>() < p).collect()
    }

    /// `(1/N) sum_i v_i` with `v_i = l_i / pi_i` on revealed points, else 0.
    pub fn psw_risk(&self, h: usize, revealed: &[bool]) -> f64 {
        let s: f64 = self.losses[h]
            .iter()
            .zip(&self.pi)
            .zip(revealed)
            .filter(|(_, &r)| r)
            .map(|((l, p), _)| l / p)
            .sum();
        s / self.len() as f64
    }
}

/// Two binary clusters `C`, `S` with `P(C = S) = bias`; the label copies `C`
/// and is flipped with probability `noise`. Hypotheses are all 16 maps from
/// the `(C, S)` cell to a label, scored with 0-1 loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularScenario {
    pub n: usize,
    pub bias: f64,
    pub noise: f64,
    pub floor: f64,
    pub seed: u64,
}

impl Default for TabularScenario {
    fn default() -> Self {
        TabularScenario { n: 1000, bias: 0.9, noise: 0.25, floor: 0.05, seed: 0 }
    }
}

impl TabularScenario {
    pub fn population(&self) -> Result<Population> {
        if self.n < 4 {
            return Err(BoundError::ScenarioInvalid(format!("need at least 4 points, got {}", self.n)));
        }
        for (name, v) in [("bias", self.bias), ("noise", self.noise)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(BoundError::ScenarioInvalid(format!("{name} {v} outside [0, 1]")));
            }
        }
        let mut rng = substream(self.seed, "population");
        let mut cs = Vec::with_capacity(self.n);
        let mut ss = Vec::with_capacity(self.n);
        let mut ys = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let s = usize::from(rng.gen::<f64>() < 0.5);
            let c = if rng.gen::<f64>() < self.bias { s } else { 1 - s };
            let y = if rng.gen::<f64>() < self.noise { 1 - c } else { c };
            cs.push(c);
            ss.push(s);
            ys.push(y);
        }
        let cc = Clustering::from_assignments(2, cs.clone())?;
        let sc = Clustering::from_assignments(2, ss.clone())?;
        let table = build_table(&cc, &sc, self.floor)?;
        let pi = (0..self.n).map(|i| sample_propensity(&table, &cc, &sc, i)).collect::<std::result::Result<_, _>>()?;
        let losses = (0..16u32)
            .map(|h| {
                (0..self.n)
                    .map(|i| {
                        let pred = (h >> (2 * cs[i] + ss[i])) as usize & 1;
                        f64::from(u8::from(pred != ys[i]))
                    })
                    .collect()
            })
            .collect();
        Population::new(pi, losses, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub trial: usize,
    pub hypothesis: usize,
    pub empirical_risk: f64,
    pub bound: f64,
    pub true_risk: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub rows: Vec<CoverageRow>,
    pub slack: f64,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        self.rows.iter().filter(|r| r.covered).count() as f64 / self.rows.len() as f64
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, trial as u64, 0xb0d))
}

/// Repeats: reveal, select the hypothesis of least weighted risk (lowest index
/// on ties), and compare its exact risk with the bound. With `tight`, the
/// per-point ranges use the selected hypothesis's losses.
pub fn coverage_experiment(pop: &Population, trials: usize, delta: f64, tight: bool, seed: u64) -> Result<Coverage> {
    if trials < 100 {
        return Err(BoundError::ScenarioInvalid(format!("need at least 100 trials, got {trials}")));
    }
    let input = |risk: f64| BoundInput {
        empirical_risk: risk,
        omega: pop.omega,
        hypothesis_count: pop.hypotheses(),
        confidence_delta: delta,
        propensities: pop.pi.clone(),
    };
    let base_slack = slack(&input(0.0))?;
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let revealed = pop.reveal(&mut trial_rng(seed, trial));
        let mut best = (0, f64::INFINITY);
        for h in 0..pop.hypotheses() {
            let r = pop.psw_risk(h, &revealed);
            if r < best.1 {
                best = (h, r);
            }
        }
        let (h, risk) = best;
        let bound = if tight { psw_bound_tight(&input(risk), &pop.losses[h])? } else { risk + base_slack };
        let true_risk = pop.true_risk(h);
        rows.push(CoverageRow { trial, hypothesis: h, empirical_risk: risk, bound, true_risk, covered: true_risk <= bound });
    }
    Ok(Coverage { rows, slack: base_slack })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub exact: f64,
}

impl MeanEstimate {
    /// Distance of the Monte Carlo mean from the exact value in standard errors.
    pub fn z(&self) -> f64 {
        if self.std_err == 0.0 {
            if self.mean == self.exact {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - self.exact).abs() / self.std_err
        }
    }
}

/// Monte Carlo mean of the weighted risk of a fixed hypothesis.
pub fn unbiasedness(pop: &Population, h: usize, trials: usize, seed: u64) -> Result<MeanEstimate> {
    if h >= pop.hypotheses() {
        return Err(BoundError::ScenarioInvalid(format!("hypothesis {h} of {}", pop.hypotheses())));
    }
    if trials < 2 {
        return Err(BoundError::ScenarioInvalid("need at least 2 trials".into()));
    }
    let draws: Vec<f64> = (0..trials).map(|t| pop.psw_risk(h, &pop.reveal(&mut trial_rng(seed, t)))).collect();
    let mean = draws.iter().sum::<f64>() / trials as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(MeanEstimate { mean, std_err: (var / trials as f64).sqrt(), exact: pop.true_risk(h) })
}

pub fn write_coverage_csv<W: Write>(w: W, rows: &[CoverageRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
