//! Exact discrete structural causal models.
//!
//! Exogenous noise is folded into each variable's conditional probability
//! table, so a model is a DAG plus one CPT per node. Explicit noise nodes can
//! still be declared as ordinary root variables.

mod checks;
pub mod fixtures;
mod format;
mod table;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{CausalDag, GraphError};

pub use checks::{
    adjustment_estimate, adjustment_gaps, check_nonconfounding_causal, check_nonconfounding_statistical,
    is_spurious_witness, nonconfounding_partitions, spurious_correlation_witness, Witness,
    AdjustmentGap, INDEPENDENCE_TOL,
};
pub use format::{parse_scm, ScmFile};
pub use table::{Assignment, JointTable};

/// Default cap on the number of cells an enumerated joint may hold.
pub const DEFAULT_CELL_CAP: usize = 10_000_000;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("value {value} is outside the domain of `{var}`")]
    ValueOutOfDomain { var: String, value: String },
    #[error("`{0}` has no mechanism")]
    MissingMechanism(String),
    #[error("CPT for `{var}` lists parents {given:?}, graph has {expected:?}")]
    ParentMismatch { var: String, given: Vec<String>, expected: Vec<String> },
    #[error("CPT for `{var}`: {message}")]
    BadCpt { var: String, message: String },
    #[error("joint table would need {cells} cells (cap {cap})")]
    DomainTooLarge { cells: u128, cap: usize },
    #[error("conditioning event has zero probability")]
    ZeroConditioningEvent,
    #[error("positivity violated: treatment has zero mass in stratum {0}")]
    PositivityViolation(String),
    #[error("`{0}` is a descendant of the treatment")]
    DescendantInT(String),
    #[error("variable sets overlap at `{0}`")]
    OverlappingSets(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, ScmError>;

/// Conditional probability table for one variable.
///
/// `parents` follows the graph's (lexicographic) parent order. Row `r`
/// corresponds to the mixed-radix parent configuration with the first parent
/// most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    parents: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl Cpt {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// `do(target = value)`, with `value` an index into the target's domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intervention {
    pub target: String,
    pub value: usize,
}

impl Intervention {
    pub fn new(target: &str, value: usize) -> Self {
        Intervention { target: target.to_string(), value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm {
    dag: CausalDag,
    domains: Vec<Vec<String>>,
    cpts: Vec<Cpt>,
}

impl DiscreteScm {
    pub fn builder(dag: CausalDag) -> ScmBuilder {
        ScmBuilder { dag, domains: BTreeMap::new(), cpts: BTreeMap::new() }
    }

    pub fn graph(&self) -> &CausalDag {
        &self.dag
    }

    pub fn domain(&self, var: &str) -> Result<&[String]> {
        Ok(&self.domains[self.dag.index_of(var)?])
    }

    pub fn cpt(&self, var: &str) -> Result<&Cpt> {
        Ok(&self.cpts[self.dag.index_of(var)?])
    }

    pub fn value_index(&self, var: &str, label: &str) -> Result<usize> {
        self.domain(var)?
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| ScmError::ValueOutOfDomain { var: var.to_string(), value: label.to_string() })
    }

    fn cell_count(&self) -> u128 {
        self.domains.iter().map(|d| d.len() as u128).product()
    }

    /// Exact joint distribution with the default cell cap.
    pub fn joint(&self) -> Result<JointTable> {
        self.joint_with_cap(DEFAULT_CELL_CAP)
    }

    /// Exact joint by the product of CPT entries, over all nodes in graph order.
    pub fn joint_with_cap(&self, cap: usize) -> Result<JointTable> {
        let cells = self.cell_count();
        if cells > cap as u128 {
            return Err(ScmError::DomainTooLarge { cells, cap });
        }
        let cards: Vec<usize> = self.domains.iter().map(Vec::len).collect();
        let n = cards.len();
        let mut probs = vec![0.0; cells as usize];
        let mut values = vec![0usize; n];
        for p in probs.iter_mut() {
            let mut mass = 1.0;
            for (v, cpt) in self.cpts.iter().enumerate() {
                let row = cpt
                    .parents
                    .iter()
                    .fold(0usize, |acc, &pa| acc * cards[pa] + values[pa]);
                mass *= cpt.rows[row][values[v]];
                if mass == 0.0 {
                    break;
                }
            }
            *p = mass;
            for v in (0..n).rev() {
                values[v] += 1;
                if values[v] < cards[v] {
                    break;
                }
                values[v] = 0;
            }
        }
        Ok(JointTable::from_parts(
            self.dag.nodes().to_vec(),
            self.domains.clone(),
            probs,
        ))
    }

    /// Mutilated model for `do(iv)`: arrows into the target are removed and its
    /// mechanism becomes a point mass.
    pub fn intervene(&self, iv: &Intervention) -> Result<DiscreteScm> {
        let t = self.dag.index_of(&iv.target)?;
        let card = self.domains[t].len();
        if iv.value >= card {
            return Err(ScmError::ValueOutOfDomain {
                var: iv.target.clone(),
                value: iv.value.to_string(),
            });
        }
        let mut point = vec![0.0; card];
        point[iv.value] = 1.0;
        let mut out = self.clone();
        out.dag = self.dag.without_incoming(&iv.target)?;
        out.cpts[t] = Cpt { parents: Vec::new(), rows: vec![point] };
        Ok(out)
    }

    /// `P(outcome | do(interventions))`, by enumerating the mutilated model.
    pub fn interventional(&self, ivs: &[Intervention], outcome: &Assignment) -> Result<f64> {
        let mut m = self.clone();
        for iv in ivs {
            m = m.intervene(iv)?;
        }
        m.joint()?.prob(outcome)
    }
}

/// Collects domains and CPTs before validation.
#[derive(Debug, Clone)]
pub struct ScmBuilder {
    dag: CausalDag,
    domains: BTreeMap<String, Vec<String>>,
    cpts: BTreeMap<String, (Vec<String>, Vec<Vec<f64>>)>,
}

impl ScmBuilder {
    /// Value labels for `var`. Undeclared variables are binary with labels `0`, `1`.
    pub fn domain<I, S>(mut self, var: &str, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.domains
            .insert(var.to_string(), labels.into_iter().map(|s| s.as_ref().to_string()).collect());
        self
    }

    /// CPT rows for `var`, laid out over `parents` in the order given here.
    pub fn cpt(mut self, var: &str, parents: &[&str], rows: Vec<Vec<f64>>) -> Self {
        self.cpts.insert(
            var.to_string(),
            (parents.iter().map(|s| s.to_string()).collect(), rows),
        );
        self
    }

    pub fn build(self) -> Result<DiscreteScm> {
        let dag = self.dag;
        for name in self.domains.keys().chain(self.cpts.keys()) {
            if !dag.contains(name) {
                return Err(ScmError::UnknownVariable(name.clone()));
            }
        }
        let domains: Vec<Vec<String>> = dag
            .nodes()
            .iter()
            .map(|n| {
                self.domains
                    .get(n)
                    .cloned()
                    .unwrap_or_else(|| vec!["0".to_string(), "1".to_string()])
            })
            .collect();
        for (n, d) in dag.nodes().iter().zip(&domains) {
            if d.is_empty() {
                return Err(ScmError::BadCpt { var: n.clone(), message: "empty domain".into() });
            }
        }

        let mut cpts = Vec::with_capacity(dag.len());
        for (v, name) in dag.nodes().iter().enumerate() {
            let (given_parents, rows) = self
                .cpts
                .get(name)
                .ok_or_else(|| ScmError::MissingMechanism(name.clone()))?;
            let canonical: Vec<usize> = dag.parent_indices(v).to_vec();
            let mut given_idx = Vec::with_capacity(given_parents.len());
            for p in given_parents {
                given_idx.push(dag.index_of(p)?);
            }
            let mut sorted = given_idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted != canonical || given_idx.len() != canonical.len() {
                return Err(ScmError::ParentMismatch {
                    var: name.clone(),
                    given: given_parents.clone(),
                    expected: canonical.iter().map(|&i| dag.name(i).to_string()).collect(),
                });
            }
            let expected_rows: usize = canonical.iter().map(|&p| domains[p].len()).product();
            if rows.len() != expected_rows {
                return Err(ScmError::BadCpt {
                    var: name.clone(),
                    message: format!("expected {expected_rows} rows, got {}", rows.len()),
                });
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != domains[v].len() {
                    return Err(ScmError::BadCpt {
                        var: name.clone(),
                        message: format!("row {r} has {} entries, domain has {}", row.len(), domains[v].len()),
                    });
                }
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(ScmError::BadCpt {
                        var: name.clone(),
                        message: format!("row {r} has a negative or non-finite entry"),
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(ScmError::BadCpt {
                        var: name.clone(),
                        message: format!("row {r} sums to {sum}"),
                    });
                }
            }

            // Re-lay rows from the caller's parent order into graph order.
            let cards_given: Vec<usize> = given_idx.iter().map(|&p| domains[p].len()).collect();
            let mut canonical_rows = Vec::with_capacity(expected_rows);
            let mut config = vec![0usize; canonical.len()];
            for _ in 0..expected_rows {
                let mut user_row = 0usize;
                for (k, &gp) in given_idx.iter().enumerate() {
                    let pos = canonical.iter().position(|&c| c == gp).expect("same parent set");
                    user_row = user_row * cards_given[k] + config[pos];
                }
                canonical_rows.push(rows[user_row].clone());
                for k in (0..canonical.len()).rev() {
                    config[k] += 1;
                    if config[k] < domains[canonical[k]].len() {
                        break;
                    }
                    config[k] = 0;
                }
            }
            cpts.push(Cpt { parents: canonical, rows: canonical_rows });
        }
        Ok(DiscreteScm { dag, domains, cpts })
    }
}
