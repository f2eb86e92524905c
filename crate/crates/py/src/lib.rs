//! Python module `cpsw`: causal graph and SCM queries, propensity tables,
//! the weighted-risk bound, data generation and training.

use std::collections::BTreeMap;
use std::path::PathBuf;

use cpsw_core::bounds::{self, BoundInput, TabularScenario};
use cpsw_core::config::ExperimentConfig;
use cpsw_core::datasets::{generate, write_domains, GenSpec};
use cpsw_core::experiment::{self, Corpus};
use cpsw_core::graph::{parse_dag, CausalDag};
use cpsw_core::propensity::{self, Clustering, FeatureOrigin, FeatureSet};
use cpsw_core::scm::{self, fixtures, parse_scm, Assignment, Intervention, ScmFile};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A directed acyclic graph parsed from `parent -> child` lines.
#[pyclass(name = "Dag", frozen)]
struct PyDag {
    dag: CausalDag,
}

#[pymethods]
impl PyDag {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyDag { dag: parse_dag(text).map_err(value_err)? })
    }

    fn nodes(&self) -> Vec<String> {
        self.dag.nodes().to_vec()
    }

    fn edges(&self) -> Vec<(String, String)> {
        self.dag.edges()
    }

    fn topological_order(&self) -> Vec<String> {
        self.dag.topological_order().into_iter().map(str::to_string).collect()
    }

    #[pyo3(signature = (x, y, given = Vec::new()))]
    fn d_separated(&self, x: &str, y: &str, given: Vec<String>) -> PyResult<bool> {
        self.dag.d_separated(x, y, &given).map_err(value_err)
    }

    fn paths(&self, x: &str, y: &str) -> PyResult<Vec<String>> {
        Ok(self.dag.enumerate_paths(x, y).map_err(value_err)?.iter().map(ToString::to_string).collect())
    }

    fn backdoor_paths(&self, x: &str, y: &str) -> PyResult<Vec<String>> {
        Ok(self.dag.backdoor_paths(x, y).map_err(value_err)?.iter().map(ToString::to_string).collect())
    }

    fn backdoor_sets(&self, x: &str, y: &str) -> PyResult<Vec<Vec<String>>> {
        self.dag.backdoor_sets(x, y).map_err(value_err)
    }

    fn satisfies_backdoor(&self, x: &str, y: &str, z: Vec<String>) -> PyResult<bool> {
        self.dag.satisfies_backdoor(x, y, &z).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Dag(nodes={}, edges={})", self.dag.len(), self.dag.edges().len())
    }
}

/// A discrete SCM with its optional conditioning context.
#[pyclass(name = "Scm", frozen)]
struct PyScm {
    file: ScmFile,
}

fn scm_err(e: scm::ScmError) -> PyErr {
    match e {
        scm::ScmError::DomainTooLarge { .. } | scm::ScmError::PositivityViolation(_) | scm::ScmError::ZeroConditioningEvent => {
            runtime_err(e)
        }
        _ => value_err(e),
    }
}

impl PyScm {
    fn joint(&self) -> PyResult<scm::JointTable> {
        let jt = self.file.scm.joint().map_err(scm_err)?;
        if self.file.given.is_empty() {
            Ok(jt)
        } else {
            jt.condition(&self.file.given).map_err(scm_err)
        }
    }

    fn event(&self, text: &str) -> PyResult<Assignment> {
        self.file.scm.joint().map_err(scm_err)?.parse_assignment(text).map_err(scm_err)
    }
}

#[pymethods]
impl PyScm {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(PyScm { file: parse_scm(text).map_err(scm_err)? })
    }

    /// One of the shipped models.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        fixtures::by_name(name)
            .map(|file| PyScm { file })
            .ok_or_else(|| PyValueError::new_err(format!("unknown fixture `{name}`")))
    }

    #[staticmethod]
    fn fixture_names() -> Vec<&'static str> {
        fixtures::ALL.iter().map(|(n, _)| *n).collect()
    }

    fn dag(&self) -> PyDag {
        PyDag { dag: self.file.scm.graph().clone() }
    }

    /// `P(event | given)` under the file's conditioning context.
    #[pyo3(signature = (event, given = ""))]
    fn probability(&self, event: &str, given: &str) -> PyResult<f64> {
        let jt = self.joint()?;
        jt.query(&self.event(event)?, &self.event(given)?).map_err(scm_err)
    }

    /// `P(event | do(intervention))`, e.g. `interventional("Y=1", "C=1")`.
    fn interventional(&self, event: &str, intervention: &str) -> PyResult<f64> {
        let ivs: Vec<Intervention> =
            self.event(intervention)?.pairs().iter().map(|(k, v)| Intervention::new(k, *v)).collect();
        let mut m = self.file.scm.clone();
        for iv in &ivs {
            m = m.intervene(iv).map_err(scm_err)?;
        }
        let jt = m.joint().map_err(scm_err)?;
        jt.query(&self.event(event)?, &self.file.given).map_err(scm_err)
    }

    /// Backdoor adjustment of `outcome` on `treatment` over `z`.
    fn adjust(&self, treatment: &str, outcome: &str, z: Vec<String>) -> PyResult<f64> {
        let jt = self.joint()?;
        scm::adjustment_estimate(&jt, &self.event(treatment)?, &self.event(outcome)?, &z).map_err(scm_err)
    }

    fn check_statistical(&self, x: &str, y: &str, t1: Vec<String>, t2: Vec<String>) -> PyResult<bool> {
        let jt = self.joint()?;
        scm::check_nonconfounding_statistical(&jt, self.file.scm.graph(), x, y, &t1, &t2).map_err(scm_err)
    }

    fn check_causal(&self, x: &str, y: &str) -> PyResult<bool> {
        scm::check_nonconfounding_causal(&self.file.scm, x, y).map_err(scm_err)
    }

    /// `(z1, s1, z2, s2)` or `None`.
    fn witness(&self, s: &str, y: &str) -> PyResult<Option<(String, Vec<String>, String, Vec<String>)>> {
        let jt = self.joint()?;
        let w = scm::spurious_correlation_witness(&jt, self.file.scm.graph(), s, y).map_err(scm_err)?;
        Ok(w.map(|w| (w.z1, w.s1, w.z2, w.s2)))
    }

    /// `(set, satisfies_backdoor, max_gap)` for every candidate adjustment set.
    fn adjustment_gaps(&self, x: &str, y: &str) -> PyResult<Vec<(Vec<String>, bool, f64)>> {
        let gaps = scm::adjustment_gaps(&self.file.scm, &self.file.given, x, y).map_err(scm_err)?;
        Ok(gaps.into_iter().map(|g| (g.set, g.backdoor, g.max_gap)).collect())
    }
}

fn bound_input(risk: f64, omega: f64, hypotheses: usize, delta: f64, propensities: Vec<f64>) -> BoundInput {
    BoundInput { empirical_risk: risk, omega, hypothesis_count: hypotheses, confidence_delta: delta, propensities }
}

/// Slack term of the weighted-risk bound.
#[pyfunction]
fn slack(omega: f64, hypotheses: usize, delta: f64, propensities: Vec<f64>) -> PyResult<f64> {
    bounds::slack(&bound_input(0.0, omega, hypotheses, delta, propensities)).map_err(value_err)
}

#[pyfunction]
fn psw_bound(risk: f64, omega: f64, hypotheses: usize, delta: f64, propensities: Vec<f64>) -> PyResult<f64> {
    bounds::psw_bound(&bound_input(risk, omega, hypotheses, delta, propensities)).map_err(value_err)
}

/// Coverage of the bound on the tabular scenario: `(fraction, slack)`.
#[pyfunction]
#[pyo3(signature = (trials = 200, delta = 0.05, bias = 0.9, noise = 0.25, n = 1000, floor = 0.05, seed = 0, tight = false))]
#[allow(clippy::too_many_arguments)]
fn coverage(trials: usize, delta: f64, bias: f64, noise: f64, n: usize, floor: f64, seed: u64, tight: bool) -> PyResult<(f64, f64)> {
    let pop = TabularScenario { n, bias, noise, floor, seed }.population().map_err(value_err)?;
    let c = bounds::coverage_experiment(&pop, trials, delta, tight, seed).map_err(value_err)?;
    Ok((c.fraction(), c.slack))
}

/// Lloyd's k-means: `(assignments, centroids, inertia)`.
#[pyfunction]
#[pyo3(signature = (rows, k, seed = 0, max_iters = 100))]
fn kmeans(rows: Vec<Vec<f64>>, k: usize, seed: u64, max_iters: usize) -> PyResult<(Vec<usize>, Vec<Vec<f64>>, f64)> {
    let fs = FeatureSet::from_rows(&rows, FeatureOrigin::Invariant).map_err(value_err)?;
    let c = propensity::kmeans(&fs, k, seed, max_iters).map_err(value_err)?;
    let centroids = c.centroids().rows().into_iter().map(|r| r.to_vec()).collect();
    Ok((c.assignments().to_vec(), centroids, c.inertia()))
}

/// Clipped `P(C = k | S = l)` as an `m x n` nested list.
#[pyfunction]
#[pyo3(signature = (c, s, m, n, floor = 0.05))]
fn build_table(c: Vec<usize>, s: Vec<usize>, m: usize, n: usize, floor: f64) -> PyResult<Vec<Vec<f64>>> {
    let cc = Clustering::from_assignments(m, c).map_err(value_err)?;
    let sc = Clustering::from_assignments(n, s).map_err(value_err)?;
    let t = propensity::build_table(&cc, &sc, floor).map_err(value_err)?;
    Ok((0..m).map(|k| (0..n).map(|l| t.get(k, l)).collect()).collect())
}

/// Writes domains and a manifest into `out`; returns `{name: sha256}`.
#[pyfunction]
#[pyo3(signature = (out, size = 5000, noise = 0.25, biases = None, names = None, seed = 0))]
fn generate_data(
    out: PathBuf,
    size: usize,
    noise: f64,
    biases: Option<Vec<f64>>,
    names: Option<Vec<String>>,
    seed: u64,
) -> PyResult<BTreeMap<String, String>> {
    let mut spec = GenSpec { size, noise, seed, ..GenSpec::default() };
    if let Some(b) = biases {
        spec.biases = b;
        spec.names = names.unwrap_or_default();
    } else if let Some(n) = names {
        spec.names = n;
    }
    let data = generate(&spec).map_err(value_err)?;
    let m = write_domains(&out, &spec, &data).map_err(runtime_err)?;
    Ok(m.domains.into_iter().map(|d| (d.name, d.sha256)).collect())
}

/// Trains on a generated corpus and returns final held-out accuracy per domain.
#[pyfunction]
#[pyo3(signature = (data, alpha = 0.0, beta = 0.0, epochs = 20, hidden = None, seed = 0, held_out = None, out = None))]
#[allow(clippy::too_many_arguments)]
fn train(
    data: PathBuf,
    alpha: f64,
    beta: f64,
    epochs: usize,
    hidden: Option<Vec<usize>>,
    seed: u64,
    held_out: Option<Vec<String>>,
    out: Option<PathBuf>,
) -> PyResult<BTreeMap<String, f64>> {
    let mut cfg = ExperimentConfig { seed, held_out: held_out.unwrap_or_default(), ..ExperimentConfig::default() };
    cfg.train.alpha = alpha;
    cfg.train.beta = beta;
    cfg.train.epochs = epochs;
    if let Some(h) = hidden {
        cfg.train.hidden = h;
    }
    cfg.normalize().map_err(value_err)?;
    let err = |e: experiment::ExperimentError| if e.is_usage() { value_err(e) } else { runtime_err(e) };
    let corpus = Corpus::load(&data).map_err(err)?;
    let split = corpus.split(&cfg.held_out).map_err(err)?;
    let (summary, result) = experiment::run(&cfg, &corpus, &split).map_err(err)?;
    if let Some(dir) = out {
        experiment::write_run(&dir, &cfg, &summary, &result).map_err(err)?;
    }
    Ok(summary.test_accuracy)
}

#[pymodule]
fn cpsw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDag>()?;
    m.add_class::<PyScm>()?;
    m.add_function(wrap_pyfunction!(slack, m)?)?;
    m.add_function(wrap_pyfunction!(psw_bound, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(build_table, m)?)?;
    m.add_function(wrap_pyfunction!(generate_data, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
