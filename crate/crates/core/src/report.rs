//! Run summaries and the per-domain accuracy tables built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("no runs found under {}", .0.display())]
    NoRuns(PathBuf),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ReportError>;

pub const SUMMARY_FILE: &str = "run.json";

/// What a finished training run leaves behind in `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    /// Every domain of the corpus, in manifest order.
    #[serde(default)]
    pub domains: Vec<String>,
    pub train_domains: Vec<String>,
    pub held_out: Vec<String>,
    /// Final-epoch accuracy per held-out domain.
    pub test_accuracy: BTreeMap<String, f64>,
    pub train_accuracy: BTreeMap<String, f64>,
}

impl RunSummary {
    pub fn mean_test_accuracy(&self) -> f64 {
        self.test_accuracy.values().sum::<f64>() / self.test_accuracy.len().max(1) as f64
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(SUMMARY_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|source| ReportError::Json { path: path.clone(), source })?;
        std::fs::write(&path, text).map_err(|source| ReportError::Io { path, source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_str(&text).map_err(|source| ReportError::Json { path: path.to_path_buf(), source })
    }
}

/// Every `run.json` below `root`, in path order.
pub fn collect_runs(root: &Path) -> Result<Vec<(PathBuf, RunSummary)>> {
    if !root.is_dir() {
        return Err(ReportError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|source| ReportError::Io { path: dir.clone(), source })?;
        for entry in entries {
            let path = entry.map_err(|source| ReportError::Io { path: dir.clone(), source })?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == SUMMARY_FILE) {
                found.push(path);
            }
        }
    }
    found.sort();
    found.into_iter().map(|p| RunSummary::load(&p).map(|s| (p, s))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl Cell {
    fn of(values: &[f64]) -> Option<Cell> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Some(Cell { mean, std: var.sqrt(), runs: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub cells: Vec<Option<Cell>>,
    /// Mean over domains, present only when every domain has a value.
    pub avg: Option<f64>,
}

/// Rows are variants, columns held-out domains, cells held-out accuracy
/// aggregated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub domains: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    /// Domain columns follow `order`, then each run's corpus order, then
    /// first appearance.
    pub fn build(runs: &[RunSummary], order: &[String]) -> ReportTable {
        let mut domains: Vec<String> = order.to_vec();
        for d in runs.iter().flat_map(|r| &r.domains) {
            if !domains.contains(d) {
                domains.push(d.clone());
            }
        }
        let mut labels: Vec<String> = Vec::new();
        for r in runs {
            for d in r.test_accuracy.keys() {
                if !domains.contains(d) {
                    domains.push(d.clone());
                }
            }
            if !labels.contains(&r.label) {
                labels.push(r.label.clone());
            }
        }
        let used: Vec<String> = domains.into_iter().filter(|d| runs.iter().any(|r| r.test_accuracy.contains_key(d))).collect();
        let rows = labels
            .into_iter()
            .map(|label| {
                let cells: Vec<Option<Cell>> = used
                    .iter()
                    .map(|d| {
                        let v: Vec<f64> = runs.iter().filter(|r| r.label == label).filter_map(|r| r.test_accuracy.get(d)).copied().collect();
                        Cell::of(&v)
                    })
                    .collect();
                let avg = cells.iter().map(|c| c.map(|c| c.mean)).sum::<Option<f64>>().map(|s| s / cells.len() as f64);
                ReportRow { label, cells, avg }
            })
            .collect();
        ReportTable { domains: used, rows }
    }

    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Plain-text table with percentages.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max("Algorithm".len());
        let mut out = format!("{:width$}", "Algorithm");
        for d in &self.domains {
            let _ = write!(out, " | {d:>13}");
        }
        out.push_str(" |   Avg\n");
        for r in &self.rows {
            let _ = write!(out, "{:width$}", r.label);
            for c in &r.cells {
                match c {
                    Some(c) => {
                        let _ = write!(out, " | {:>6.1} ± {:>4.1}", 100.0 * c.mean, 100.0 * c.std);
                    }
                    None => out.push_str(" |             -"),
                }
            }
            match r.avg {
                Some(a) => {
                    let _ = writeln!(out, " | {:>5.1}", 100.0 * a);
                }
                None => out.push_str(" |     -\n"),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub accuracy: f64,
}

/// Heat-map rows `alpha,beta,seed,accuracy`.
pub fn write_sweep_csv<W: Write>(w: W, cells: &[SweepCell]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for c in cells {
        out.serialize(c)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
