//! Running configured experiments and writing their artifacts.

use std::path::{Path, PathBuf};

use crate::config::{variant_label, ConfigError, ExperimentConfig, SweepGrid};
use crate::datasets::{default_split, load_manifest, split_domains, DatasetError, DomainDataset, Split};
use crate::learner::{save_checkpoint, train, write_metrics_csv, LearnerError, TrainResult};
use crate::propensity::write_propensity_csv;
use crate::report::{ReportError, RunSummary, SweepCell};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
}

impl ExperimentError {
    /// Errors caused by the user's input rather than by the computation.
    pub fn is_usage(&self) -> bool {
        match self {
            ExperimentError::Config(_) | ExperimentError::UnknownDomain(_) => true,
            ExperimentError::Dataset(e) => matches!(
                e,
                DatasetError::InvalidSpec { .. }
                    | DatasetError::FileNotFound(_)
                    | DatasetError::InvalidSplit(_)
                    | DatasetError::Manifest(_)
            ),
            ExperimentError::Learner(e) => matches!(e, LearnerError::ConfigInvalid(_)),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Loaded domains with their names in manifest order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub datasets: Vec<DomainDataset>,
}

impl Corpus {
    pub fn load(dir: &Path) -> Result<Self> {
        let (_, datasets) = load_manifest(dir)?;
        Ok(Corpus { datasets })
    }

    pub fn names(&self) -> Vec<String> {
        self.datasets.iter().map(|d| d.name.clone()).collect()
    }

    /// Named held-out domains, or the default protocol when `held_out` is empty.
    pub fn split(&self, held_out: &[String]) -> Result<Split> {
        let names = self.names();
        if held_out.is_empty() {
            return Ok(default_split(&names)?);
        }
        let idx = held_out
            .iter()
            .map(|h| names.iter().position(|n| n == h).ok_or_else(|| ExperimentError::UnknownDomain(h.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(split_domains(names.len(), &idx)?)
    }
}

/// Trains one configuration and summarises it.
pub fn run(cfg: &ExperimentConfig, corpus: &Corpus, split: &Split) -> Result<(RunSummary, TrainResult)> {
    let train_sets: Vec<&DomainDataset> = split.train.iter().map(|&d| &corpus.datasets[d]).collect();
    let test_sets: Vec<&DomainDataset> = split.test.iter().map(|&d| &corpus.datasets[d]).collect();
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    let result = train(&tc, &train_sets, &test_sets)?;
    let acc = |sets: &[&DomainDataset]| {
        sets.iter().filter_map(|d| result.final_accuracy(&d.name).map(|a| (d.name.clone(), a))).collect()
    };
    let summary = RunSummary {
        label: cfg.label(),
        alpha: tc.alpha,
        beta: tc.beta,
        seed: cfg.seed,
        domains: corpus.names(),
        train_domains: train_sets.iter().map(|d| d.name.clone()).collect(),
        held_out: test_sets.iter().map(|d| d.name.clone()).collect(),
        test_accuracy: acc(&test_sets),
        train_accuracy: acc(&train_sets),
    };
    Ok((summary, result))
}

/// `metrics.csv`, `checkpoint.bin`, `propensity_<k>.csv`, `config.json`, `run.json`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, summary: &RunSummary, result: &TrainResult) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let metrics = dir.join("metrics.csv");
    write_metrics_csv(std::fs::File::create(&metrics).map_err(io(&metrics))?, &result.history)?;
    save_checkpoint(&dir.join("checkpoint.bin"), &result.params)?;
    for (k, p) in result.propensity.iter().enumerate() {
        let path = dir.join(format!("propensity_{k}.csv"));
        let file = std::fs::File::create(&path).map_err(io(&path))?;
        write_propensity_csv(file, &p.rows).map_err(LearnerError::from)?;
    }
    let cfg_path = dir.join("config.json");
    let text = serde_json::to_string_pretty(cfg).expect("config serialises");
    std::fs::write(&cfg_path, text).map_err(io(&cfg_path))?;
    summary.save(dir)?;
    Ok(())
}

fn with_weights(base: &ExperimentConfig, alpha: f64, beta: f64, seed: u64) -> ExperimentConfig {
    let mut c = base.clone();
    c.seed = seed;
    c.train.seed = seed;
    c.train.alpha = alpha;
    c.train.beta = beta;
    c.label = Some(variant_label(alpha, beta).to_string());
    c
}

/// Grid results plus the comparison runs at the selected point.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub grid: Vec<SweepCell>,
    pub best: (f64, f64),
    pub runs: Vec<RunSummary>,
}

impl Protocol {
    /// Held-out accuracies of one variant, in seed order.
    pub fn accuracies(&self, label: &str) -> Vec<f64> {
        self.runs.iter().filter(|r| r.label == label).map(|r| r.mean_test_accuracy()).collect()
    }
}

/// Sweeps `grid` on its first seed, keeps the point with the best held-out
/// accuracy (first on ties), then trains ERM, the full objective and both
/// ablations on every seed. `visit` sees each finished run with its config.
pub fn select_and_compare<F>(base: &ExperimentConfig, corpus: &Corpus, split: &Split, grid: &SweepGrid, mut visit: F) -> Result<Protocol>
where
    F: FnMut(&ExperimentConfig, &RunSummary, &TrainResult) -> Result<()>,
{
    let seeds = if grid.seeds.is_empty() { vec![base.seed] } else { grid.seeds.clone() };
    let points = grid.points();
    if points.is_empty() {
        return Err(ConfigError::Invalid("empty sweep grid".into()).into());
    }
    let mut cells = Vec::new();
    let mut grid_runs = Vec::new();
    for &(a, b) in &points {
        let cfg = with_weights(base, a, b, seeds[0]);
        let (summary, result) = run(&cfg, corpus, split)?;
        visit(&cfg, &summary, &result)?;
        cells.push(SweepCell { alpha: a, beta: b, seed: seeds[0], accuracy: summary.mean_test_accuracy() });
        grid_runs.push(summary);
    }
    let best_idx = (0..cells.len()).fold(0, |best, i| if cells[i].accuracy > cells[best].accuracy { i } else { best });
    let (alpha, beta) = points[best_idx];
    let mut runs = Vec::new();
    for (k, &seed) in seeds.iter().enumerate() {
        let variants = [(0.0, 0.0), (alpha, beta), (0.0, beta), (alpha, 0.0)];
        for (a, b) in variants {
            if k == 0 && (a, b) == (alpha, beta) {
                runs.push(grid_runs[best_idx].clone());
                continue;
            }
            let cfg = with_weights(base, a, b, seed);
            let (summary, result) = run(&cfg, corpus, split)?;
            visit(&cfg, &summary, &result)?;
            runs.push(summary);
        }
    }
    Ok(Protocol { grid: cells, best: (alpha, beta), runs })
}
