//! Experiment configuration files: TOML, or JSON when the extension is `.json`.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::learner::TrainConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Reads any deserialisable config from TOML or JSON.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse(&text, path)
}

/// Parses `text`; `path` picks the format and labels errors.
pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| ConfigError::Parse { path: path.to_path_buf(), message })
}

pub const DEFAULT_ALPHAS: [f64; 3] = [1.0, 0.1, 0.01];
pub const DEFAULT_BETAS: [f64; 4] = [1.0, 0.1, 0.01, 0.001];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Seeds for the final comparison once the grid point is chosen.
    pub seeds: Vec<u64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid { alphas: DEFAULT_ALPHAS.to_vec(), betas: DEFAULT_BETAS.to_vec(), seeds: (0..5).collect() }
    }
}

impl SweepGrid {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.alphas.iter().flat_map(|&a| self.betas.iter().map(move |&b| (a, b))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Single source of randomness; copied into `train.seed`.
    pub seed: u64,
    /// Dataset directory holding `manifest.json`.
    pub data: Option<PathBuf>,
    /// Run directory, relative paths resolved against the output root.
    pub output: Option<PathBuf>,
    /// Held-out domain names; empty selects the default split.
    pub held_out: Vec<String>,
    /// Row label in reports; derived from alpha and beta when absent.
    pub label: Option<String>,
    pub train: TrainConfig,
    pub sweep: SweepGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            data: None,
            output: None,
            held_out: Vec::new(),
            label: None,
            train: TrainConfig::default(),
            sweep: SweepGrid::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = load(path)?;
        cfg.normalize()?;
        Ok(cfg)
    }

    /// Propagates the seed and checks ranges.
    pub fn normalize(&mut self) -> Result<()> {
        self.train.seed = self.seed;
        self.train.validate(2).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let grid = self.sweep.alphas.iter().chain(&self.sweep.betas);
        if let Some(v) = grid.into_iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(ConfigError::Invalid(format!("sweep values must be non-negative, got {v}")));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| variant_label(self.train.alpha, self.train.beta).to_string())
    }
}

/// Report row name of an objective.
pub fn variant_label(alpha: f64, beta: f64) -> &'static str {
    match (alpha > 0.0, beta > 0.0) {
        (false, false) => "ERM",
        (true, true) => "Ours",
        (false, true) => "Ours w/o L_PSW",
        (true, false) => "Ours w/o L_PS",
    }
}
