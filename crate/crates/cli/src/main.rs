//! `cpsw`: dataset generation, training, causal queries and bounds.

mod bound;
mod causal;
mod data;
mod error;
mod runs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use error::{CliError, Result};

/// Relative output paths are resolved against this directory when set.
pub const OUTPUT_ROOT_ENV: &str = "CPSW_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "cpsw", version, about = "Causal analysis and propensity-weighted training for spurious correlations")]
struct Cli {
    /// Seed overriding the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config file: TOML, or JSON when the extension is `.json`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root for relative output paths.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate biased coloured-digit domains.
    GenerateData(data::GenerateArgs),
    /// Train one configuration.
    Train(runs::TrainArgs),
    /// Train over an (alpha, beta) grid.
    Sweep(runs::SweepArgs),
    /// Paths, d-separation and backdoor queries on a DAG or SCM file.
    AnalyzeGraph(causal::GraphArgs),
    /// Exact probability queries and confounding checks on an SCM file.
    Scm(causal::ScmArgs),
    /// Generalisation bound from propensities, or a coverage experiment.
    Bound(bound::BoundArgs),
    /// Per-domain accuracy table over finished runs.
    Report(runs::ReportArgs),
    /// Per-sample propensities of a trained model on a random batch.
    Casestudy(runs::CaseArgs),
}

/// Flags shared by every subcommand.
pub struct Global {
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub root: Option<PathBuf>,
}

impl Global {
    /// Where an output should be written.
    pub fn output(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Inputs are taken as given, falling back to the output root so that
    /// artifacts of earlier subcommands are found by their relative names.
    pub fn input(&self, p: &Path) -> PathBuf {
        match &self.root {
            Some(root) if p.is_relative() && !p.exists() && root.join(p).exists() => root.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = Global { seed: cli.seed, config: cli.config, root: cli.output_root };
    let outcome = match cli.command {
        Command::GenerateData(a) => data::run(&g, a),
        Command::Train(a) => runs::train(&g, a),
        Command::Sweep(a) => runs::sweep(&g, a),
        Command::AnalyzeGraph(a) => causal::analyze_graph(&g, a),
        Command::Scm(a) => causal::scm(&g, a),
        Command::Bound(a) => bound::run(&g, a),
        Command::Report(a) => runs::report(&g, a),
        Command::Casestudy(a) => runs::casestudy(&g, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
