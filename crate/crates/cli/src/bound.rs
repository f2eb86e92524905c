use std::path::PathBuf;

use clap::Args;
use cpsw_core::bounds::{
    coverage_experiment, psw_bound, slack, unbiasedness, write_coverage_csv, BoundInput, TabularScenario,
};
use cpsw_core::config;
use cpsw_core::propensity::read_propensity_csv;

use crate::{CliError, Global, Result};

#[derive(Args)]
pub struct BoundArgs {
    /// Propensity CSV as written by `train` (`sample_id,c_cluster,s_cluster,pi`).
    #[arg(long, conflicts_with = "coverage", requires = "risk")]
    propensity: Option<PathBuf>,
    /// Empirical weighted risk of the chosen hypothesis.
    #[arg(long)]
    risk: Option<f64>,
    /// Loss ceiling.
    #[arg(long, default_value_t = 10.0)]
    omega: f64,
    /// Effective hypothesis-class size.
    #[arg(long, default_value_t = 16)]
    hypotheses: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Run the coverage experiment on the tabular scenario instead.
    #[arg(long)]
    coverage: bool,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Per-point Hoeffding ranges from the selected hypothesis's losses.
    #[arg(long)]
    tight: bool,
    /// Also check the mean weighted risk of every hypothesis over this many draws.
    #[arg(long)]
    unbiasedness: Option<usize>,
    /// Coverage CSV [default: coverage.csv].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    /// P(C = S) in the scenario.
    #[arg(long)]
    bias: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    floor: Option<f64>,
}

pub fn run(g: &Global, a: BoundArgs) -> Result<()> {
    if let Some(path) = &a.propensity {
        let path = g.input(path);
        let file = std::fs::File::open(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let rows = read_propensity_csv(file)?;
        let b = BoundInput {
            empirical_risk: a.risk.expect("required by clap"),
            omega: a.omega,
            hypothesis_count: a.hypotheses,
            confidence_delta: a.delta,
            propensities: rows.iter().map(|r| r.pi).collect(),
        };
        let s = slack(&b)?;
        println!("n {}  omega {}  |H| {}  delta {}", b.n(), b.omega, b.hypothesis_count, b.confidence_delta);
        println!("slack {s:.12}");
        println!("bound {:.12}", psw_bound(&b)?);
        return Ok(());
    }
    if !a.coverage {
        return Err(CliError::usage("give --propensity FILE --risk R, or --coverage"));
    }

    let mut sc: TabularScenario = match &g.config {
        Some(p) => config::load(p)?,
        None => TabularScenario::default(),
    };
    if let Some(s) = g.seed {
        sc.seed = s;
    }
    sc.n = a.n.unwrap_or(sc.n);
    sc.bias = a.bias.unwrap_or(sc.bias);
    sc.noise = a.noise.unwrap_or(sc.noise);
    sc.floor = a.floor.unwrap_or(sc.floor);
    let pop = sc.population()?;
    let cov = coverage_experiment(&pop, a.trials, a.delta, a.tight, sc.seed)?;
    let covered = cov.rows.iter().filter(|r| r.covered).count();
    println!(
        "scenario n {} bias {} noise {} floor {}  |H| {}  delta {}",
        sc.n,
        sc.bias,
        sc.noise,
        sc.floor,
        pop.hypotheses(),
        a.delta
    );
    let mean_gap = cov.rows.iter().map(|r| r.bound - r.empirical_risk).sum::<f64>() / cov.rows.len() as f64;
    println!("slack {:.6} (mean bound - risk {mean_gap:.6}{})", cov.slack, if a.tight { ", tight" } else { "" });
    println!("coverage {covered}/{} = {:.4}", cov.rows.len(), cov.fraction());
    if let Some(trials) = a.unbiasedness {
        for h in 0..pop.hypotheses() {
            let m = unbiasedness(&pop, h, trials, sc.seed)?;
            println!("h{h:<2} mean {:.6} exact {:.6} se {:.6} z {:.2}", m.mean, m.exact, m.std_err, m.z());
        }
    }
    let out = g.output(&a.out.unwrap_or_else(|| "coverage.csv".into()));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = std::fs::File::create(&out).map_err(|e| CliError::io(&out, e))?;
    write_coverage_csv(file, &cov.rows)?;
    println!("wrote {}", out.display());
    Ok(())
}
