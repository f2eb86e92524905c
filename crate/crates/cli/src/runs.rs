use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use cpsw_core::config::{self, variant_label, ExperimentConfig, SweepGrid};
use cpsw_core::datasets::DomainDataset;
use cpsw_core::experiment::{self, select_and_compare, write_run, Corpus};
use cpsw_core::learner::{estimate_propensity, load_checkpoint, TrainResult};
use cpsw_core::report::{collect_runs, write_sweep_csv, ReportTable, RunSummary, SweepCell};
use cpsw_core::seeds::substream;
use cpsw_core::spectral::MaskScheme;
use rand::seq::index::sample;
use serde::Serialize;

use crate::{CliError, Global, Result};

/// Overrides for the experiment config, shared by the training commands.
#[derive(Args)]
pub struct Overrides {
    /// Dataset directory holding `manifest.json` [default: data].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Held-out domain names, comma separated [default: -90%, else the last].
    #[arg(long, value_delimiter = ',')]
    held_out: Option<Vec<String>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Spectral filter size.
    #[arg(long)]
    filter_size: Option<usize>,
    /// Upper end of the mixing-ratio range.
    #[arg(long)]
    delta: Option<f64>,
    /// Number of spurious-feature clusters.
    #[arg(long)]
    clusters: Option<usize>,
    /// Propensity floor.
    #[arg(long)]
    floor: Option<f64>,
    /// Recluster every this many epochs.
    #[arg(long)]
    refresh: Option<usize>,
    /// Row label in reports.
    #[arg(long)]
    label: Option<String>,
    /// High band is the exact complement of the low-pass cross.
    #[arg(long)]
    complement_masks: bool,
    /// Weights 1/pi rescaled to mean one in each batch.
    #[arg(long)]
    self_normalize: bool,
    /// Keep the classifier head out of the L_ps update.
    #[arg(long)]
    freeze_head: bool,
}

fn load_config(g: &Global, o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => config::load(&g.input(p))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(v) = &o.data {
        cfg.data = Some(v.clone());
    }
    if let Some(v) = &o.out {
        cfg.output = Some(v.clone());
    }
    if let Some(v) = &o.held_out {
        cfg.held_out = v.clone();
    }
    if let Some(v) = &o.label {
        cfg.label = Some(v.clone());
    }
    let t = &mut cfg.train;
    t.alpha = o.alpha.unwrap_or(t.alpha);
    t.beta = o.beta.unwrap_or(t.beta);
    t.epochs = o.epochs.unwrap_or(t.epochs);
    t.step = o.step.unwrap_or(t.step);
    t.batch_size = o.batch_size.unwrap_or(t.batch_size);
    t.delta = o.delta.unwrap_or(t.delta);
    t.spurious_clusters = o.clusters.unwrap_or(t.spurious_clusters);
    t.floor = o.floor.unwrap_or(t.floor);
    t.refresh = o.refresh.unwrap_or(t.refresh);
    if let Some(v) = &o.hidden {
        t.hidden = v.clone();
    }
    if o.filter_size.is_some() {
        t.filter_size = o.filter_size;
    }
    if o.complement_masks {
        t.mask_scheme = MaskScheme::CrossComplement;
    }
    t.self_normalize |= o.self_normalize;
    t.freeze_head |= o.freeze_head;
    cfg.normalize()?;
    Ok(cfg)
}

/// Loads the corpus and pins `cfg.data` to its absolute location so that
/// the saved config can be replayed from anywhere.
fn load_corpus(g: &Global, cfg: &mut ExperimentConfig) -> Result<Corpus> {
    let dir = g.input(cfg.data.as_deref().unwrap_or(Path::new("data")));
    let corpus = Corpus::load(&dir)?;
    cfg.data = Some(std::path::absolute(&dir).unwrap_or(dir));
    Ok(corpus)
}

fn slug(label: &str) -> String {
    let s: String = label.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' }).collect();
    s.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-")
}

fn print_run(summary: &RunSummary, result: &TrainResult, dir: &Path) {
    let last = result.history.iter().map(|r| r.epoch).max().unwrap_or(0);
    for r in result.history.iter().filter(|r| r.epoch == last) {
        let role = if summary.held_out.contains(&r.domain) { "test" } else { "train" };
        println!("{:<5} {:>6}  acc {:.4}  loss {:.4}", role, r.domain, r.accuracy, r.base_loss);
    }
    println!("{} (alpha {}, beta {}, seed {}) -> {}", summary.label, summary.alpha, summary.beta, summary.seed, dir.display());
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    o: Overrides,
}

pub fn train(g: &Global, a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(g, &a.o)?;
    let corpus = load_corpus(g, &mut cfg)?;
    let split = corpus.split(&cfg.held_out)?;
    let (summary, result) = experiment::run(&cfg, &corpus, &split)?;
    let default = PathBuf::from("runs").join(format!("{}-s{}", slug(&summary.label), cfg.seed));
    let dir = g.output(cfg.output.as_deref().unwrap_or(&default));
    write_run(&dir, &cfg, &summary, &result)?;
    print_run(&summary, &result, &dir);
    Ok(())
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    o: Overrides,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Pick the grid point on the first seed, then train ERM, the full
    /// objective and both ablations on every seed.
    #[arg(long)]
    ablations: bool,
}

fn grid_name(alpha: f64, beta: f64, seed: u64) -> String {
    format!("a{alpha}-b{beta}-s{seed}")
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    std::fs::create_dir_all(to).map_err(|e| CliError::io(to, e))?;
    for entry in std::fs::read_dir(from).map_err(|e| CliError::io(from, e))? {
        let path = entry.map_err(|e| CliError::io(from, e))?.path();
        if path.is_file() {
            let dest = to.join(path.file_name().expect("file name"));
            std::fs::copy(&path, &dest).map_err(|e| CliError::io(&dest, e))?;
        }
    }
    Ok(())
}

fn write_csv_file(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_sweep_csv(file, cells)?;
    Ok(())
}

fn print_heatmap(cells: &[SweepCell], grid: &SweepGrid) {
    print!("{:>8}", "a \\ b");
    for b in &grid.betas {
        print!(" {b:>8}");
    }
    println!();
    for a in &grid.alphas {
        print!("{a:>8}");
        for b in &grid.betas {
            let v: Vec<f64> = cells.iter().filter(|c| c.alpha == *a && c.beta == *b).map(|c| c.accuracy).collect();
            print!(" {:>8.4}", v.iter().sum::<f64>() / v.len().max(1) as f64);
        }
        println!();
    }
}

pub fn sweep(g: &Global, a: SweepArgs) -> Result<()> {
    let mut cfg = load_config(g, &a.o)?;
    let corpus = load_corpus(g, &mut cfg)?;
    let split = corpus.split(&cfg.held_out)?;
    let mut grid = cfg.sweep.clone();
    grid.alphas = a.alphas.unwrap_or(grid.alphas);
    grid.betas = a.betas.unwrap_or(grid.betas);
    if let Some(s) = a.seeds {
        grid.seeds = s;
    } else if !a.ablations || g.seed.is_some() {
        grid.seeds = vec![cfg.seed];
    }
    if grid.alphas.iter().chain(&grid.betas).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(CliError::usage("sweep values must be non-negative"));
    }
    let out = g.output(cfg.output.as_deref().unwrap_or(Path::new("sweep")));

    if !a.ablations {
        let mut cells = Vec::new();
        for &seed in &grid.seeds {
            for (alpha, beta) in grid.points() {
                let mut c = cfg.clone();
                c.seed = seed;
                c.train.alpha = alpha;
                c.train.beta = beta;
                c.normalize()?;
                let (summary, result) = experiment::run(&c, &corpus, &split)?;
                let dir = out.join(grid_name(alpha, beta, seed));
                write_run(&dir, &c, &summary, &result)?;
                println!("{}  held-out {:.4}", grid_name(alpha, beta, seed), summary.mean_test_accuracy());
                cells.push(SweepCell { alpha, beta, seed, accuracy: summary.mean_test_accuracy() });
            }
        }
        write_csv_file(&out.join("sweep.csv"), &cells)?;
        print_heatmap(&cells, &grid);
        println!("{} run(s) -> {}", cells.len(), out.display());
        return Ok(());
    }

    let n_grid = grid.points().len();
    let mut visited = 0usize;
    let protocol = select_and_compare(&cfg, &corpus, &split, &grid, |c, summary, result| {
        let dir = if visited < n_grid {
            out.join("grid").join(grid_name(c.train.alpha, c.train.beta, c.seed))
        } else {
            out.join("compare").join(format!("{}-s{}", slug(&summary.label), c.seed))
        };
        visited += 1;
        write_run(&dir, c, summary, result)?;
        println!("{:<16} {}  held-out {:.4}", summary.label, grid_name(c.train.alpha, c.train.beta, c.seed), summary.mean_test_accuracy());
        Ok(())
    })?;
    let (alpha, beta) = protocol.best;
    let first = grid.seeds.first().copied().unwrap_or(cfg.seed);
    copy_dir(
        &out.join("grid").join(grid_name(alpha, beta, first)),
        &out.join("compare").join(format!("{}-s{first}", slug(variant_label(alpha, beta)))),
    )?;
    write_csv_file(&out.join("sweep.csv"), &protocol.grid)?;
    print_heatmap(&protocol.grid, &SweepGrid { seeds: vec![first], ..grid.clone() });
    println!("selected alpha {alpha}, beta {beta}");
    let table = ReportTable::build(&protocol.runs, &corpus.names()).render();
    print!("{table}");
    let path = out.join("report.txt");
    std::fs::write(&path, table).map_err(|e| CliError::io(&path, e))?;
    Ok(())
}

#[derive(Args)]
pub struct ReportArgs {
    /// Directory searched recursively for `run.json`.
    dir: PathBuf,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct ReportCsvRow<'a> {
    label: &'a str,
    domain: &'a str,
    mean: f64,
    std: f64,
    runs: usize,
}

pub fn report(g: &Global, a: ReportArgs) -> Result<()> {
    let dir = g.input(&a.dir);
    let runs: Vec<RunSummary> = collect_runs(&dir)?.into_iter().map(|(_, s)| s).collect();
    if runs.is_empty() {
        return Err(cpsw_core::report::ReportError::NoRuns(dir).into());
    }
    let table = ReportTable::build(&runs, &[]);
    print!("{}", table.render());
    if let Some(path) = &a.csv {
        let path = g.output(path);
        let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for row in &table.rows {
            for (d, cell) in table.domains.iter().zip(&row.cells) {
                if let Some(c) = cell {
                    let r = ReportCsvRow { label: &row.label, domain: d, mean: c.mean, std: c.std, runs: c.runs };
                    w.serialize(r).map_err(CliError::failed)?;
                }
            }
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

#[derive(Args)]
pub struct CaseArgs {
    /// Finished run directory; without it a model is trained from the config.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Samples drawn per training domain.
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[command(flatten)]
    o: Overrides,
}

#[derive(Serialize)]
struct CaseRow<'a> {
    domain: &'a str,
    sample_id: usize,
    label: u8,
    color: u8,
    c_cluster: usize,
    s_cluster: usize,
    pi: f64,
}

/// Fraction of samples explained by mapping each cluster to its majority value.
fn purity(clusters: &[usize], values: &[u8]) -> f64 {
    let mut counts: BTreeMap<(usize, u8), usize> = BTreeMap::new();
    for (&c, &v) in clusters.iter().zip(values) {
        *counts.entry((c, v)).or_default() += 1;
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(c, _), &n) in &counts {
        let e = best.entry(c).or_default();
        *e = (*e).max(n);
    }
    best.values().sum::<usize>() as f64 / clusters.len().max(1) as f64
}

pub fn casestudy(g: &Global, a: CaseArgs) -> Result<()> {
    let (mut cfg, params, out) = match &a.run {
        Some(run) => {
            let run = g.input(run);
            let cfg_path = run.join("config.json");
            if !cfg_path.is_file() {
                return Err(CliError::usage(format!("{}: not a run directory", run.display())));
            }
            let mut cfg: ExperimentConfig = config::load(&cfg_path)?;
            if let Some(s) = g.seed {
                cfg.seed = s;
            }
            let params = load_checkpoint(&run.join("checkpoint.bin"))?;
            let out = a.o.out.as_ref().map(|p| g.output(p)).unwrap_or_else(|| run.clone());
            (cfg, params, out)
        }
        None => {
            let mut cfg = load_config(g, &a.o)?;
            let corpus = load_corpus(g, &mut cfg)?;
            let split = corpus.split(&cfg.held_out)?;
            let (summary, result) = experiment::run(&cfg, &corpus, &split)?;
            let out = g.output(cfg.output.as_deref().unwrap_or(Path::new("casestudy")));
            write_run(&out, &cfg, &summary, &result)?;
            print_run(&summary, &result, &out);
            (cfg, result.params, out)
        }
    };
    let corpus = load_corpus(g, &mut cfg)?;
    let split = corpus.split(&cfg.held_out)?;
    let train_sets: Vec<&DomainDataset> = split.train.iter().map(|&d| &corpus.datasets[d]).collect();
    cfg.train.seed = cfg.seed;
    let props = estimate_propensity(&params, &cfg.train, &train_sets)?;

    // Pooled tables cover the training domains back to back.
    let owners: Vec<Vec<(usize, usize)>> = if props.len() == train_sets.len() {
        train_sets.iter().enumerate().map(|(d, ds)| (0..ds.len()).map(|i| (d, i)).collect()).collect()
    } else {
        vec![train_sets.iter().enumerate().flat_map(|(d, ds)| (0..ds.len()).map(move |i| (d, i))).collect()]
    };

    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let path = out.join("casestudy.csv");
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut rng = substream(cfg.seed, "casestudy");
    for (p, own) in props.iter().zip(&owners) {
        let s: Vec<usize> = p.rows.iter().map(|r| r.s_cluster).collect();
        let c: Vec<usize> = p.rows.iter().map(|r| r.c_cluster).collect();
        let colors: Vec<u8> = own.iter().map(|&(d, i)| train_sets[d].colors[i]).collect();
        let labels: Vec<u8> = own.iter().map(|&(d, i)| train_sets[d].labels[i]).collect();
        println!(
            "{:>6}  S/colour agreement {:.3}  C/label agreement {:.3}",
            p.domain,
            purity(&s, &colors),
            purity(&c, &labels)
        );
        let mut pi_by_group = [(0.0, 0usize); 2];
        for k in sample(&mut rng, p.rows.len(), a.batch.min(p.rows.len())).into_vec() {
            let row = &p.rows[k];
            let (d, i) = own[k];
            let ds = train_sets[d];
            let aligned = usize::from(ds.colors[i] == ds.labels[i]);
            pi_by_group[aligned].0 += row.pi;
            pi_by_group[aligned].1 += 1;
            let r = CaseRow {
                domain: &ds.name,
                sample_id: i,
                label: ds.labels[i],
                color: ds.colors[i],
                c_cluster: row.c_cluster,
                s_cluster: row.s_cluster,
                pi: row.pi,
            };
            w.serialize(r).map_err(CliError::failed)?;
        }
        let mean = |(s, n): (f64, usize)| if n == 0 { f64::NAN } else { s / n as f64 };
        println!(
            "        batch mean pi: colour matches label {:.3} (n {}), differs {:.3} (n {})",
            mean(pi_by_group[1]),
            pi_by_group[1].1,
            mean(pi_by_group[0]),
            pi_by_group[0].1
        );
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}
