use std::path::{Path, PathBuf};

use clap::Args;
use cpsw_core::graph::{parse_dag, CausalDag};
use cpsw_core::scm::{
    adjustment_estimate, adjustment_gaps, check_nonconfounding_causal, check_nonconfounding_statistical, fixtures,
    nonconfounding_partitions, parse_scm, spurious_correlation_witness, Assignment, Intervention, JointTable, ScmFile,
};

use crate::{CliError, Global, Result};

fn list(v: &[String]) -> String {
    format!("{{{}}}", v.join(", "))
}

enum Model {
    Dag(CausalDag),
    Scm(ScmFile),
}

impl Model {
    fn graph(&self) -> &CausalDag {
        match self {
            Model::Dag(g) => g,
            Model::Scm(f) => f.scm.graph(),
        }
    }
}

fn read(g: &Global, path: &Path) -> Result<String> {
    let path = g.input(path);
    std::fs::read_to_string(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// `.dag` files hold edges only; anything else is read as an SCM when it
/// has CPT lines.
fn load_model(g: &Global, path: &Path) -> Result<Model> {
    let text = read(g, path)?;
    let is_dag = path.extension().is_some_and(|e| e == "dag");
    let has_cpt = text.lines().any(|l| l.trim_start().starts_with("cpt "));
    let ctx = |e: String| CliError::usage(format!("{}: {e}", path.display()));
    if is_dag || !has_cpt {
        return parse_dag(&text).map(Model::Dag).map_err(|e| ctx(e.to_string()));
    }
    parse_scm(&text).map(Model::Scm).map_err(|e| ctx(e.to_string()))
}

#[derive(Args)]
pub struct GraphArgs {
    /// `.dag` edge list or `.scm` model.
    file: PathBuf,
    /// List every path between two nodes.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    paths: Option<Vec<String>>,
    /// D-separation of two nodes given `--given`.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    dsep: Option<Vec<String>>,
    /// Conditioning set, comma separated.
    #[arg(long, value_delimiter = ',')]
    given: Vec<String>,
    /// Backdoor paths and every valid adjustment set.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    backdoor: Option<Vec<String>>,
    /// With CPTs: adjusted estimates against P(y | do(x)) for every candidate set.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    effect: Option<Vec<String>>,
}

pub fn analyze_graph(g: &Global, a: GraphArgs) -> Result<()> {
    let model = load_model(g, &a.file)?;
    let dag = model.graph();
    let quiet = a.paths.is_none() && a.dsep.is_none() && a.backdoor.is_none() && a.effect.is_none();
    if quiet {
        println!("nodes: {}", dag.nodes().join(" "));
        for (p, c) in dag.edges() {
            println!("{p} -> {c}");
        }
        println!("topological order: {}", dag.topological_order().join(" "));
    }
    if let Some(v) = &a.paths {
        let paths = dag.enumerate_paths(&v[0], &v[1])?;
        println!("{} path(s) between {} and {}", paths.len(), v[0], v[1]);
        for p in &paths {
            let blocked = dag.is_blocked(p, &a.given)?;
            println!("  {p}  [{}]", if blocked { "blocked" } else { "open" });
        }
    }
    if let Some(v) = &a.dsep {
        let sep = dag.d_separated(&v[0], &v[1], &a.given)?;
        println!("{} _||_ {} | {}", v[0], v[1], list(&a.given));
        println!("d-separated: {sep}");
    }
    if let Some(v) = &a.backdoor {
        let paths = dag.backdoor_paths(&v[0], &v[1])?;
        println!("{} backdoor path(s) from {} to {}", paths.len(), v[0], v[1]);
        for p in &paths {
            println!("  {p}");
        }
        let sets = dag.backdoor_sets(&v[0], &v[1])?;
        println!("{} valid adjustment set(s)", sets.len());
        for s in &sets {
            println!("  {}", list(s));
        }
        if !a.given.is_empty() {
            println!("{} satisfies backdoor: {}", list(&a.given), dag.satisfies_backdoor(&v[0], &v[1], &a.given)?);
        }
    }
    if let Some(v) = &a.effect {
        let Model::Scm(file) = &model else {
            return Err(CliError::usage("--effect needs a model with CPTs"));
        };
        bias_report(file, &v[0], &v[1])?;
    }
    Ok(())
}

fn bias_report(file: &ScmFile, x: &str, y: &str) -> Result<()> {
    let scm = &file.scm;
    let gaps = adjustment_gaps(scm, &file.given, x, y)?;
    if !file.given.is_empty() {
        let ctx: Vec<String> = file.given.pairs().iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("within {}", ctx.join(", "));
    }
    println!("{:<16} {:>8} {:>12}   per-cell (x, y): adjusted vs P(y|do(x))", "adjust by", "backdoor", "max |gap|");
    for gap in &gaps {
        let cells: Vec<String> = gap
            .cells
            .iter()
            .map(|&(xv, yv, est, truth)| {
                let xl = &scm.domain(x).map(|d| d[xv].clone()).unwrap_or_else(|_| xv.to_string());
                let yl = &scm.domain(y).map(|d| d[yv].clone()).unwrap_or_else(|_| yv.to_string());
                format!("({xl},{yl}) {est:.6} vs {truth:.6}")
            })
            .collect();
        println!("{:<16} {:>8} {:>12.3e}   {}", list(&gap.set), gap.backdoor, gap.max_gap, cells.join("; "));
    }
    let biased = gaps.iter().filter(|g| g.max_gap > 1e-9).count();
    println!("{biased} of {} candidate set(s) biased", gaps.len());
    Ok(())
}

#[derive(Args)]
pub struct ScmArgs {
    /// Model file; omit when using `--fixture`.
    file: Option<PathBuf>,
    /// A shipped model by name.
    #[arg(long, conflicts_with = "file")]
    fixture: Option<String>,
    /// Outcome event, e.g. `Y=1`.
    #[arg(long)]
    query: Option<String>,
    /// Conditioning event, added to the file's own context.
    #[arg(long)]
    given: Option<String>,
    /// Intervention, e.g. `C=1,S=0`.
    #[arg(long = "do")]
    intervene: Option<String>,
    /// Backdoor adjustment set for the `--given` treatment, comma separated.
    #[arg(long, value_delimiter = ',')]
    adjust: Option<Vec<String>>,
    /// Statistical non-confounding of X for Y under `--t1`/`--t2`.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    check_statistical: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    t1: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    t2: Vec<String>,
    /// Causal non-confounding: P(y | do(x)) = P(y | x).
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    check_causal: Option<Vec<String>>,
    /// Search for a spurious-correlation witness between S and Y.
    #[arg(long, num_args = 2, value_names = ["S", "Y"])]
    witness: Option<Vec<String>>,
}

fn load_scm(g: &Global, a: &ScmArgs) -> Result<ScmFile> {
    match (&a.file, &a.fixture) {
        (_, Some(name)) => fixtures::by_name(name).ok_or_else(|| {
            let known: Vec<&str> = fixtures::ALL.iter().map(|(n, _)| *n).collect();
            CliError::usage(format!("unknown fixture `{name}` (known: {})", known.join(", ")))
        }),
        (Some(path), None) => match load_model(g, path)? {
            Model::Scm(f) => Ok(f),
            Model::Dag(_) => Err(CliError::usage(format!("{}: no CPTs", path.display()))),
        },
        (None, None) => Err(CliError::usage("give a model file or --fixture")),
    }
}

fn parse_event(jt: &JointTable, text: Option<&str>) -> Result<Assignment> {
    Ok(match text {
        Some(t) => jt.parse_assignment(t)?,
        None => Assignment::empty(),
    })
}

pub fn scm(g: &Global, a: ScmArgs) -> Result<()> {
    let file = load_scm(g, &a)?;
    let scm = &file.scm;
    let full = scm.joint()?;
    let jt = if file.given.is_empty() { full.clone() } else { full.condition(&file.given)? };
    let given = parse_event(&full, a.given.as_deref())?;

    if let Some(q) = &a.query {
        let outcome = full.parse_assignment(q)?;
        let context = file.given.merged(&given).ok_or_else(|| CliError::usage("--given contradicts the file context"))?;
        if let Some(d) = &a.intervene {
            let ivs: Vec<Intervention> =
                full.parse_assignment(d)?.pairs().iter().map(|(k, v)| Intervention::new(k, *v)).collect();
            let mut m = scm.clone();
            for iv in &ivs {
                m = m.intervene(iv)?;
            }
            let p = m.joint()?.query(&outcome, &context)?;
            println!("P({q} | do({d}){}) = {p:.12}", suffix(a.given.as_deref()));
        } else if let Some(z) = &a.adjust {
            if given.is_empty() {
                return Err(CliError::usage("--adjust needs the treatment in --given"));
            }
            let p = adjustment_estimate(&jt, &given, &outcome, z)?;
            println!("adjusted P({q} | {}) over {} = {p:.12}", a.given.as_deref().unwrap_or(""), list(z));
        } else {
            let p = full.query(&outcome, &context)?;
            let cond = a.given.as_deref().map(|g| format!(" | {g}")).unwrap_or_default();
            println!("P({q}{cond}) = {p:.12}");
        }
    }
    if let Some(v) = &a.check_statistical {
        let ok = check_nonconfounding_statistical(&jt, scm.graph(), &v[0], &v[1], &a.t1, &a.t2)?;
        println!("statistical non-confounding of {} for {} with T1={} T2={}: {ok}", v[0], v[1], list(&a.t1), list(&a.t2));
        if !ok {
            let parts = nonconfounding_partitions(&jt, scm.graph(), &v[0], &v[1])?;
            println!("{} other partition(s) pass", parts.len());
            for (t1, t2) in parts {
                println!("  T1={} T2={}", list(&t1), list(&t2));
            }
        }
    }
    if let Some(v) = &a.check_causal {
        let ok = check_nonconfounding_causal(scm, &v[0], &v[1])?;
        println!("causal non-confounding of {} for {}: {ok}", v[0], v[1]);
    }
    if let Some(v) = &a.witness {
        match spurious_correlation_witness(&jt, scm.graph(), &v[0], &v[1])? {
            Some(w) => {
                println!("witness: {} depends on {} but not {} given {}", w.z1, v[0], v[1], list(&w.s1));
                println!("         {} depends on {} but not {} given {}", w.z2, v[1], v[0], list(&w.s2));
            }
            None => println!("no witness: {} and {} are not spuriously correlated here", v[0], v[1]),
        }
    }
    Ok(())
}

fn suffix(given: Option<&str>) -> String {
    given.map(|g| format!(", {g}")).unwrap_or_default()
}
