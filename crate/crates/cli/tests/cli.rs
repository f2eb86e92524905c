use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures");

fn fixture(name: &str) -> PathBuf {
    Path::new(FIXTURES).join(name)
}

fn cpsw(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpsw"))
        .args(args)
        .current_dir(root)
        .env("CPSW_OUTPUT_ROOT", root.join("out"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(root: &Path, args: &[&str]) -> String {
    let o = cpsw(root, args);
    assert!(o.status.success(), "{args:?}\nstdout: {}\nstderr: {}", stdout(&o), stderr(&o));
    stdout(&o)
}

fn small_data(root: &Path) {
    ok(root, &["generate-data", "--size", "60", "--seed", "3"]);
}

const TINY: &[&str] = &["--epochs", "1", "--hidden", "4", "--batch-size", "32"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn ok_owned(root: &Path, args: &[String]) -> String {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(root, &refs)
}

#[test]
fn generate_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["generate-data", "--size", "40", "--seed", "5", "--out", "a"]);
    ok(root, &["generate-data", "--size", "40", "--seed", "5", "--out", "b"]);
    for k in 0..3 {
        assert!(root.join(format!("out/a/domain_{k}.cpsw")).is_file());
    }
    let read = |d: &str| {
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(root.join("out").join(d).join("manifest.json")).unwrap()).unwrap();
        m["domains"].as_array().unwrap().iter().map(|d| d["sha256"].as_str().unwrap().to_string()).collect::<Vec<_>>()
    };
    assert_eq!(read("a"), read("b"));
    ok(root, &["generate-data", "--size", "40", "--seed", "6", "--out", "c"]);
    assert_ne!(read("a"), read("c"));
}

#[test]
fn bad_bias_is_a_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpsw(dir.path(), &["generate-data", "--biases", "0.1,1.5", "--size", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("biases[1]"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "sed = 1\n").unwrap();
    let o = cpsw(dir.path(), &["train", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml"));
    let o = cpsw(dir.path(), &["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cpsw(dir.path(), &["train", "--data", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("manifest.json"));
}

#[test]
fn train_report_and_casestudy() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_data(root);
    ok_owned(root, &with(&["train"], TINY));
    ok_owned(root, &with(&["train", "--alpha", "0.1", "--beta", "0.01"], TINY));
    let run = root.join("out/runs/ours-s0");
    for f in ["metrics.csv", "checkpoint.bin", "propensity_0.csv", "propensity_1.csv", "config.json", "run.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let ckpt = std::fs::read(run.join("checkpoint.bin")).unwrap();
    assert_eq!(&ckpt[..8], b"CPSWCKPT");

    let table = ok(root, &["report", "runs", "--csv", "report.csv"]);
    assert!(table.contains("ERM") && table.contains("Ours") && table.contains("-90%"), "{table}");
    assert!(root.join("out/report.csv").is_file());

    let out = ok(root, &["casestudy", "--run", "runs/ours-s0", "--batch", "10"]);
    assert!(out.contains("S/colour agreement"), "{out}");
    let csv = std::fs::read_to_string(run.join("casestudy.csv")).unwrap();
    assert!(csv.starts_with("domain,sample_id,label,color,c_cluster,s_cluster,pi"));
    assert_eq!(csv.lines().count(), 1 + 2 * 10);

    let p = run.join("propensity_0.csv");
    let out = ok(root, &["bound", "--propensity", p.to_str().unwrap(), "--risk", "0.2"]);
    assert!(out.contains("bound "), "{out}");
}

#[test]
fn same_seed_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_data(root);
    ok_owned(root, &with(&["train", "--alpha", "0.1", "--beta", "0.1", "--out", "r1"], TINY));
    ok_owned(root, &with(&["train", "--alpha", "0.1", "--beta", "0.1", "--out", "r2"], TINY));
    let read = |d: &str| std::fs::read(root.join("out").join(d).join("metrics.csv")).unwrap();
    assert_eq!(read("r1"), read("r2"));
    let read = |d: &str| std::fs::read(root.join("out").join(d).join("checkpoint.bin")).unwrap();
    assert_eq!(read("r1"), read("r2"));
}

#[test]
fn report_on_empty_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = cpsw(dir.path(), &["report", "empty"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no runs found"));
}

#[test]
fn default_grid_sweep_writes_twelve_runs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_data(root);
    ok_owned(root, &with(&["sweep"], TINY));
    let csv = std::fs::read_to_string(root.join("out/sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 13);
    assert!(csv.starts_with("alpha,beta,seed,accuracy"));
    assert!(root.join("out/sweep/a0.01-b0.001-s0/run.json").is_file());
}

#[test]
fn ablation_sweep_reports_variant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    small_data(root);
    let args = with(&["sweep", "--ablations", "--alphas", "1", "--betas", "0.1", "--seeds", "0,1"], TINY);
    let out = ok_owned(root, &args);
    for row in ["ERM", "Ours", "Ours w/o L_PS", "Ours w/o L_PSW"] {
        assert!(out.lines().any(|l| l.starts_with(row)), "{row}\n{out}");
    }
    let table = ok(root, &["report", "sweep/compare"]);
    assert!(table.contains("w/o L_PSW") && table.contains("w/o L_PS "), "{table}");
    assert_eq!(std::fs::read_dir(root.join("out/sweep/compare")).unwrap().count(), 8);
}

#[test]
fn analyze_graph_queries() {
    let dir = tempfile::tempdir().unwrap();
    let dag = fixture("fork_latent.dag");
    let out = ok(dir.path(), &["analyze-graph", dag.to_str().unwrap(), "--dsep", "C", "L"]);
    assert!(out.contains("d-separated: true"), "{out}");
    let out = ok(dir.path(), &["analyze-graph", dag.to_str().unwrap(), "--dsep", "C", "L", "--given", "Y"]);
    assert!(out.contains("d-separated: false"), "{out}");
    let out = ok(dir.path(), &["analyze-graph", dag.to_str().unwrap(), "--backdoor", "C", "Y"]);
    assert!(out.contains("1 backdoor path(s)"), "{out}");

    let scm = fixture("covariate_fork.scm");
    let out = ok(dir.path(), &["analyze-graph", scm.to_str().unwrap(), "--effect", "C", "Y"]);
    let z = out.lines().find(|l| l.starts_with("{Z} ")).unwrap();
    assert!(z.contains("false"), "{z}");
    let t = out.lines().find(|l| l.starts_with("{T} ")).unwrap();
    assert!(t.contains("true"), "{t}");
}

#[test]
fn malformed_edge_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.dag"), "A -> B\n# note\nB => C\n").unwrap();
    let o = cpsw(dir.path(), &["analyze-graph", "g.dag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn scm_checks_and_queries() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let out = ok(
        root,
        &["scm", "--fixture", "fork_latent", "--check-statistical", "C", "Y", "--t1", "L", "--t2", "X,S", "--check-causal", "C", "Y"],
    );
    assert!(out.contains("T2={X, S}: true"), "{out}");
    assert!(out.contains("causal non-confounding of C for Y: true"), "{out}");

    let collider = fixture("collider_embedding.scm");
    let out = ok(root, &["scm", collider.to_str().unwrap(), "--check-statistical", "C", "Y", "--t2", "X,S"]);
    assert!(out.contains("T2={X, S}: false"), "{out}");

    let out = ok(root, &["scm", "--fixture", "confounded_pair", "--query", "Y=1", "--do", "C=1"]);
    assert!(out.contains("P(Y=1 | do(C=1)) = 0.580000000000"), "{out}");
}

#[test]
fn positivity_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let model = "Z -> C\nZ -> Y\nC -> Y\ncpt Z : 0.5 0.5\ncpt C | Z : 1 0 ; 0.3 0.7\ncpt Y | C Z : 0.5 0.5 ; 0.5 0.5 ; 0.5 0.5 ; 0.5 0.5\n";
    std::fs::write(dir.path().join("m.scm"), model).unwrap();
    let o = cpsw(dir.path(), &["scm", "m.scm", "--query", "Y=1", "--given", "C=1", "--adjust", "Z"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn bound_closed_form_and_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("pi.csv"), "sample_id,c_cluster,s_cluster,pi\n0,0,0,1\n1,0,0,1\n").unwrap();
    let out = ok(
        root,
        &["bound", "--propensity", "pi.csv", "--risk", "0", "--omega", "1", "--hypotheses", "1", "--delta", "0.5"],
    );
    assert!(out.contains("slack 0.588705011258"), "{out}");

    let out = ok(root, &["bound", "--coverage", "--trials", "200", "--seed", "1"]);
    assert!(out.contains("coverage 200/200"), "{out}");
    let csv = std::fs::read_to_string(root.join("out/coverage.csv")).unwrap();
    assert!(csv.starts_with("trial,hypothesis,empirical_risk,bound,true_risk,covered"));
    assert_eq!(csv.lines().count(), 201);

    let o = cpsw(root, &["bound", "--coverage", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(2));
}
