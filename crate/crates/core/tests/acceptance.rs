//! Acceptance checks, one line per criterion. Run a subset with
//! `cargo test -p cpsw-core --test acceptance -- 2 7`.

mod common;

use std::time::{Duration, Instant};

use common::{subsets, Model};
use cpsw_core::bounds::{coverage_experiment, slack, unbiasedness, BoundInput, TabularScenario};
use cpsw_core::config::{ExperimentConfig, SweepGrid};
use cpsw_core::datasets::{generate, GenSpec};
use cpsw_core::experiment::{select_and_compare, Corpus};
use cpsw_core::learner::{backward, loss_erm, loss_ps, loss_psw, train, Batch, ModelParams, Objective, TrainConfig};
use cpsw_core::propensity::{build_table, Clustering};
use cpsw_core::scm::{
    adjustment_estimate, check_nonconfounding_causal, check_nonconfounding_statistical, fixtures,
    nonconfounding_partitions, Assignment,
};
use cpsw_core::spectral::{mix_spectra, Band, Fft2, FilterMask, ImageTensor, MaskScheme};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn backdoor_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut models, mut checks, mut worst) = (0, 0usize, 0.0f64);
    let mut set_mismatch = 0;
    while models < 500 {
        let n = rng.gen_range(2..=6);
        let m = Model::random(&mut rng, n, 0.45);
        models += 1;
        let g = m.dag();
        let jt = m.scm().joint().unwrap();
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let others: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                let oracle_sets: Vec<Vec<usize>> = subsets(&others).into_iter().filter(|z| m.is_backdoor(x, y, z)).collect();
                let sets = g.backdoor_sets(&m.names[x], &m.names[y]).unwrap();
                if sets.len() != oracle_sets.len() {
                    set_mismatch += 1;
                }
                for z in &sets {
                    for xv in 0..2 {
                        for yv in 0..2 {
                            let truth = m.prob(&[(y, yv)], &[], Some((x, xv)));
                            let est = adjustment_estimate(
                                &jt,
                                &Assignment::new([(m.names[x].as_str(), xv)]),
                                &Assignment::new([(m.names[y].as_str(), yv)]),
                                z,
                            )
                            .unwrap();
                            worst = worst.max((est - truth).abs());
                            checks += 1;
                        }
                    }
                }
            }
        }
    }
    outcome(
        worst <= 1e-12 && set_mismatch == 0,
        format!("{models} SCMs, {checks} adjusted cells, max |err| {worst:.2e}, set-count mismatches {set_mismatch}"),
    )
}

fn collider_bias() -> Outcome {
    let scm = fixtures::covariate_fork();
    let m = Model::from_scm(&scm);
    let jt = scm.joint().unwrap();
    let (c, y) = (m.index("C"), m.index("Y"));
    let (mut t_err, mut z_gap) = (0.0f64, f64::INFINITY);
    let mut cells = Vec::new();
    for cv in 0..2 {
        for yv in 0..2 {
            let truth = m.prob(&[(y, yv)], &[], Some((c, cv)));
            let treat = Assignment::new([("C", cv)]);
            let out = Assignment::new([("Y", yv)]);
            let by_t = adjustment_estimate(&jt, &treat, &out, &["T"]).unwrap();
            let by_z = adjustment_estimate(&jt, &treat, &out, &["Z"]).unwrap();
            t_err = t_err.max((by_t - truth).abs());
            z_gap = z_gap.min((by_z - truth).abs());
            cells.push(format!("P(Y={yv}|do(C={cv}))={truth:.4} Z:{by_z:.4}"));
        }
    }
    outcome(
        t_err <= 1e-12 && z_gap >= 0.01,
        format!("adjust-by-T max |err| {t_err:.2e}; adjust-by-Z min |gap| {z_gap:.4}; {}", cells.join(", ")),
    )
}

fn nonconfounding_checks() -> Outcome {
    let fork = fixtures::fork_latent();
    let jt = fork.joint().unwrap();
    let stat = check_nonconfounding_statistical(&jt, fork.graph(), "C", "Y", &["L"], &["X", "S"]).unwrap();
    let causal = check_nonconfounding_causal(&fork, "C", "Y").unwrap();
    let file = fixtures::collider_embedding_file();
    let cond = file.scm.joint().unwrap().condition(&file.given).unwrap();
    let collider = check_nonconfounding_statistical(&cond, file.scm.graph(), "C", "Y", &[] as &[&str], &["X", "S"]).unwrap();
    let passing = nonconfounding_partitions(&cond, file.scm.graph(), "C", "Y").unwrap().len();
    outcome(
        stat && causal && !collider,
        format!("fork: statistical {stat}, causal {causal}; collider given E=1: statistical {collider} ({passing} partitions pass)"),
    )
}

fn erm_test_accuracy(bias: f64, noise: f64, seed: u64) -> f64 {
    let spec = GenSpec {
        biases: vec![bias, 0.5],
        names: vec!["train".into(), "test".into()],
        noise,
        size: 5000,
        seed,
        ..GenSpec::default()
    };
    let data = generate(&spec).unwrap();
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    let result = train(&cfg, &[&data[0]], &[&data[1]]).unwrap();
    result.final_accuracy("test").unwrap()
}

fn erm_under_colour_bias() -> Outcome {
    let seeds = 0..5u64;
    let clean: Vec<f64> = seeds.clone().map(|s| erm_test_accuracy(0.5, 0.0, s)).collect();
    let biased: Vec<f64> = seeds.map(|s| erm_test_accuracy(0.9, 0.25, s)).collect();
    let (a, b) = (median(&clean), median(&biased));
    outcome(
        a >= 0.90 && b <= 0.65 && a - b >= 0.25,
        format!("median test accuracy: unbiased {a:.4} {clean:.3?}, bias 0.9 {b:.4} {biased:.3?}, drop {:.1} points", 100.0 * (a - b)),
    )
}

fn psw_improvement() -> Outcome {
    let corpus = Corpus { datasets: generate(&GenSpec::default()).unwrap() };
    let split = corpus.split(&[]).unwrap();
    let base = ExperimentConfig::default();
    let grid = SweepGrid::default();
    let protocol = select_and_compare(&base, &corpus, &split, &grid, |_, _, _| Ok(())).unwrap();
    let med = |label: &str| median(&protocol.accuracies(label));
    let (erm, ours, no_psw, no_ps) = (med("ERM"), med("Ours"), med("Ours w/o L_PSW"), med("Ours w/o L_PS"));
    outcome(
        ours - erm >= 0.05 && no_psw < ours && no_ps < ours,
        format!(
            "best (alpha, beta) = {:?}; held-out median: ERM {erm:.4}, Ours {ours:.4}, w/o L_PSW {no_psw:.4}, w/o L_PS {no_ps:.4}; gain {:+.1} points",
            protocol.best,
            100.0 * (ours - erm)
        ),
    )
}

fn psw_unbiasedness() -> Outcome {
    let pop = TabularScenario::default().population().unwrap();
    // predict Y from C (cells 2, 3) and from S (cells 1, 3)
    let mut z = Vec::new();
    let mut pass = true;
    for (name, h) in [("Y=C", 0b1100), ("Y=S", 0b1010)] {
        let est = unbiasedness(&pop, h, 10_000, 7).unwrap();
        pass &= est.z() <= 3.0;
        z.push(format!("{name}: mean {:.5} exact {:.5} ({:.2} SE)", est.mean, est.exact, est.z()));
    }
    outcome(pass, z.join("; "))
}

fn bound_coverage() -> Outcome {
    let pop = TabularScenario::default().population().unwrap();
    let cov = coverage_experiment(&pop, 200, 0.05, false, 11).unwrap();
    let input = BoundInput {
        empirical_risk: 0.0,
        omega: 1.0,
        hypothesis_count: 1,
        confidence_delta: 0.5,
        propensities: vec![1.0, 1.0],
    };
    let closed = slack(&input).unwrap();
    let expect = 4f64.ln().sqrt() / 2.0;
    let err = (closed - expect).abs();
    outcome(
        cov.fraction() >= 0.95 && err <= 1e-12,
        format!("coverage {:.3} over 200 trials (slack {:.4}); pi = 1 slack {closed:.16}, |err| {err:.1e}", cov.fraction(), cov.slack),
    )
}

fn random_image(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> ImageTensor {
    ImageTensor::new(c, h, w, (0..c * h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

fn spectral_contracts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut roundtrip = 0.0f64;
    for (h, w) in [(28, 28), (64, 64)] {
        let fft = Fft2::new(h, w);
        for _ in 0..5 {
            let img = random_image(&mut rng, 3, h, w);
            let back = fft.inverse(&fft.forward(&img).unwrap()).unwrap().image;
            roundtrip = roundtrip.max(back.max_abs_diff(&img));
        }
    }

    let mut wrong_bits = 0usize;
    let mut masks = 0;
    for (h, w) in [(28, 28), (64, 64), (28, 17), (9, 12)] {
        let m = h.min(w);
        for s in 0..=m {
            let low = FilterMask::new(h, w, Band::Low, s, MaskScheme::Cross);
            let high = FilterMask::new(h, w, Band::High, s, MaskScheme::Cross);
            masks += 2;
            for i in 0..h {
                for j in 0..w {
                    let d = (i as f64 - h as f64 / 2.0).abs().min((j as f64 - w as f64 / 2.0).abs());
                    wrong_bits += usize::from(low.bit(i, j) != (d <= s as f64 / 2.0));
                    wrong_bits += usize::from(high.bit(i, j) != (d > (m as f64 - s as f64) / 2.0));
                }
            }
        }
    }

    let mut mix = 0.0f64;
    for scheme in [MaskScheme::Cross, MaskScheme::CrossComplement, MaskScheme::Square] {
        let x = random_image(&mut rng, 3, 28, 28);
        let reference = mix_spectra(&x, &x, 0.0, 7, scheme).unwrap();
        for lambda in [0.1, 0.37, 0.5, 0.9, 1.0] {
            mix = mix.max(mix_spectra(&x, &x, lambda, 7, scheme).unwrap().max_abs_diff(&reference));
        }
    }
    outcome(
        roundtrip <= 1e-6 && wrong_bits == 0 && mix <= 1e-9,
        format!("roundtrip max |err| {roundtrip:.2e}; {masks} masks, {wrong_bits} wrong bits; mix lambda spread {mix:.2e}"),
    )
}

fn finite_difference(p: &ModelParams, f: &dyn Fn(&ModelParams) -> f64) -> Vec<f64> {
    let theta = p.to_flat();
    let mut q = p.clone();
    let h = 1e-5;
    (0..theta.len())
        .map(|k| {
            let mut t = theta.clone();
            t[k] += h;
            q.set_flat(&t).unwrap();
            let up = f(&q);
            t[k] -= 2.0 * h;
            q.set_flat(&t).unwrap();
            (up - f(&q)) / (2.0 * h)
        })
        .collect()
}

/// Largest per-coordinate relative error, ignoring coordinates where both
/// values sit at finite-difference noise level.
fn relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| {
            let diff = (a - f).abs();
            if diff < 1e-10 {
                0.0
            } else {
                diff / a.abs().max(f.abs())
            }
        })
        .fold(0.0, f64::max)
}

fn gradient_audit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let configs = 24;
    let mut worst = [0.0f64; 4];
    for k in 0..configs {
        let classes = rng.gen_range(2..=3);
        let d = rng.gen_range(2..=6);
        let sizes = match k % 3 {
            0 => vec![d, classes],
            1 => vec![d, rng.gen_range(2..=5), classes],
            _ => vec![d, rng.gen_range(2..=4), rng.gen_range(2..=4), classes],
        };
        let mut p = ModelParams::zeros(&sizes);
        let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.gen_range(-0.8..0.8)).collect();
        p.set_flat(&flat).unwrap();
        let n = rng.gen_range(2..=6);
        let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.5..1.5));
        let t = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.5..1.5));
        let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let w = (0..n).map(|_| 1.0 / rng.gen_range(0.05..1.0)).collect();
        let batch = Batch::new(x, labels, 0).unwrap().with_weights(w).unwrap().with_twins(t).unwrap();
        let omega = if k % 2 == 0 { Some(4.0) } else { None };
        let (alpha, beta) = (rng.gen_range(0.01..2.0), rng.gen_range(0.01..2.0));

        let grad = |a: f64, b: f64| {
            let obj = Objective { alpha: a, beta: b, omega, freeze_head: false };
            backward(&p, &batch, &obj).unwrap().1.to_flat()
        };
        let g0 = grad(0.0, 0.0);
        let g_psw: Vec<f64> = grad(1.0, 0.0).iter().zip(&g0).map(|(a, b)| a - b).collect();
        let g_ps: Vec<f64> = grad(0.0, 1.0).iter().zip(&g0).map(|(a, b)| a - b).collect();
        let g_all = grad(alpha, beta);

        let fd0 = finite_difference(&p, &|q| loss_erm(q, &batch, omega).unwrap());
        let fd_psw = finite_difference(&p, &|q| loss_psw(q, &batch, omega).unwrap());
        let fd_ps = finite_difference(&p, &|q| loss_ps(q, &batch, omega).unwrap());
        let fd_all = finite_difference(&p, &|q| {
            loss_erm(q, &batch, omega).unwrap() + alpha * loss_psw(q, &batch, omega).unwrap() + beta * loss_ps(q, &batch, omega).unwrap()
        });
        for (slot, (a, f)) in [(&g0, &fd0), (&g_psw, &fd_psw), (&g_ps, &fd_ps), (&g_all, &fd_all)].into_iter().enumerate() {
            worst[slot] = worst[slot].max(relative_error(a, f));
        }
    }
    let pass = worst.iter().all(|&e| e <= 1e-4);
    outcome(
        pass,
        format!(
            "{configs} configurations; max relative error L {:.1e}, L_PSW {:.1e}, L_PS {:.1e}, composite {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn propensity_fixture() -> Outcome {
    let data = generate(&GenSpec::single(0.9, 0.25, 5000, 5)).unwrap().remove(0);
    let c = Clustering::from_assignments(2, data.labels.iter().map(|&l| usize::from(l)).collect()).unwrap();
    let s = Clustering::from_assignments(2, data.colors.iter().map(|&k| usize::from(k)).collect()).unwrap();
    let table = build_table(&c, &s, 0.05).unwrap();
    let expect = [[0.9, 0.1], [0.1, 0.9]];
    let mut worst = 0.0f64;
    for (l, col) in expect.iter().enumerate() {
        for (k, &e) in col.iter().enumerate() {
            worst = worst.max((table.get(k, l) - e).abs());
        }
    }
    outcome(
        worst <= 0.02,
        format!("columns {:.4?} / {:.4?}, max deviation {worst:.4}", table.column(0), table.column(1)),
    )
}

type Check = fn() -> Outcome;

const CRITERIA: [(u32, &str, Check, Duration); 10] = [
    (1, "backdoor exactness", backdoor_exactness, Duration::from_secs(60)),
    (2, "collider adjustment bias", collider_bias, Duration::from_secs(1)),
    (3, "non-confounding checks", nonconfounding_checks, Duration::from_secs(1)),
    (4, "ERM under colour bias", erm_under_colour_bias, Duration::from_secs(600)),
    (5, "PSW improvement over ERM", psw_improvement, Duration::from_secs(1800)),
    (6, "PSW unbiasedness", psw_unbiasedness, Duration::from_secs(60)),
    (7, "bound coverage", bound_coverage, Duration::from_secs(60)),
    (8, "spectral contracts", spectral_contracts, Duration::from_secs(60)),
    (9, "gradient audit", gradient_audit, Duration::from_secs(60)),
    (10, "propensity fixture", propensity_fixture, Duration::from_secs(60)),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, check, budget) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = out.pass && in_time;
        let time = format!("{:.1}s of {}s", took.as_secs_f64(), budget.as_secs());
        println!(
            "criterion {id:>2} {:<4} {name}: {} [{time}{}]",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            if in_time { "" } else { ", over budget" }
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
