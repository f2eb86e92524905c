mod common;

use std::f64::consts::PI;

use common::{subsets, Model};
use cpsw_core::bounds::Population;
use cpsw_core::learner::{backward, loss_erm, loss_ps, loss_psw, Batch, ModelParams, Objective};
use cpsw_core::propensity::{build_table, sample_propensity, Clustering};
use cpsw_core::scm::{adjustment_estimate, Assignment};
use cpsw_core::spectral::{Fft2, ImageTensor, SpectrumGrid};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=6);
    Model::random(&mut rng, n, 0.45)
}

fn names(m: &Model, vs: &[usize]) -> Vec<String> {
    vs.iter().map(|&v| m.names[v].clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dsep_is_symmetric_and_matches_moralization(seed in any::<u64>(), zmask in 0u32..64) {
        let m = model(seed);
        let g = m.dag();
        let n = m.names.len();
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let z: Vec<usize> = (0..n).filter(|&v| v != x && v != y && zmask >> v & 1 == 1).collect();
                let zn = names(&m, &z);
                let xy = g.d_separated(&m.names[x], &m.names[y], &zn).unwrap();
                let yx = g.d_separated(&m.names[y], &m.names[x], &zn).unwrap();
                prop_assert_eq!(xy, yx);
                prop_assert_eq!(xy, m.dsep_moral(x, y, &z, None));
            }
        }
    }

    #[test]
    fn dsep_implies_independence(seed in any::<u64>(), zmask in 0u32..64) {
        let m = model(seed);
        let g = m.dag();
        let jt = m.scm().joint().unwrap();
        let n = m.names.len();
        for x in 0..n {
            for y in x + 1..n {
                let z: Vec<usize> = (0..n).filter(|&v| v != x && v != y && zmask >> v & 1 == 1).collect();
                let zn = names(&m, &z);
                if g.d_separated(&m.names[x], &m.names[y], &zn).unwrap() {
                    let gap = jt.max_dependence(&[&m.names[x]], &[&m.names[y]], &zn).unwrap();
                    prop_assert!(gap < 1e-12, "{} _||_ {} | {:?}: {gap}", m.names[x], m.names[y], zn);
                }
            }
        }
    }

    #[test]
    fn backdoor_sets_are_exact(seed in any::<u64>()) {
        let m = model(seed);
        let g = m.dag();
        let jt = m.scm().joint().unwrap();
        let n = m.names.len();
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let others: Vec<usize> = (0..n).filter(|&v| v != x && v != y).collect();
                let mut expected: Vec<Vec<String>> = subsets(&others)
                    .into_iter()
                    .filter(|z| m.is_backdoor(x, y, z))
                    .map(|z| names(&m, &z))
                    .collect();
                let mut got = g.backdoor_sets(&m.names[x], &m.names[y]).unwrap();
                expected.sort();
                got.sort();
                prop_assert_eq!(&got, &expected);
                for z in &got {
                    for xv in 0..2 {
                        let truth = m.prob(&[(y, 1)], &[], Some((x, xv)));
                        let est = adjustment_estimate(
                            &jt,
                            &Assignment::new([(m.names[x].as_str(), xv)]),
                            &Assignment::new([(m.names[y].as_str(), 1)]),
                            z,
                        )
                        .unwrap();
                        prop_assert!((est - truth).abs() <= 1e-12, "{est} vs {truth}");
                    }
                }
            }
        }
    }
}

fn image(seed: u64, c: usize, h: usize, w: usize) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageTensor::new(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct DFT sum in the centred layout.
fn naive_dft(img: &ImageTensor) -> Vec<(f64, f64)> {
    let (c, h, w) = img.shape();
    let mut out = vec![(0.0, 0.0); c * h * w];
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                let (u, v) = ((i + h - h / 2) % h, (j + w - w / 2) % w);
                let (mut re, mut im) = (0.0, 0.0);
                for a in 0..h {
                    for b in 0..w {
                        let t = -2.0 * PI * ((u * a) as f64 / h as f64 + (v * b) as f64 / w as f64);
                        re += img.get(ch, a, b) * t.cos();
                        im += img.get(ch, a, b) * t.sin();
                    }
                }
                out[(ch * h + i) * w + j] = (re, im);
            }
        }
    }
    out
}

fn max_spec_diff(a: &SpectrumGrid, b: &[(f64, f64)]) -> f64 {
    a.data().iter().zip(b).map(|(z, &(re, im))| (z.re - re).abs().max((z.im - im).abs())).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_matches_direct_sum_and_roundtrips(seed in any::<u64>(), c in 1usize..4, h in 2usize..10, w in 2usize..10) {
        let img = image(seed, c, h, w);
        let fft = Fft2::new(h, w);
        let spec = fft.forward(&img).unwrap();
        prop_assert!(max_spec_diff(&spec, &naive_dft(&img)) < 1e-9);
        let back = fft.inverse(&spec).unwrap();
        prop_assert!(back.image.max_abs_diff(&img) < 1e-12);
        prop_assert!(back.max_imag < 1e-12);
    }

    #[test]
    fn fft_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, h in 2usize..12, w in 2usize..12) {
        let x = image(seed, 2, h, w);
        let y = image(seed ^ 0x5a5a, 2, h, w);
        let xy: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
        let xy = ImageTensor::new(2, h, w, xy).unwrap();
        let fft = Fft2::new(h, w);
        let lhs = fft.forward(&xy).unwrap();
        let rhs = fft.forward(&x).unwrap().combine(a, &fft.forward(&y).unwrap(), b).unwrap();
        let d = lhs.data().iter().zip(rhs.data()).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        prop_assert!(d < 1e-9, "{d}");
    }
}

fn random_params<R: Rng>(rng: &mut R, sizes: &[usize]) -> ModelParams {
    let mut p = ModelParams::zeros(sizes);
    let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.gen_range(-0.8..0.8)).collect();
    p.set_flat(&flat).unwrap();
    p
}

fn random_batch<R: Rng>(rng: &mut R, n: usize, d: usize, classes: usize) -> Batch {
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.5..1.5));
    let t = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.5..1.5));
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let w = (0..n).map(|_| 1.0 / rng.gen_range(0.05..1.0)).collect();
    Batch::new(x, labels, 0).unwrap().with_weights(w).unwrap().with_twins(t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn composite_gradient_matches_finite_differences(seed in any::<u64>(), clamp in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = rng.gen_range(2..4);
        let d = rng.gen_range(1..5);
        let sizes = if rng.gen() { vec![d, rng.gen_range(1..5), classes] } else { vec![d, classes] };
        let p = random_params(&mut rng, &sizes);
        let n = rng.gen_range(1..6);
        let batch = random_batch(&mut rng, n, d, classes);
        let obj = Objective { alpha: rng.gen_range(0.0..2.0), beta: rng.gen_range(0.0..2.0), omega: clamp.then_some(4.0), freeze_head: false };
        let loss = |q: &ModelParams| {
            loss_erm(q, &batch, obj.omega).unwrap()
                + obj.alpha * loss_psw(q, &batch, obj.omega).unwrap()
                + obj.beta * loss_ps(q, &batch, obj.omega).unwrap()
        };
        let g = backward(&p, &batch, &obj).unwrap().1.to_flat();
        let theta = p.to_flat();
        let mut q = p.clone();
        for k in 0..theta.len() {
            let h = 1e-5;
            let mut t = theta.clone();
            t[k] += h;
            q.set_flat(&t).unwrap();
            let up = loss(&q);
            t[k] -= 2.0 * h;
            q.set_flat(&t).unwrap();
            let down = loss(&q);
            let fd = (up - down) / (2.0 * h);
            let scale = g[k].abs().max(fd.abs());
            prop_assert!((g[k] - fd).abs() <= 1e-4 * scale || (g[k] - fd).abs() < 1e-10, "param {k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn unit_weights_and_identical_twins_reduce_to_erm(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, &[3, 4, 2]);
        let b = random_batch(&mut rng, 5, 3, 2);
        let plain = Batch::new(b.images.clone(), b.labels.clone(), 0).unwrap();
        let erm = loss_erm(&p, &plain, Some(10.0)).unwrap();
        let ones = plain.clone().with_weights(vec![1.0; 5]).unwrap();
        prop_assert!((loss_psw(&p, &ones, Some(10.0)).unwrap() - erm).abs() < 1e-14);
        let same = plain.clone().with_twins(plain.images.clone()).unwrap();
        prop_assert!((loss_ps(&p, &same, Some(10.0)).unwrap() - erm).abs() < 1e-14);
    }

    #[test]
    fn psw_risk_has_the_manipulated_risk_as_expectation(seed in any::<u64>(), n in 1usize..7) {
        // exact expectation over all 2^n reveal patterns
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let losses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let pop = Population::new(pi.clone(), vec![losses.clone()], 3.0).unwrap();
        let mut expect = 0.0;
        for mask in 0..1usize << n {
            let revealed: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            let p: f64 = (0..n).map(|i| if revealed[i] { pi[i] } else { 1.0 - pi[i] }).product();
            expect += p * pop.psw_risk(0, &revealed);
        }
        let truth = losses.iter().sum::<f64>() / n as f64;
        prop_assert!((expect - truth).abs() < 1e-12);
        prop_assert!((pop.true_risk(0) - truth).abs() < 1e-12);
    }

    #[test]
    fn propensity_is_invariant_to_relabeling(seed in any::<u64>(), n in 4usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let s: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let perm = [2, 0, 1];
        let c2: Vec<usize> = c.iter().map(|&k| perm[k]).collect();
        let s2: Vec<usize> = s.iter().map(|&l| 1 - l).collect();
        let (cc, sc) = (Clustering::from_assignments(3, c).unwrap(), Clustering::from_assignments(2, s).unwrap());
        let (cc2, sc2) = (Clustering::from_assignments(3, c2).unwrap(), Clustering::from_assignments(2, s2).unwrap());
        let t = build_table(&cc, &sc, 0.0).unwrap();
        let t2 = build_table(&cc2, &sc2, 0.0).unwrap();
        for i in 0..n {
            let a = sample_propensity(&t, &cc, &sc, i).unwrap();
            let b = sample_propensity(&t2, &cc2, &sc2, i).unwrap();
            prop_assert!((a - b).abs() < 1e-15);
        }
        for l in 0..2 {
            let col: f64 = t.column(l).iter().sum();
            prop_assert!(col == 0.0 || (col - 1.0).abs() < 1e-12);
        }
    }
}
