//! Analytic gradients against central finite differences.

use expsig::augment::TimeStrategy;
use expsig::model::{loss_and_grad, GradBundle, Hyper, ModelParams};
use expsig::normalization::{lambda_gradient, solve_lambda, NormConfig};
use expsig::signature::{signature, signature_vjp, time_augment, TimeSeries};
use expsig::TruncTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_series(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> TimeSeries {
    let values = (0..n * d).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    TimeSeries::on_unit_grid(values, d).unwrap()
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[test]
fn signature_vjp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20 {
        let d = 1 + case % 3;
        let n = 3 + case % 5;
        let level = 1 + case % 4;
        let x = random_series(&mut rng, n, d, 1.0);
        let len = expsig::tensor::feature_len(d, level) + 1;
        let cot = TruncTensor::from_flat(d, level, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let g = signature_vjp(&x, level, &cot).unwrap();
        let f = |vals: &[f64]| {
            let y = TimeSeries::on_unit_grid(vals.to_vec(), d).unwrap();
            signature(&y, level).unwrap().dot(&cot).unwrap()
        };
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..x.values().len() {
            let mut up = x.values().to_vec();
            let mut dn = up.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            worst = worst.max(rel_err(g[i], fd, 1e-3));
        }
        assert!(worst < 1e-6, "case {case}: relative error {worst:e}");
    }
}

#[test]
fn lambda_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = NormConfig::new(1.5, 1.0).unwrap();
    let mut checked = 0;
    for case in 0..30 {
        let d = 1 + case % 2;
        let x = time_augment(&random_series(&mut rng, 5, d, 2.0), true);
        let s = signature(&x, 3).unwrap();
        if s.norm_sq() <= cfg.c * 1.01 {
            continue;
        }
        checked += 1;
        let g = lambda_gradient(&s, &cfg).unwrap();
        let h = 1e-6;
        for i in 1..s.len() {
            let mut up = s.clone();
            let mut dn = s.clone();
            up.as_mut_slice()[i] += h;
            dn.as_mut_slice()[i] -= h;
            let fd = (solve_lambda(&up, &cfg).unwrap() - solve_lambda(&dn, &cfg).unwrap()) / (2.0 * h);
            let e = rel_err(g.as_slice()[i], fd, 1e-2);
            assert!(e < 1e-5, "case {case} coeff {i}: {} vs {fd}", g.as_slice()[i]);
        }
    }
    assert!(checked >= 10);
}

/// Loss as a function of one flat parameter index, with the noise seed fixed.
fn perturbed_loss(p: &ModelParams, block: usize, idx: usize, delta: f64, x: &TimeSeries, y: usize, seed: u64) -> f64 {
    let mut q = p.clone();
    q.blocks_mut()[block][idx] += delta;
    loss_and_grad(&q, x, y, seed).unwrap().0
}

fn check_model_gradient(p: &ModelParams, x: &TimeSeries, y: usize, seed: u64) -> f64 {
    let (_, g): (f64, GradBundle) = loss_and_grad(p, x, y, seed).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (b, block) in g.blocks().iter().enumerate() {
        for (i, &gi) in block.iter().enumerate() {
            let fd = (perturbed_loss(p, b, i, h, x, y, seed) - perturbed_loss(p, b, i, -h, x, y, seed)) / (2.0 * h);
            worst = worst.max(rel_err(gi, fd, 1e-4));
        }
    }
    worst
}

fn small_model(seed: u64, c: f64) -> ModelParams {
    let hyper = Hyper {
        level: 2,
        samples: 2,
        strategy: TimeStrategy::Midpoints,
        norm: NormConfig::new(c, 1.0).unwrap(),
        v_init_scale: 0.3,
        seed,
        ..Hyper::default()
    };
    let mut p = ModelParams::init(1, 4, 2, hyper).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in p.readout_w.iter_mut().chain(p.readout_b.iter_mut()) {
        *w = rng.random_range(-1.0..1.0);
    }
    let a = p.augmenter.as_mut().unwrap();
    for w in a.b_m.iter_mut().chain(a.b_v.iter_mut()) {
        *w = 0.2 * rng.random_range(-1.0..1.0);
    }
    p
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let x = TimeSeries::on_unit_grid(vec![0.0, 1.3, -0.4, 2.1], 1).unwrap();
    // C = 1.01 keeps the dilation active; C = 100 exercises the identity branch
    for (seed, c) in [(1, 1.01), (2, 1.5), (3, 100.0)] {
        let p = small_model(seed, c);
        let worst = check_model_gradient(&p, &x, 1, 99);
        assert!(worst < 1e-4, "seed {seed}, C {c}: relative error {worst:e}");
    }
}

#[test]
fn banded_and_extended_model_gradient() {
    let x = TimeSeries::on_unit_grid(vec![0.0, 0.5, 0.9, 1.1, 0.2], 1).unwrap();
    let hyper = Hyper {
        level: 2,
        samples: 2,
        strategy: TimeStrategy::Extended {
            before: 1,
            after: 1,
            margin: None,
        },
        band: Some(2),
        norm: NormConfig::new(1.2, 2.0).unwrap(),
        v_init_scale: 0.3,
        ..Hyper::default()
    };
    let mut p = ModelParams::init(1, 5, 3, hyper).unwrap();
    p.readout_w.iter_mut().enumerate().for_each(|(i, w)| *w = (1.7 * i as f64).cos());
    let worst = check_model_gradient(&p, &x, 2, 4);
    assert!(worst < 1e-4, "relative error {worst:e}");
}
