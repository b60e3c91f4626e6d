mod common;

use expsig::augment::{fit_gp_hyper, gp_posterior, new_times_extended, new_times_midpoints, Slot};
use expsig::baselines::{
    cubic_spline_augment, fft_augment, gp_mean_augment, noaug_classify, noaug_params, refine_dataset, ModelKind,
};
use expsig::model::train::predict_all;
use expsig::model::{train_sgd, weighted_accuracy, Hyper, TrainConfig};
use expsig::TimeSeries;
use std::f64::consts::PI;

#[test]
fn fft_interpolates_represented_sinusoids() {
    let n = 16;
    // the periodic extension has period n samples
    let period = n as f64 / (n - 1) as f64;
    let f = |t: f64| 0.3 + (2.0 * PI * 2.0 * t / period).sin() - 0.5 * (2.0 * PI * 5.0 * t / period).cos();
    let x = TimeSeries::on_unit_grid((0..n).map(|i| f(i as f64 / (n - 1) as f64)).collect(), 1).unwrap();
    for factor in [2, 3] {
        let y = fft_augment(&x, factor).unwrap();
        assert_eq!(y.len(), (n - 1) * factor + 1);
        for (t, v) in y.times().iter().zip(y.values()) {
            assert!((v - f(*t)).abs() < 1e-8, "factor {factor} t={t}: {v} vs {}", f(*t));
        }
    }
    let back = fft_augment(&x, 1).unwrap();
    for (a, b) in back.values().iter().zip(x.values()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn spline_reproduces_a_cubic_away_from_the_ends() {
    let n = 60;
    let p = |t: f64| t * t * t - 0.5 * t * t + 0.2;
    let x = TimeSeries::on_unit_grid((0..n).map(|i| p(i as f64 / (n - 1) as f64)).collect(), 1).unwrap();
    let grid = new_times_midpoints(x.times()).unwrap();
    let y = cubic_spline_augment(&x, &grid).unwrap();
    for (row, slot) in grid.layout().iter().enumerate() {
        let (t, v) = (y.times()[row], y.values()[row]);
        match *slot {
            Slot::Original(i) => assert!((v - x.values()[i]).abs() < 1e-12),
            Slot::New(j) if (20..n - 21).contains(&j) => assert!((v - p(t)).abs() < 1e-8, "t={t}: {}", v - p(t)),
            Slot::New(_) => {}
        }
    }
}

#[test]
fn gp_mean_refinement_uses_the_fitted_posterior() {
    let x = TimeSeries::on_unit_grid(vec![0.1, 0.8, 0.4, -0.3, -0.6, 0.2, 0.9], 1).unwrap();
    let grid = new_times_midpoints(x.times()).unwrap();
    let y = gp_mean_augment(&x, &grid).unwrap();
    let post = gp_posterior(&x, grid.new_times(), &fit_gp_hyper(&x)).unwrap();
    for (row, slot) in grid.layout().iter().enumerate() {
        match *slot {
            Slot::Original(i) => assert_eq!(y.values()[row], x.values()[i]),
            Slot::New(j) => assert_eq!(y.values()[row], post.mean[j]),
        }
    }
    let far = new_times_extended(x.times(), 0, 1, 1e4).unwrap();
    let z = gp_mean_augment(&x, &far).unwrap();
    let mean = x.values().iter().sum::<f64>() / 7.0;
    assert!((z.values().last().unwrap() - mean).abs() < 1e-12);
}

#[test]
fn refinements_are_deterministic_and_classifiable() {
    let data = common::ramps(3, 8, 2);
    let p = noaug_params(1, 2, Hyper::default()).unwrap();
    for kind in ModelKind::ALL {
        let a = refine_dataset(kind, &data).unwrap();
        assert_eq!(a, refine_dataset(kind, &data).unwrap());
        if matches!(kind, ModelKind::Fft | ModelKind::Spline | ModelKind::Gp) {
            assert_eq!(a.n_points(), 15);
        }
        for (x, _) in &a.items {
            let probs = noaug_classify(&p, x).unwrap();
            assert!(probs.iter().all(|&q| (q - 0.5).abs() < 1e-15));
        }
    }
}

#[test]
fn noaug_separates_ramps() {
    let data = common::ramps(10, 8, 3);
    let p = noaug_params(1, 2, Hyper::default()).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1.0,
        epochs: 20,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (p, _) = train_sgd(p, &data, None, &cfg).unwrap();
    let preds = predict_all(&p, &data, 0).unwrap();
    assert_eq!(weighted_accuracy(&preds, &data.labels(), 2).unwrap(), 1.0);
    for (x, _) in &data.items {
        let probs = noaug_classify(&p, x).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(probs, noaug_classify(&p, x).unwrap());
    }
}
