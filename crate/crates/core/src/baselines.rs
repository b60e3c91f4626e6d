//! Reference classifiers: the plain normalized-signature model (NoAug), and
//! NoAug fed with series refined by FFT, natural cubic spline or GP
//! posterior-mean interpolation.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::augment::{fit_gp_hyper, gp_posterior, interleave, TimeGrid, TimeStrategy};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::model::train::evaluate;
use crate::model::{forward, train_sgd, Hyper, ModelParams, TrainConfig};
use crate::signature::TimeSeries;

/// NoAug model: time augmentation, signature, normalization, readout.
pub fn noaug_params(dim: usize, classes: usize, hyper: Hyper) -> Result<ModelParams> {
    ModelParams::init(
        dim,
        2,
        classes,
        Hyper {
            augment: false,
            ..hyper
        },
    )
}

/// Class probabilities of a NoAug model (deterministic).
pub fn noaug_classify(p: &ModelParams, x: &TimeSeries) -> Result<Vec<f64>> {
    if p.augmenter.is_some() {
        return Err(Error::invalid("expected a model without augmentation"));
    }
    forward(p, x, 0)
}

/// Linear interpolation of every channel onto `times`.
fn linear_resample(x: &TimeSeries, times: &[f64]) -> Result<TimeSeries> {
    let t = x.times();
    let d = x.dim();
    let mut values = Vec::with_capacity(times.len() * d);
    for &s in times {
        let i = t.partition_point(|&ti| ti <= s).clamp(1, t.len() - 1) - 1;
        let w = (s - t[i]) / (t[i + 1] - t[i]);
        for c in 0..d {
            values.push((1.0 - w) * x.row(i)[c] + w * x.row(i + 1)[c]);
        }
    }
    TimeSeries::new(times.to_vec(), values, d)
}

fn is_uniform(times: &[f64]) -> bool {
    let n = times.len();
    let step = (times[n - 1] - times[0]) / (n - 1) as f64;
    times
        .iter()
        .enumerate()
        .all(|(i, &t)| (t - (times[0] + i as f64 * step)).abs() <= 1e-9 * step.max(1.0))
}

/// Trigonometric interpolation onto a grid `factor` times finer: the
/// spectrum of the (periodically extended) series is zero-padded and
/// inverted, and the points inside the original time span are kept, giving
/// `(N - 1)·factor + 1` observations. Non-uniform inputs are first resampled
/// linearly onto a uniform grid with the same endpoints.
pub fn fft_augment(x: &TimeSeries, factor: usize) -> Result<TimeSeries> {
    if factor == 0 {
        return Err(Error::invalid("FFT refinement factor must be at least 1"));
    }
    let n = x.len();
    let t0 = x.times()[0];
    let step = (x.times()[n - 1] - t0) / (n - 1) as f64;
    let uniform;
    let x = if is_uniform(x.times()) {
        x
    } else {
        let times: Vec<f64> = (0..n).map(|i| t0 + i as f64 * step).collect();
        uniform = linear_resample(x, &times)?;
        &uniform
    };
    if factor == 1 {
        return Ok(x.clone());
    }
    let big = n * factor;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(big);
    let keep = (n - 1) * factor + 1;
    let d = x.dim();
    let mut values = vec![0.0; keep * d];
    for c in 0..d {
        let mut spec: Vec<Complex64> = x.channel(c).into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        fwd.process(&mut spec);
        let mut padded = vec![Complex64::new(0.0, 0.0); big];
        let half = n / 2;
        for k in 0..n {
            if n % 2 == 0 && k == half {
                // split the Nyquist bin so the result stays real
                padded[half] = spec[half] * 0.5;
                padded[big - half] = spec[half] * 0.5;
            } else if k < n.div_ceil(2) {
                padded[k] = spec[k];
            } else {
                padded[big - (n - k)] = spec[k];
            }
        }
        inv.process(&mut padded);
        for j in 0..keep {
            values[j * d + c] = padded[j].re / n as f64;
        }
    }
    let times = (0..keep).map(|j| t0 + j as f64 * step / factor as f64).collect();
    TimeSeries::new(times, values, d)
}

/// Coefficients of the natural cubic spline through `(t, y)`: the second
/// derivatives at the knots.
fn natural_second_derivatives(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // tridiagonal system for interior knots, Thomas algorithm
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    let mut upper = vec![0.0; k];
    for i in 0..k {
        let h0 = t[i + 1] - t[i];
        let h1 = t[i + 2] - t[i + 1];
        diag[i] = 2.0 * (h0 + h1);
        upper[i] = h1;
        rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
    }
    for i in 1..k {
        let lower = t[i + 1] - t[i];
        let w = lower / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for i in (0..k - 1).rev() {
        m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
    }
    m
}

fn spline_eval(t: &[f64], y: &[f64], m: &[f64], s: f64) -> f64 {
    let n = t.len();
    // linear continuation outside the knots, matching the zero end curvature
    if s <= t[0] {
        let h = t[1] - t[0];
        let slope = (y[1] - y[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0;
        return y[0] + slope * (s - t[0]);
    }
    if s >= t[n - 1] {
        let h = t[n - 1] - t[n - 2];
        let slope = (y[n - 1] - y[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0;
        return y[n - 1] + slope * (s - t[n - 1]);
    }
    let i = t.partition_point(|&ti| ti <= s).min(n - 1) - 1;
    let h = t[i + 1] - t[i];
    let a = (t[i + 1] - s) / h;
    let b = (s - t[i]) / h;
    a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
}

/// Natural cubic spline of every channel evaluated at the new stamps of
/// `grid`, merged with the original observations.
pub fn cubic_spline_augment(x: &TimeSeries, grid: &TimeGrid) -> Result<TimeSeries> {
    if x.len() < 3 {
        return Err(Error::invalid("cubic spline needs at least 3 observations"));
    }
    let t = x.times();
    let d = x.dim();
    let new = grid.new_times();
    let mut sample = vec![0.0; new.len() * d];
    for c in 0..d {
        let y = x.channel(c);
        let m = natural_second_derivatives(t, &y);
        for (j, &s) in new.iter().enumerate() {
            sample[j * d + c] = spline_eval(t, &y, &m, s);
        }
    }
    interleave(x, &sample, grid)
}

/// GP posterior mean at the new stamps (hyperparameters fitted per series),
/// merged with the original observations.
pub fn gp_mean_augment(x: &TimeSeries, grid: &TimeGrid) -> Result<TimeSeries> {
    let h = fit_gp_hyper(x);
    let post = gp_posterior(x, grid.new_times(), &h)?;
    interleave(x, &post.mean, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    NoAug,
    Fft,
    Spline,
    Gp,
    Model,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::NoAug,
        ModelKind::Fft,
        ModelKind::Spline,
        ModelKind::Gp,
        ModelKind::Model,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::NoAug => "NoAug",
            ModelKind::Fft => "FFT",
            ModelKind::Spline => "CS",
            ModelKind::Gp => "GP",
            ModelKind::Model => "Model",
        }
    }
}

/// Applies the deterministic refinement of `kind` to every series
/// (identity for `NoAug` and `Model`). Refinements add the midpoints.
pub fn refine_dataset(kind: ModelKind, data: &Dataset) -> Result<Dataset> {
    let grid_of = |x: &TimeSeries| TimeStrategy::Midpoints.grid(x.times());
    match kind {
        ModelKind::NoAug | ModelKind::Model => Ok(data.clone()),
        ModelKind::Fft => data.map_series(|x| fft_augment(x, 2)),
        ModelKind::Spline => data.map_series(|x| cubic_spline_augment(x, &grid_of(x)?)),
        ModelKind::Gp => data.map_series(|x| gp_mean_augment(x, &grid_of(x)?)),
    }
}

/// Trains `kind` on `train` and returns the test weighted accuracy, averaged
/// over `runs` stochastic passes for the augmented model.
pub fn train_and_score(
    kind: ModelKind,
    train: &Dataset,
    test: &Dataset,
    hyper: Hyper,
    cfg: &TrainConfig,
    runs: usize,
) -> Result<f64> {
    let train = refine_dataset(kind, train)?;
    let test = refine_dataset(kind, test)?;
    let hyper = Hyper {
        augment: kind == ModelKind::Model,
        ..hyper
    };
    let p = ModelParams::init(train.dim(), train.n_points(), train.class_count(), hyper)?;
    let (p, _) = train_sgd(p, &train, None, cfg)?;
    let runs = if p.augmenter.is_some() { runs.max(1) } else { 1 };
    let scores = (0..runs)
        .into_par_iter()
        .map(|r| evaluate(&p, &test, crate::seeds::derive_seed(cfg.seed, 0xbe, r as u64)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(scores.iter().sum::<f64>() / runs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_factor_one_and_constants() {
        let x = TimeSeries::on_unit_grid(vec![0.3, -1.0, 2.0, 0.5, 0.1], 1).unwrap();
        assert_eq!(fft_augment(&x, 1).unwrap(), x);
        let c = TimeSeries::on_unit_grid(vec![1.7; 6], 1).unwrap();
        let y = fft_augment(&c, 3).unwrap();
        assert_eq!(y.len(), 16);
        for v in y.values() {
            assert!((v - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_of_collinear_points_is_linear() {
        let x = TimeSeries::on_unit_grid(vec![1.0, 2.0, 3.0], 1).unwrap();
        let g = TimeStrategy::Midpoints.grid(x.times()).unwrap();
        let y = cubic_spline_augment(&x, &g).unwrap();
        for (t, v) in y.times().iter().zip(y.values()) {
            assert!((v - (1.0 + 2.0 * t)).abs() < 1e-12);
        }
        let short = TimeSeries::on_unit_grid(vec![1.0, 2.0], 1).unwrap();
        let g = TimeStrategy::Midpoints.grid(short.times()).unwrap();
        assert!(cubic_spline_augment(&short, &g).is_err());
    }
}
