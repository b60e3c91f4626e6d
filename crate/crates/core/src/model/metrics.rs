//! Weighted accuracy, cross-validated grid search and the output-variance
//! study.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::train::{evaluate, train_sgd, TrainConfig};
use super::{forward, Hyper, ModelParams};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;

/// Mean over classes `0..n_classes` of the per-class recall.
pub fn weighted_accuracy(preds: &[usize], truth: &[usize], n_classes: usize) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut hits = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    for (&p, &t) in preds.iter().zip(truth) {
        if t >= n_classes {
            return Err(Error::invalid(format!("label {t} outside 0..{n_classes}")));
        }
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    if let Some(c) = totals.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("class {c} has no items")));
    }
    let sum: f64 = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &n)| h as f64 / n as f64)
        .sum();
    Ok(sum / n_classes as f64)
}

/// Plain fraction of correct predictions.
pub fn accuracy(preds: &[usize], truth: &[usize]) -> f64 {
    let hits = preds.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Stratified fold index of every item: each class is shuffled with `seed`
/// and dealt round-robin.
pub fn stratified_folds(data: &Dataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid("need at least 2 folds"));
    }
    let mut assignment = vec![0; data.len()];
    for c in 0..data.class_count() {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.items[i].1 == c).collect();
        if members.len() < folds {
            return Err(Error::invalid(format!(
                "class {c} has {} items, fewer than {folds} folds",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64, 0x5f0d));
        members.shuffle(&mut rng);
        for (k, i) in members.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best: usize,
    /// Per grid point: the hyperparameters and the validation weighted
    /// accuracy of each fold.
    pub table: Vec<(Hyper, Vec<f64>)>,
}

impl CvResult {
    pub fn mean(&self, i: usize) -> f64 {
        let s = &self.table[i].1;
        s.iter().sum::<f64>() / s.len() as f64
    }

    pub fn best_hyper(&self) -> Hyper {
        self.table[self.best].0
    }
}

/// Stratified `folds`-fold cross-validation of every grid point; the best
/// mean validation weighted accuracy wins (first on ties).
pub fn grid_search_cv(space: &[Hyper], data: &Dataset, folds: usize, cfg: &TrainConfig) -> Result<CvResult> {
    if space.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let assignment = stratified_folds(data, folds, cfg.seed)?;
    let split = |k: usize| {
        let train: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != k).collect();
        let val: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == k).collect();
        (data.subset(&train), data.subset(&val))
    };
    let mut table = Vec::with_capacity(space.len());
    for hyper in space {
        let mut scores = Vec::with_capacity(folds);
        for k in 0..folds {
            let (train, val) = split(k);
            let p = ModelParams::init(data.dim(), data.n_points(), data.class_count(), *hyper)?;
            let (p, _) = train_sgd(p, &train, None, cfg)?;
            scores.push(evaluate(&p, &val, derive_seed(cfg.seed, 0xc5, k as u64))?);
        }
        table.push((*hyper, scores));
    }
    let mut result = CvResult { best: 0, table };
    for i in 1..result.table.len() {
        if result.mean(i) > result.mean(result.best) {
            result.best = i;
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    /// Spectral norm of the `D × D` output covariance of each test series.
    pub norms: Vec<f64>,
    /// `(lower edge, upper edge, density)` per histogram bin.
    pub histogram: Vec<(f64, f64, f64)>,
}

impl VarianceReport {
    pub fn median(&self) -> f64 {
        let mut v = self.norms.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return 0.0;
        }
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

pub const HISTOGRAM_BINS: usize = 20;

/// Runs `runs` stochastic forward passes per test series and reports the
/// 2-norm of the sample covariance of the output probability vectors.
pub fn output_variance_analysis(p: &ModelParams, test: &Dataset, runs: usize, seed: u64) -> Result<VarianceReport> {
    if runs == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    let norms = test
        .items
        .par_iter()
        .enumerate()
        .map(|(i, (x, _))| {
            if runs == 1 {
                forward(p, x, derive_seed(seed, 0, i as u64))?;
                return Ok(0.0);
            }
            let outputs = (0..runs)
                .map(|r| forward(p, x, derive_seed(seed, r as u64, i as u64)))
                .collect::<Result<Vec<_>>>()?;
            Ok(covariance_norm(&outputs))
        })
        .collect::<Result<Vec<f64>>>()?;
    let histogram = density_histogram(&norms, HISTOGRAM_BINS);
    Ok(VarianceReport { norms, histogram })
}

/// Largest eigenvalue of the unbiased sample covariance of `rows`.
pub fn covariance_norm(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let d = rows[0].len();
    let data = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = data.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| data[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, e| m.max(e.abs()))
}

/// Equal-width histogram normalized to unit area; a single zero-width bin
/// when all values coincide.
pub fn density_histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, f64)> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![(lo, hi, 1.0)];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = values.len() as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            (
                lo + b as f64 * width,
                lo + (b + 1) as f64 * width,
                c as f64 / (total * width),
            )
        })
        .collect()
}
