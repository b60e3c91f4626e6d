//! Normalized expected-signature estimation over an ensemble of series.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::normalization::{normalize, NormConfig};
use crate::signature::{signature, time_augment, TimeSeries};
use crate::tensor::TruncTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpSigEstimate {
    /// Component-wise mean of the normalized signatures.
    pub mean_tensor: TruncTensor,
    pub k: usize,
    pub lambdas: Vec<f64>,
}

impl ExpSigEstimate {
    /// Levels `1..=L` of the mean, the feature vector fed to a readout.
    pub fn features(&self) -> &[f64] {
        self.mean_tensor.without_scalar()
    }
}

/// Sum of `items` by pairwise recursion whose split points depend only on
/// the number of items.
pub fn pairwise_sum(items: &[TruncTensor]) -> Result<TruncTensor> {
    match items.len() {
        0 => Err(Error::invalid("cannot sum an empty batch")),
        1 => Ok(items[0].clone()),
        n => {
            let (l, r) = items.split_at(n / 2);
            pairwise_sum(l)?.add(&pairwise_sum(r)?)
        }
    }
}

/// Pairwise-tree mean of equally shaped tensors.
pub fn pairwise_mean(items: &[TruncTensor]) -> Result<TruncTensor> {
    Ok(pairwise_sum(items)?.scale(1.0 / items.len() as f64))
}

/// Time-augments, signs, normalizes and averages each series of the batch.
pub fn expected_signature(
    batch: &[TimeSeries],
    level: usize,
    cfg: &NormConfig,
    rescale_time: bool,
) -> Result<ExpSigEstimate> {
    if batch.is_empty() {
        return Err(Error::invalid("expected signature needs at least one series"));
    }
    let d = batch[0].dim();
    if let Some(bad) = batch.iter().find(|x| x.dim() != d) {
        return Err(Error::shape(format!(
            "batch mixes dimensions {d} and {}",
            bad.dim()
        )));
    }
    let normalized: Vec<(TruncTensor, f64)> = batch
        .par_iter()
        .map(|x| normalize(&signature(&time_augment(x, rescale_time), level)?, cfg))
        .collect::<Result<_>>()?;
    let (tensors, lambdas): (Vec<_>, Vec<_>) = normalized.into_iter().unzip();
    Ok(ExpSigEstimate {
        mean_tensor: pairwise_mean(&tensors)?,
        k: batch.len(),
        lambdas,
    })
}

/// Upper bound `exp(-2σ²K / (2R)²)` on the probability that the `K`-sample
/// estimate deviates from its mean by at least `sigma`.
pub fn hoeffding_bound(r: f64, sigma: f64, k: usize) -> f64 {
    (-2.0 * sigma * sigma * k as f64 / (4.0 * r * r)).exp()
}

/// Smallest `K` whose Hoeffding bound is at most `delta`.
pub fn hoeffding_sample_size(r: f64, sigma: f64, delta: f64) -> Result<u64> {
    if !(sigma > 0.0) || !(delta > 0.0) || !(r > 0.0) {
        return Err(Error::invalid(format!(
            "need R, sigma, delta > 0; got R={r}, sigma={sigma}, delta={delta}"
        )));
    }
    if delta >= 1.0 {
        return Ok(0);
    }
    let k = (4.0 * r * r) * (1.0 / delta).ln() / (2.0 * sigma * sigma);
    Ok(k.ceil() as u64)
}
