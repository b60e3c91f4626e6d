//! The end-to-end classifier: learned augmentation, `K` sampled series,
//! normalized expected signature, linear readout and softmax.

pub mod io;
pub mod metrics;
pub mod train;

pub use metrics::{grid_search_cv, output_variance_analysis, weighted_accuracy, CvResult, VarianceReport};
pub use train::{train_sgd, EpochRecord, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::augment::{
    augmenter_forward, band_mask, draw_noise, in_band, interleave, packed_len, sample_with_noise,
    AugmenterParams, LowerTriangular, Slot, TimeGrid, TimeStrategy,
};
use crate::error::{Error, Result};
use crate::normalization::{lambda_gradient_at, normalize, NormConfig};
use crate::signature::{signature, signature_vjp, time_augment, unit_grid, TimeSeries};
use crate::tensor::{feature_len, TruncTensor};

/// Architecture and sampling hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    /// Signature truncation level `L`.
    pub level: usize,
    /// Sampled series per input `K`.
    pub samples: usize,
    pub strategy: TimeStrategy,
    pub norm: NormConfig,
    /// Band width for `V`; `None` keeps the full lower triangle.
    pub band: Option<usize>,
    /// Without augmentation the model is the plain signature classifier.
    pub augment: bool,
    pub rescale_time: bool,
    pub v_init_scale: f64,
    /// Seed of the parameter initialization.
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            level: 3,
            samples: 16,
            strategy: TimeStrategy::Midpoints,
            norm: NormConfig::default(),
            band: None,
            augment: true,
            rescale_time: true,
            v_init_scale: 1e-2,
            seed: 0,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.level == 0 {
            return Err(Error::invalid("signature level must be at least 1"));
        }
        if self.augment && self.samples == 0 {
            return Err(Error::invalid("sample count K must be at least 1"));
        }
        self.norm.validate()
    }
}

/// Trainable state plus the hyperparameters it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    pub n_points: usize,
    pub classes: usize,
    /// Class names, indexed by class.
    pub labels: Vec<String>,
    pub hyper: Hyper,
    /// `None` for the plain (non-augmented) classifier.
    pub augmenter: Option<AugmenterParams>,
    /// `D × P`, row-major.
    pub readout_w: Vec<f64>,
    pub readout_b: Vec<f64>,
}

impl ModelParams {
    /// Augmenter initialized to linear interpolation with small random `V`,
    /// readout zero.
    pub fn init(dim: usize, n_points: usize, classes: usize, hyper: Hyper) -> Result<Self> {
        hyper.validate()?;
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        if dim == 0 || n_points < 2 {
            return Err(Error::invalid("series need d ≥ 1 and N ≥ 2"));
        }
        let augmenter = if hyper.augment {
            let grid = hyper.strategy.grid(&unit_grid(n_points))?;
            Some(AugmenterParams::init(&grid, dim, hyper.v_init_scale, hyper.seed))
        } else {
            None
        };
        let p = feature_len(dim + 1, hyper.level);
        Ok(Self {
            dim,
            n_points,
            classes,
            labels: (0..classes).map(|c| c.to_string()).collect(),
            hyper,
            augmenter,
            readout_w: vec![0.0; classes * p],
            readout_b: vec![0.0; classes],
        })
    }

    /// `P = Σ_{n=1}^{L} (d+1)^n`
    pub fn feature_len(&self) -> usize {
        feature_len(self.dim + 1, self.hyper.level)
    }

    /// Trainable blocks in a fixed order: `W_m, b_m, W_V, b_V, W, b`.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(6);
        if let Some(a) = &self.augmenter {
            out.extend([&a.w_m[..], &a.b_m[..], &a.w_v[..], &a.b_v[..]]);
        }
        out.extend([&self.readout_w[..], &self.readout_b[..]]);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(6);
        if let Some(a) = &mut self.augmenter {
            out.extend([&mut a.w_m[..], &mut a.b_m[..], &mut a.w_v[..], &mut a.b_v[..]]);
        }
        out.extend([&mut self.readout_w[..], &mut self.readout_b[..]]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn check_input(&self, x: &TimeSeries) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::shape(format!(
                "model expects dimension {}, series has {}",
                self.dim,
                x.dim()
            )));
        }
        if self.augmenter.is_some() && x.len() != self.n_points {
            return Err(Error::shape(format!(
                "model expects {} observations, series has {}",
                self.n_points,
                x.len()
            )));
        }
        Ok(())
    }

    fn logits(&self, features: &[f64]) -> Vec<f64> {
        let p = features.len();
        self.readout_b
            .iter()
            .enumerate()
            .map(|(c, &b)| {
                b + self.readout_w[c * p..(c + 1) * p]
                    .iter()
                    .zip(features)
                    .map(|(w, f)| w * f)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// Gradient with the same block layout as [`ModelParams::blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub w_m: Vec<f64>,
    pub b_m: Vec<f64>,
    pub w_v: Vec<f64>,
    pub b_v: Vec<f64>,
    pub readout_w: Vec<f64>,
    pub readout_b: Vec<f64>,
}

impl GradBundle {
    pub fn zeros_like(p: &ModelParams) -> Self {
        let (w_m, b_m, w_v, b_v) = match &p.augmenter {
            Some(a) => (
                vec![0.0; a.w_m.len()],
                vec![0.0; a.b_m.len()],
                vec![0.0; a.w_v.len()],
                vec![0.0; a.b_v.len()],
            ),
            None => Default::default(),
        };
        Self {
            w_m,
            b_m,
            w_v,
            b_v,
            readout_w: vec![0.0; p.readout_w.len()],
            readout_b: vec![0.0; p.readout_b.len()],
        }
    }

    /// Blocks in the order of [`ModelParams::blocks`]; augmenter blocks are
    /// omitted when empty.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(6);
        if !self.b_m.is_empty() {
            out.extend([&self.w_m[..], &self.b_m[..], &self.w_v[..], &self.b_v[..]]);
        }
        out.extend([&self.readout_w[..], &self.readout_b[..]]);
        out
    }

    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Adds one per-sample contribution scaled by `scale`.
    pub(crate) fn accumulate(&mut self, s: &SampleGrad, scale: f64) {
        if let Some(aug) = &s.augmenter {
            let f = &aug.features;
            let cols = f.len();
            for (r, &g) in aug.dm.iter().enumerate() {
                self.b_m[r] += scale * g;
                if g != 0.0 {
                    let row = &mut self.w_m[r * cols..(r + 1) * cols];
                    row.iter_mut().zip(f).for_each(|(w, x)| *w += scale * g * x);
                }
            }
            for (r, &g) in aug.dv.iter().enumerate() {
                self.b_v[r] += scale * g;
                if g != 0.0 {
                    let row = &mut self.w_v[r * cols..(r + 1) * cols];
                    row.iter_mut().zip(f).for_each(|(w, x)| *w += scale * g * x);
                }
            }
        }
        let p = s.features.len();
        for (c, &g) in s.dlogits.iter().enumerate() {
            self.readout_b[c] += scale * g;
            let row = &mut self.readout_w[c * p..(c + 1) * p];
            row.iter_mut()
                .zip(&s.features)
                .for_each(|(w, x)| *w += scale * g * x);
        }
    }
}

/// Gradient of one sample in factored form: every weight gradient is an
/// outer product of an output cotangent with the layer input.
#[derive(Debug, Clone)]
pub(crate) struct SampleGrad {
    pub(crate) features: Vec<f64>,
    pub(crate) dlogits: Vec<f64>,
    pub(crate) augmenter: Option<AugmenterGrad>,
}

#[derive(Debug, Clone)]
pub(crate) struct AugmenterGrad {
    pub(crate) features: Vec<f64>,
    pub(crate) dm: Vec<f64>,
    pub(crate) dv: Vec<f64>,
}

/// Everything the backward pass needs from one forward evaluation.
struct Trace {
    grid: Option<TimeGrid>,
    aug_features: Vec<f64>,
    eps: Vec<Vec<f64>>,
    /// Time-augmented series, their signatures and normalization constants.
    paths: Vec<(TimeSeries, TruncTensor, f64)>,
    features: Vec<f64>,
}

fn run_forward(p: &ModelParams, x: &TimeSeries, seed: u64, keep: bool) -> Result<Trace> {
    p.check_input(x)?;
    let h = &p.hyper;
    let level = h.level;
    let mut paths = Vec::new();
    let mut sum: Option<TruncTensor> = None;
    let mut push = |z: TimeSeries| -> Result<()> {
        let s = signature(&z, level)?;
        let (normalized, lam) = normalize(&s, &h.norm)?;
        match &mut sum {
            Some(acc) => acc.axpy(1.0, &normalized)?,
            None => sum = Some(normalized),
        }
        if keep {
            paths.push((z, s, lam));
        }
        Ok(())
    };
    let (grid, aug_features, eps, count) = match &p.augmenter {
        None => {
            push(time_augment(x, h.rescale_time))?;
            (None, Vec::new(), Vec::new(), 1)
        }
        Some(aug) => {
            let grid = h.strategy.grid(x.times())?;
            let (m, v) = augmenter_forward(aug, x, &grid)?;
            let v = match h.band {
                Some(alpha) => band_mask(&v, alpha),
                None => v,
            };
            let eps = draw_noise(m.len(), h.samples, seed);
            for y in sample_with_noise(&m, &v, &eps) {
                push(time_augment(&interleave(x, &y, &grid)?, h.rescale_time))?;
            }
            let f = if keep { aug.features(x, &grid)? } else { Vec::new() };
            (Some(grid), f, eps, h.samples)
        }
    };
    let mean = sum.expect("at least one path").scale(1.0 / count as f64);
    Ok(Trace {
        grid,
        aug_features,
        eps,
        paths,
        features: mean.without_scalar().to_vec(),
    })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Mean normalized expected signature (levels `1..=L`) fed to the readout.
pub fn features(p: &ModelParams, x: &TimeSeries, seed: u64) -> Result<Vec<f64>> {
    Ok(run_forward(p, x, seed, false)?.features)
}

/// Class probabilities.
pub fn forward(p: &ModelParams, x: &TimeSeries, seed: u64) -> Result<Vec<f64>> {
    let f = features(p, x, seed)?;
    Ok(softmax(&p.logits(&f)))
}

/// Most probable class.
pub fn predict(p: &ModelParams, x: &TimeSeries, seed: u64) -> Result<usize> {
    let probs = forward(p, x, seed)?;
    Ok(argmax(&probs))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Cross-entropy `-log p_label` and its exact gradient for the noise drawn
/// from `seed`.
pub fn loss_and_grad(p: &ModelParams, x: &TimeSeries, label: usize, seed: u64) -> Result<(f64, GradBundle)> {
    let (loss, _, s) = sample_loss_and_grad(p, x, label, seed)?;
    let mut g = GradBundle::zeros_like(p);
    g.accumulate(&s, 1.0);
    Ok((loss, g))
}

/// Loss, class probabilities and factored gradient of one sample.
pub(crate) fn sample_loss_and_grad(
    p: &ModelParams,
    x: &TimeSeries,
    label: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>, SampleGrad)> {
    if label >= p.classes {
        return Err(Error::invalid(format!("label {label} outside 0..{}", p.classes)));
    }
    let trace = run_forward(p, x, seed, true)?;
    let logits = p.logits(&trace.features);
    let probs = softmax(&logits);
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logits.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];

    let mut dlogits = probs.clone();
    dlogits[label] -= 1.0;
    let width = trace.features.len();
    let mut dphi = vec![0.0; width];
    for (c, &g) in dlogits.iter().enumerate() {
        for (d, w) in dphi.iter_mut().zip(&p.readout_w[c * width..(c + 1) * width]) {
            *d += g * w;
        }
    }

    let augmenter = match (&p.augmenter, &trace.grid) {
        (Some(aug), Some(grid)) => Some(augmenter_backward(p, aug, grid, &trace, &dphi)?),
        _ => None,
    };
    Ok((
        loss,
        probs,
        SampleGrad {
            features: trace.features,
            dlogits,
            augmenter,
        },
    ))
}

fn augmenter_backward(
    p: &ModelParams,
    aug: &AugmenterParams,
    grid: &TimeGrid,
    trace: &Trace,
    dphi: &[f64],
) -> Result<AugmenterGrad> {
    let h = &p.hyper;
    let level = h.level;
    let d = p.dim;
    let k = trace.paths.len() as f64;
    let mp = aug.mean_len();

    let mut cot = TruncTensor::zeros(d + 1, level);
    cot.as_mut_slice()[1..].copy_from_slice(dphi);
    let cot = cot.scale(1.0 / k);

    let new_rows: Vec<(usize, usize)> = grid
        .layout()
        .iter()
        .enumerate()
        .filter_map(|(row, slot)| match *slot {
            Slot::New(j) => Some((row, j)),
            Slot::Original(_) => None,
        })
        .collect();

    let mut dm = vec![0.0; mp];
    let mut dv = vec![0.0; packed_len(mp)];
    for ((z, s, lam), eps) in trace.paths.iter().zip(&trace.eps) {
        // through Λ = δ_λ(S) with λ = λ(S)
        let mut ds = TruncTensor::zeros(d + 1, level);
        let mut dlam = 0.0;
        let mut pow = 1.0;
        for n in 1..=level {
            let prev = pow; // λ^{n-1}
            pow *= lam;
            let c = cot.get(n);
            dlam += n as f64 * prev * s.get(n).iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            for (o, &ci) in ds.level_mut(n).iter_mut().zip(c) {
                *o = pow * ci;
            }
        }
        if dlam != 0.0 {
            let glam = lambda_gradient_at(s, *lam, &h.norm)?;
            ds.axpy(dlam, &glam)?;
        }
        let dz = signature_vjp(z, level, &ds)?;

        // rows of sampled stamps, value channels only
        let mut dy = vec![0.0; mp];
        for &(row, j) in &new_rows {
            for c in 0..d {
                dy[j * d + c] = dz[row * (d + 1) + c];
            }
        }
        for i in 0..mp {
            dm[i] += dy[i];
            if dy[i] == 0.0 {
                continue;
            }
            let base = packed_len(i);
            for j in 0..=i {
                if h.band.is_none_or(|alpha| in_band(i, j, alpha)) {
                    dv[base + j] += dy[i] * eps[j];
                }
            }
        }
    }
    Ok(AugmenterGrad {
        features: trace.aug_features.clone(),
        dm,
        dv,
    })
}

/// Covariance root `V` the augmenter produces for `x` (band mask applied).
pub fn augmenter_output(p: &ModelParams, x: &TimeSeries) -> Result<Option<(Vec<f64>, LowerTriangular)>> {
    let Some(aug) = &p.augmenter else {
        return Ok(None);
    };
    let grid = p.hyper.strategy.grid(x.times())?;
    let (m, v) = augmenter_forward(aug, x, &grid)?;
    let v = match p.hyper.band {
        Some(alpha) => band_mask(&v, alpha),
        None => v,
    };
    Ok(Some((m, v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (ModelParams, TimeSeries) {
        let hyper = Hyper {
            level: 2,
            samples: 2,
            ..Hyper::default()
        };
        let p = ModelParams::init(1, 4, 3, hyper).unwrap();
        let x = TimeSeries::on_unit_grid(vec![0.0, 0.4, -0.2, 0.5], 1).unwrap();
        (p, x)
    }

    #[test]
    fn zero_readout_is_uniform() {
        let (p, x) = toy();
        let probs = forward(&p, &x, 3).unwrap();
        for q in probs {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shapes_follow_the_hyperparameters() {
        let (p, _) = toy();
        assert_eq!(p.feature_len(), 2 + 4);
        let a = p.augmenter.as_ref().unwrap();
        assert_eq!(a.mean_len(), 3);
        assert_eq!(a.feature_len(), 4 + 4 + 3);
        assert_eq!(a.w_v.len(), 6 * 11);
        let g = GradBundle::zeros_like(&p);
        let lens: Vec<usize> = g.blocks().iter().map(|b| b.len()).collect();
        let want: Vec<usize> = p.blocks().iter().map(|b| b.len()).collect();
        assert_eq!(lens, want);
    }

    #[test]
    fn readout_gradient_is_softmax_residual_times_features() {
        let (mut p, x) = toy();
        for (i, w) in p.readout_w.iter_mut().enumerate() {
            *w = 0.1 * (i as f64).sin();
        }
        let (_, g) = loss_and_grad(&p, &x, 1, 5).unwrap();
        let probs = forward(&p, &x, 5).unwrap();
        let f = features(&p, &x, 5).unwrap();
        for c in 0..3 {
            let r = probs[c] - if c == 1 { 1.0 } else { 0.0 };
            assert!((g.readout_b[c] - r).abs() < 1e-14);
            for (j, fj) in f.iter().enumerate() {
                assert!((g.readout_w[c * f.len() + j] - r * fj).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        let (p, _) = toy();
        let y = TimeSeries::on_unit_grid(vec![0.0; 5], 1).unwrap();
        assert!(forward(&p, &y, 0).is_err());
        let x = TimeSeries::on_unit_grid(vec![0.0; 4], 1).unwrap();
        assert!(loss_and_grad(&p, &x, 3, 0).is_err());
    }
}
