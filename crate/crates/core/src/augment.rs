//! Learned Gaussian data augmentation.
//!
//! A linear map reads a series together with its original and new time
//! stamps and produces the mean `m` and a lower-triangular square root `V`
//! of a Gaussian law over the values at the new stamps. Samples
//! `y = V ε + m` are drawn with the reparameterization trick and interleaved
//! with the original observations. The classic GP posterior used by the
//! baseline augmentation lives here as well.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::TimeSeries;

/// How the new time stamps are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeStrategy {
    /// Midpoints of every sub-interval.
    Midpoints,
    /// Midpoints plus stamps before the first and after the last
    /// observation. `margin` defaults to the mean inter-sample gap.
    Extended {
        before: usize,
        after: usize,
        margin: Option<f64>,
    },
}

impl Default for TimeStrategy {
    fn default() -> Self {
        TimeStrategy::Midpoints
    }
}

impl TimeStrategy {
    pub fn new_count(&self, n_points: usize) -> usize {
        match *self {
            TimeStrategy::Midpoints => n_points - 1,
            TimeStrategy::Extended { before, after, .. } => n_points - 1 + before + after,
        }
    }

    pub fn grid(&self, times: &[f64]) -> Result<TimeGrid> {
        match *self {
            TimeStrategy::Midpoints => new_times_midpoints(times),
            TimeStrategy::Extended {
                before,
                after,
                margin,
            } => {
                let margin = margin.unwrap_or_else(|| mean_gap(times));
                new_times_extended(times, before, after, margin)
            }
        }
    }
}

fn mean_gap(times: &[f64]) -> f64 {
    (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
}

/// Where a row of the merged series comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Original(usize),
    New(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    original: Vec<f64>,
    new: Vec<f64>,
    layout: Vec<Slot>,
}

impl TimeGrid {
    /// Builds a grid from original and new stamps, both strictly increasing.
    pub fn new(original: Vec<f64>, new: Vec<f64>) -> Result<Self> {
        for (name, ts) in [("original", &original), ("new", &new)] {
            if let Some(i) = ts.windows(2).position(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(format!(
                    "{name} time stamps not strictly increasing at index {}",
                    i + 1
                )));
            }
        }
        let mut layout = Vec::with_capacity(original.len() + new.len());
        let (mut i, mut j) = (0, 0);
        while i < original.len() || j < new.len() {
            if j == new.len() || (i < original.len() && original[i] < new[j]) {
                layout.push(Slot::Original(i));
                i += 1;
            } else if i == original.len() || new[j] < original[i] {
                layout.push(Slot::New(j));
                j += 1;
            } else {
                return Err(Error::GridCollision(new[j]));
            }
        }
        Ok(Self {
            original,
            new,
            layout,
        })
    }

    pub fn original(&self) -> &[f64] {
        &self.original
    }

    pub fn new_times(&self) -> &[f64] {
        &self.new
    }

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    pub fn merged_times(&self) -> Vec<f64> {
        self.layout
            .iter()
            .map(|s| match *s {
                Slot::Original(i) => self.original[i],
                Slot::New(j) => self.new[j],
            })
            .collect()
    }
}

pub fn new_times_midpoints(times: &[f64]) -> Result<TimeGrid> {
    if times.len() < 2 {
        return Err(Error::invalid("need at least 2 time stamps"));
    }
    let mid = times.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    TimeGrid::new(times.to_vec(), mid)
}

pub fn new_times_extended(
    times: &[f64],
    before: usize,
    after: usize,
    margin: f64,
) -> Result<TimeGrid> {
    if times.len() < 2 {
        return Err(Error::invalid("need at least 2 time stamps"));
    }
    if before + after > 0 && !(margin > 0.0) {
        return Err(Error::invalid(format!(
            "extension margin must be positive, got {margin}"
        )));
    }
    let (first, last) = (times[0], times[times.len() - 1]);
    let mut new = Vec::with_capacity(times.len() - 1 + before + after);
    for k in 0..before {
        new.push(first - margin + k as f64 * margin / before as f64);
    }
    new.extend(times.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    for k in 1..=after {
        new.push(last + k as f64 * margin / after as f64);
    }
    TimeGrid::new(times.to_vec(), new)
}

/// Lower-triangular matrix stored as its packed rows
/// `(V_11), (V_21, V_22), …`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    n: usize,
    packed: Vec<f64>,
}

pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl LowerTriangular {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            packed: vec![0.0; packed_len(n)],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut v = Self::zeros(n);
        for i in 0..n {
            v.packed[packed_len(i) + i] = 1.0;
        }
        v
    }

    pub fn from_packed(n: usize, packed: Vec<f64>) -> Result<Self> {
        if packed.len() != packed_len(n) {
            return Err(Error::shape(format!(
                "packed triangle of order {n} needs {} entries, got {}",
                packed_len(n),
                packed.len()
            )));
        }
        Ok(Self { n, packed })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[packed_len(i) + j]
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            out[i * n..i * n + i + 1].copy_from_slice(&self.packed[packed_len(i)..packed_len(i + 1)]);
        }
        out
    }

    pub fn matvec(&self, eps: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.packed[packed_len(i)..packed_len(i + 1)]
                    .iter()
                    .zip(eps)
                    .map(|(v, e)| v * e)
                    .sum()
            })
            .collect()
    }

    /// `V Vᵀ` as a dense row-major matrix.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let ri = &self.packed[packed_len(i)..packed_len(i + 1)];
            for j in 0..=i {
                let rj = &self.packed[packed_len(j)..packed_len(j + 1)];
                let v: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

/// Whether entry `(i, j)` of `V` survives the band mask.
#[inline]
pub fn in_band(i: usize, j: usize, alpha: usize) -> bool {
    j <= i && i - j < alpha
}

/// Zeroes every entry `v_ij` with `i - j ≥ alpha`, so coordinates `alpha` or
/// more apart in grid order become uncorrelated under `V Vᵀ`.
pub fn band_mask(v: &LowerTriangular, alpha: usize) -> LowerTriangular {
    let mut out = v.clone();
    for i in 0..v.n {
        for j in 0..=i {
            if !in_band(i, j, alpha) {
                out.packed[packed_len(i) + j] = 0.0;
            }
        }
    }
    out
}

/// Trainable parameters of the augmentation map. Weight matrices are stored
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmenterParams {
    pub n_points: usize,
    pub dim: usize,
    pub n_new: usize,
    /// `M' × F`
    pub w_m: Vec<f64>,
    /// `M'`
    pub b_m: Vec<f64>,
    /// `M'' × F`
    pub w_v: Vec<f64>,
    /// `M''`
    pub b_v: Vec<f64>,
}

impl AugmenterParams {
    pub fn zeros(n_points: usize, dim: usize, n_new: usize) -> Self {
        let (f, mp, mpp) = shapes(n_points, dim, n_new);
        Self {
            n_points,
            dim,
            n_new,
            w_m: vec![0.0; mp * f],
            b_m: vec![0.0; mp],
            w_v: vec![0.0; mpp * f],
            b_v: vec![0.0; mpp],
        }
    }

    /// Mean map reproducing linear interpolation of the input on `grid`
    /// (constant extrapolation outside it); `V` weights drawn as
    /// `scale · N(0, 1)`, biases zero.
    pub fn init(grid: &TimeGrid, dim: usize, v_scale: f64, seed: u64) -> Self {
        let n = grid.original().len();
        let mut p = Self::zeros(n, dim, grid.new_times().len());
        let f = p.feature_len();
        let t = grid.original();
        for (j, &s) in grid.new_times().iter().enumerate() {
            let weights: Vec<(usize, f64)> = if s <= t[0] {
                vec![(0, 1.0)]
            } else if s >= t[n - 1] {
                vec![(n - 1, 1.0)]
            } else {
                let i = t.partition_point(|&ti| ti <= s) - 1;
                let w = (s - t[i]) / (t[i + 1] - t[i]);
                vec![(i, 1.0 - w), (i + 1, w)]
            };
            for c in 0..dim {
                let row = (j * dim + c) * f;
                for &(i, w) in &weights {
                    p.w_m[row + i * dim + c] += w;
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in p.w_v.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = v_scale * z;
        }
        p
    }

    /// `F = N·d + N + M`
    pub fn feature_len(&self) -> usize {
        shapes(self.n_points, self.dim, self.n_new).0
    }

    /// `M' = M·d`
    pub fn mean_len(&self) -> usize {
        self.n_new * self.dim
    }

    /// `M'' = M'(M' + 1)/2`
    pub fn packed_len(&self) -> usize {
        packed_len(self.mean_len())
    }

    /// Flattened input `[values; original times; new times]`.
    pub fn features(&self, x: &TimeSeries, grid: &TimeGrid) -> Result<Vec<f64>> {
        if x.len() != self.n_points || x.dim() != self.dim || grid.new_times().len() != self.n_new
        {
            return Err(Error::shape(format!(
                "augmenter expects N={}, d={}, M={}; got N={}, d={}, M={}",
                self.n_points,
                self.dim,
                self.n_new,
                x.len(),
                x.dim(),
                grid.new_times().len()
            )));
        }
        let mut f = Vec::with_capacity(self.feature_len());
        f.extend_from_slice(x.values());
        f.extend_from_slice(grid.original());
        f.extend_from_slice(grid.new_times());
        Ok(f)
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.w_m.len() + self.b_m.len() + self.w_v.len() + self.b_v.len()
    }
}

fn shapes(n_points: usize, dim: usize, n_new: usize) -> (usize, usize, usize) {
    let mp = n_new * dim;
    (n_points * dim + n_points + n_new, mp, packed_len(mp))
}

fn affine(w: &[f64], b: &[f64], f: &[f64]) -> Vec<f64> {
    let cols = f.len();
    b.iter()
        .enumerate()
        .map(|(r, &bias)| {
            bias + w[r * cols..(r + 1) * cols]
                .iter()
                .zip(f)
                .map(|(a, x)| a * x)
                .sum::<f64>()
        })
        .collect()
}

/// `m = W_m f + b_m`, packed `V = W_V f + b_V`.
pub fn augmenter_forward(
    p: &AugmenterParams,
    x: &TimeSeries,
    grid: &TimeGrid,
) -> Result<(Vec<f64>, LowerTriangular)> {
    let f = p.features(x, grid)?;
    let m = affine(&p.w_m, &p.b_m, &f);
    let v = LowerTriangular::from_packed(p.mean_len(), affine(&p.w_v, &p.b_v, &f))?;
    Ok((m, v))
}

/// Standard-normal draws for `k` samples of length `len`. Sample `i` uses
/// its own ChaCha stream `i` under `seed`, so draws do not depend on the
/// order in which samples are generated.
pub fn draw_noise(len: usize, k: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect()
}

/// `y_k = V ε_k + m` for pre-drawn `ε_k`.
pub fn sample_with_noise(m: &[f64], v: &LowerTriangular, eps: &[Vec<f64>]) -> Vec<Vec<f64>> {
    eps.iter()
        .map(|e| {
            let mut y = v.matvec(e);
            y.iter_mut().zip(m).for_each(|(a, b)| *a += b);
            y
        })
        .collect()
}

/// Draws `k` samples of `N(m, V Vᵀ)`.
pub fn sample_series(m: &[f64], v: &LowerTriangular, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    if v.order() != m.len() {
        return Err(Error::shape("mean and covariance root sizes differ"));
    }
    Ok(sample_with_noise(m, v, &draw_noise(m.len(), k, seed)))
}

/// Merges the original observations with sampled values at the new stamps.
/// `sample` is laid out as `sample[j * d + c]` for new stamp `j`.
pub fn interleave(x: &TimeSeries, sample: &[f64], grid: &TimeGrid) -> Result<TimeSeries> {
    let d = x.dim();
    if x.times() != grid.original() {
        return Err(Error::shape("series times differ from the grid's original stamps"));
    }
    if sample.len() != grid.new_times().len() * d {
        return Err(Error::shape(format!(
            "sample has {} values, grid needs {}",
            sample.len(),
            grid.new_times().len() * d
        )));
    }
    let mut values = Vec::with_capacity(grid.layout().len() * d);
    for slot in grid.layout() {
        match *slot {
            Slot::Original(i) => values.extend_from_slice(x.row(i)),
            Slot::New(j) => values.extend_from_slice(&sample[j * d..(j + 1) * d]),
        }
    }
    TimeSeries::new(grid.merged_times(), values, d)
}

/// Squared-exponential kernel hyperparameters: `σ exp(-(t - s)² / (2 l²))`
/// plus `noise` on the diagonal of the training block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub sigma: f64,
    pub length: f64,
    pub noise: f64,
}

impl GpHyper {
    fn kernel(&self, s: f64, t: f64) -> f64 {
        let r = s - t;
        self.sigma * (-r * r / (2.0 * self.length * self.length)).exp()
    }
}

/// Posterior at the new stamps: `mean[j * d + c]`, and an `M × M` covariance
/// shared by all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub n_new: usize,
}

fn train_kernel(times: &[f64], h: &GpHyper) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| {
        h.kernel(times[i], times[j]) + if i == j { h.noise } else { 0.0 }
    })
}

fn channel_means(x: &TimeSeries) -> Vec<f64> {
    (0..x.dim())
        .map(|c| x.channel(c).iter().sum::<f64>() / x.len() as f64)
        .collect()
}

/// Classic GP regression posterior with a constant prior mean (the sample
/// mean of each channel) and a squared-exponential kernel.
pub fn gp_posterior(x: &TimeSeries, new_times: &[f64], h: &GpHyper) -> Result<GpPosterior> {
    let t = x.times();
    let chol = train_kernel(t, h).cholesky().ok_or(Error::IllConditioned)?;
    let m = new_times.len();
    let cross = DMatrix::from_fn(m, t.len(), |i, j| h.kernel(new_times[i], t[j]));
    let prior_mean = channel_means(x);
    let mut mean = vec![0.0; m * x.dim()];
    for (c, &mu) in prior_mean.iter().enumerate() {
        let resid = DVector::from_iterator(t.len(), x.channel(c).into_iter().map(|v| v - mu));
        let alpha = chol.solve(&resid);
        let post = &cross * alpha;
        for j in 0..m {
            mean[j * x.dim() + c] = mu + post[j];
        }
    }
    // R(s,s) - R(s,t) R(t,t)^{-1} R(t,s)
    let solved = chol.solve(&cross.transpose());
    let reduction = &cross * solved;
    let mut cov = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            cov[i * m + j] = h.kernel(new_times[i], new_times[j]) - reduction[(i, j)];
        }
    }
    // symmetrize away round-off
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (cov[i * m + j] + cov[j * m + i]);
            cov[i * m + j] = v;
            cov[j * m + i] = v;
        }
    }
    Ok(GpPosterior {
        mean,
        cov,
        n_new: m,
    })
}

/// Log marginal likelihood summed over channels.
pub fn gp_log_marginal(x: &TimeSeries, h: &GpHyper) -> Result<f64> {
    let t = x.times();
    let n = t.len();
    let chol = train_kernel(t, h).cholesky().ok_or(Error::IllConditioned)?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let mut total = 0.0;
    for (c, mu) in channel_means(x).into_iter().enumerate() {
        let y = DVector::from_iterator(n, x.channel(c).into_iter().map(|v| v - mu));
        let alpha = chol.solve(&y);
        total += -0.5 * y.dot(&alpha)
            - 0.5 * log_det
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    }
    Ok(total)
}

/// Fits `(σ, l, noise)` by maximizing the log marginal likelihood over a
/// fixed logarithmic grid scaled to the data's variance and time span.
pub fn fit_gp_hyper(x: &TimeSeries) -> GpHyper {
    let means = channel_means(x);
    let var = (0..x.dim())
        .map(|c| {
            x.channel(c)
                .iter()
                .map(|v| (v - means[c]).powi(2))
                .sum::<f64>()
                / x.len() as f64
        })
        .sum::<f64>()
        / x.dim() as f64;
    let var = if var > 0.0 { var } else { 1.0 };
    let t = x.times();
    let span = t[t.len() - 1] - t[0];
    let mut best = GpHyper {
        sigma: var,
        length: 0.1 * span,
        noise: 1e-2 * var,
    };
    let mut best_ll = f64::NEG_INFINITY;
    for s in [0.25, 0.5, 1.0, 2.0, 4.0] {
        for l in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0] {
            for nz in [1e-6, 1e-4, 1e-3, 1e-2, 1e-1, 0.3] {
                let h = GpHyper {
                    sigma: s * var,
                    length: l * span,
                    noise: nz * var,
                };
                if let Ok(ll) = gp_log_marginal(x, &h) {
                    if ll > best_ll {
                        best_ll = ll;
                        best = h;
                    }
                }
            }
        }
    }
    best
}
