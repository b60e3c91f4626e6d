//! Synthetic stochastic-process generators and the FBM / OU / Bidim tasks.
//!
//! Every path draws from its own ChaCha stream (`stream = path index`) under
//! the caller's seed, so paths can be generated in parallel without changing
//! the output.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::signature::TimeSeries;

/// Uniform sampling grid `t_i = T i / (N - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_points: usize,
    pub horizon: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            n_points: 50,
            horizon: 1.0,
        }
    }
}

impl Grid {
    pub fn times(&self) -> Vec<f64> {
        let denom = (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| self.horizon * i as f64 / denom)
            .collect()
    }

    pub fn step(&self) -> f64 {
        self.horizon / (self.n_points - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::invalid("a grid needs at least 2 points"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        Ok(())
    }
}

pub(crate) fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn build_paths<F>(n: usize, grid: Grid, seed: u64, path: F) -> Result<Vec<TimeSeries>>
where
    F: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    grid.validate()?;
    let times = grid.times();
    (0..n)
        .into_par_iter()
        .map(|i| TimeSeries::scalar(times.clone(), path(&mut path_rng(seed, i))))
        .collect()
}

/// Standard Brownian motion started at 0.
pub fn gen_bm(n: usize, grid: Grid, seed: u64) -> Result<Vec<TimeSeries>> {
    let sd = grid.step().sqrt();
    build_paths(n, grid, seed, |rng| {
        let mut x = 0.0;
        let mut out = Vec::with_capacity(grid.n_points);
        out.push(0.0);
        for _ in 1..grid.n_points {
            x += sd * normal(rng);
            out.push(x);
        }
        out
    })
}

/// Fractional Brownian motion by Cholesky factorization of its covariance
/// `½ (s^{2H} + t^{2H} - |t - s|^{2H})` on the grid (the origin excluded).
pub fn gen_fbm(hurst: f64, n: usize, grid: Grid, seed: u64) -> Result<Vec<TimeSeries>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::invalid(format!("Hurst parameter must lie in (0, 1), got {hurst}")));
    }
    grid.validate()?;
    let t = &grid.times()[1..];
    let m = t.len();
    let h2 = 2.0 * hurst;
    let cov = DMatrix::from_fn(m, m, |i, j| {
        0.5 * (t[i].powf(h2) + t[j].powf(h2) - (t[i] - t[j]).abs().powf(h2))
    });
    let chol = cov.cholesky().ok_or(Error::IllConditioned)?;
    let l = chol.l();
    build_paths(n, grid, seed, |rng| {
        let z = DVector::from_iterator(m, (0..m).map(|_| normal(rng)));
        let x = &l * z;
        std::iter::once(0.0).chain(x.iter().copied()).collect()
    })
}

/// Geometric Brownian motion with the exact log-normal update.
pub fn gen_gbm(mu: f64, sigma: f64, x0: f64, n: usize, grid: Grid, seed: u64) -> Result<Vec<TimeSeries>> {
    let dt = grid.step();
    let drift = (mu - 0.5 * sigma * sigma) * dt;
    let sd = sigma * dt.sqrt();
    build_paths(n, grid, seed, |rng| {
        let mut x = x0;
        let mut out = Vec::with_capacity(grid.n_points);
        out.push(x);
        for _ in 1..grid.n_points {
            x *= (drift + sd * normal(rng)).exp();
            out.push(x);
        }
        out
    })
}

/// Ornstein–Uhlenbeck parameters for `dX = α (γ - X) dt + β dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub x0: f64,
}

/// Ornstein–Uhlenbeck paths with the exact Gaussian transition.
pub fn gen_ou(p: OuParams, n: usize, grid: Grid, seed: u64) -> Result<Vec<TimeSeries>> {
    if !(p.alpha > 0.0) {
        return Err(Error::invalid(format!("OU rate must be positive, got {}", p.alpha)));
    }
    let dt = grid.step();
    let decay = (-p.alpha * dt).exp();
    let sd = p.beta * ((1.0 - (-2.0 * p.alpha * dt).exp()) / (2.0 * p.alpha)).sqrt();
    build_paths(n, grid, seed, |rng| {
        let mut x = p.x0;
        let mut out = Vec::with_capacity(grid.n_points);
        out.push(x);
        for _ in 1..grid.n_points {
            x = p.gamma + (x - p.gamma) * decay + sd * normal(rng);
            out.push(x);
        }
        out
    })
}

/// `dX = (√(1 + X²) + X/2) dt + noise_scale · √(1 + X²) dB` by
/// Euler–Maruyama with `refine` internal steps per grid step.
pub fn gen_nonlinear_sde(
    x0: f64,
    noise_scale: f64,
    refine: usize,
    n: usize,
    grid: Grid,
    seed: u64,
) -> Result<Vec<TimeSeries>> {
    if refine == 0 {
        return Err(Error::invalid("refinement factor must be positive"));
    }
    let h = grid.step() / refine as f64;
    let sq = h.sqrt();
    build_paths(n, grid, seed, |rng| {
        let mut x: f64 = x0;
        let mut out = Vec::with_capacity(grid.n_points);
        out.push(x);
        for _ in 1..grid.n_points {
            for _ in 0..refine {
                let s = (1.0 + x * x).sqrt();
                x += (s + 0.5 * x) * h + noise_scale * s * sq * normal(rng);
            }
            out.push(x);
        }
        out
    })
}

/// `f(t) = 6 sin³(4πt) cos²(4πt)`
pub fn smooth_profile(t: f64) -> f64 {
    let w = 4.0 * std::f64::consts::PI * t;
    6.0 * w.sin().powi(3) * w.cos().powi(2)
}

/// White-noise perturbations of [`smooth_profile`] on a uniform grid over
/// `[0, 1]`.
pub fn gen_noisy_smooth(noise_std: f64, n: usize, n_points: usize, seed: u64) -> Result<Vec<TimeSeries>> {
    let grid = Grid {
        n_points,
        horizon: 1.0,
    };
    let times = grid.times();
    build_paths(n, grid, seed, |rng| {
        times
            .iter()
            .map(|&t| smooth_profile(t) + noise_std * normal(rng))
            .collect()
    })
}

const REJECTION_CAP: usize = 10_000;

/// Draws from the density `p(m)(1 + sin(2π log m))` with `p` the standard
/// log-normal, by rejection against the envelope `2p`. `proposals` counts
/// every candidate drawn.
fn modulated_lognormal(rng: &mut ChaCha8Rng, proposals: &mut usize) -> Result<f64> {
    for _ in 0..REJECTION_CAP {
        *proposals += 1;
        let xi = normal(rng);
        let u: f64 = rng.random();
        if 2.0 * u <= 1.0 + (2.0 * std::f64::consts::PI * xi).sin() {
            return Ok(xi.exp());
        }
    }
    Err(Error::RejectionStall(REJECTION_CAP))
}

/// Endpoints `N` (log-normal) and `M` (moment-matched modulated log-normal)
/// of the straight-line processes `t ↦ t N` and `t ↦ t M` on `[0, 1]`.
/// Returns `(N samples, M samples, proposals used for M)`.
pub fn gen_moment_matched_pair(n: usize, seed: u64) -> Result<(Vec<[f64; 2]>, Vec<[f64; 2]>, usize)> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let lognormal: Vec<[f64; 2]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, 2 * i);
            [normal(&mut rng).exp(), normal(&mut rng).exp()]
        })
        .collect();
    let modulated: Vec<([f64; 2], usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, 2 * i + 1);
            let mut proposals = 0;
            let a = modulated_lognormal(&mut rng, &mut proposals)?;
            let b = modulated_lognormal(&mut rng, &mut proposals)?;
            Ok(([a, b], proposals))
        })
        .collect::<Result<_>>()?;
    let proposals = modulated.iter().map(|(_, p)| p).sum();
    Ok((lognormal, modulated.into_iter().map(|(m, _)| m).collect(), proposals))
}

/// The straight path from the origin to `end` over `[0, 1]`.
pub fn straight_path(end: &[f64]) -> TimeSeries {
    let mut values = vec![0.0; end.len()];
    values.extend_from_slice(end);
    TimeSeries::new(vec![0.0, 1.0], values, end.len()).expect("two-point path is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Fbm,
    Ou,
    Bidim,
}

impl std::str::FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fbm" => Ok(TaskName::Fbm),
            "ou" => Ok(TaskName::Ou),
            "bidim" => Ok(TaskName::Bidim),
            other => Err(Error::invalid(format!("unknown task {other:?} (expected fbm, ou or bidim)"))),
        }
    }
}

impl std::fmt::Display for TaskName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskName::Fbm => "fbm",
            TaskName::Ou => "ou",
            TaskName::Bidim => "bidim",
        })
    }
}

/// Parameters of the synthetic tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub n_points: usize,
    pub horizon: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Hurst exponents of the two FBM classes.
    pub fbm_hurst: [f64; 2],
    /// The two OU classes.
    pub ou_classes: [OuParams; 2],
    /// Per-process parameters of the Bidim classes.
    pub bidim_hurst: f64,
    pub bidim_gbm: [f64; 3],
    pub bidim_ou: OuParams,
    pub bidim_sde_x0: f64,
    pub bidim_smooth_noise: f64,
    pub sde_refine: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            n_points: 50,
            horizon: 1.0,
            train_per_class: 200,
            test_per_class: 200,
            fbm_hurst: [0.3, 0.7],
            ou_classes: [
                OuParams {
                    alpha: 1.0,
                    gamma: 0.0,
                    beta: 0.5,
                    x0: 1.0,
                },
                OuParams {
                    alpha: 4.0,
                    gamma: 0.0,
                    beta: 0.5,
                    x0: 1.0,
                },
            ],
            bidim_hurst: 0.7,
            bidim_gbm: [0.5, 0.5, 1.0],
            bidim_ou: OuParams {
                alpha: 1.0,
                gamma: 0.0,
                beta: 0.5,
                x0: 0.0,
            },
            bidim_sde_x0: 0.0,
            bidim_smooth_noise: 0.5,
            sde_refine: 10,
        }
    }
}

/// Names of the Bidim classes, in label order.
pub const BIDIM_CLASSES: [&str; 6] = ["bm", "fbm", "gbm", "ou", "nonlinear_sde", "noisy_smooth"];

impl TaskConfig {
    pub fn grid(&self) -> Grid {
        Grid {
            n_points: self.n_points,
            horizon: self.horizon,
        }
    }

    /// One-dimensional paths of Bidim process `class`.
    fn bidim_process(&self, class: usize, n: usize, seed: u64) -> Result<Vec<TimeSeries>> {
        let grid = self.grid();
        match class {
            0 => gen_bm(n, grid, seed),
            1 => gen_fbm(self.bidim_hurst, n, grid, seed),
            2 => {
                let [mu, sigma, x0] = self.bidim_gbm;
                gen_gbm(mu, sigma, x0, n, grid, seed)
            }
            3 => gen_ou(self.bidim_ou, n, grid, seed),
            4 => gen_nonlinear_sde(self.bidim_sde_x0, 1.0, self.sde_refine, n, grid, seed),
            5 => gen_noisy_smooth(self.bidim_smooth_noise, n, self.n_points, seed),
            _ => Err(Error::invalid(format!("no Bidim class {class}"))),
        }
    }
}

/// Stream-separated sub-seed for one (task, class, split, component) slot.
fn sub_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(crate::seeds::mix(seed, 0x7a5c), |acc, &p| crate::seeds::mix(acc, p))
}

fn class_paths(task: TaskName, cfg: &TaskConfig, class: usize, n: usize, seed: u64) -> Result<Vec<TimeSeries>> {
    let grid = cfg.grid();
    match task {
        TaskName::Fbm => gen_fbm(cfg.fbm_hurst[class], n, grid, seed),
        TaskName::Ou => gen_ou(cfg.ou_classes[class], n, grid, seed),
        TaskName::Bidim => {
            let first = cfg.bidim_process(class, n, crate::seeds::mix(seed, 1))?;
            let second = cfg.bidim_process(class, n, crate::seeds::mix(seed, 2))?;
            first
                .into_iter()
                .zip(second)
                .map(|(a, b)| {
                    let values = a
                        .values()
                        .iter()
                        .zip(b.values())
                        .flat_map(|(&u, &v)| [u, v])
                        .collect();
                    TimeSeries::new(a.times().to_vec(), values, 2)
                })
                .collect()
        }
    }
}

pub fn task_class_count(task: TaskName) -> usize {
    match task {
        TaskName::Fbm | TaskName::Ou => 2,
        TaskName::Bidim => BIDIM_CLASSES.len(),
    }
}

/// Builds the balanced `(train, test)` split of one synthetic task.
pub fn build_task(task: TaskName, cfg: &TaskConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let classes = task_class_count(task);
    let split = |which: u64, per_class: usize| -> Result<Dataset> {
        let mut items = Vec::with_capacity(classes * per_class);
        for c in 0..classes {
            let paths = class_paths(task, cfg, c, per_class, sub_seed(seed, &[which, c as u64]))?;
            items.extend(paths.into_iter().map(|x| (x, c)));
        }
        Dataset::new(task.to_string(), items, classes)
    };
    let train = split(0, cfg.train_per_class)?;
    let test = split(1, cfg.test_per_class)?;
    Ok((train, test))
}

/// All three synthetic tasks.
pub fn assemble_tasks(cfg: &TaskConfig, seed: u64) -> Result<Vec<(TaskName, Dataset, Dataset)>> {
    [TaskName::Fbm, TaskName::Ou, TaskName::Bidim]
        .into_iter()
        .map(|t| {
            let (train, test) = build_task(t, cfg, seed)?;
            Ok((t, train, test))
        })
        .collect()
}
