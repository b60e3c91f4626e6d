//! Tensor normalization by dilation.
//!
//! For a group-like `t`, `λ(t)` is the unique non-negative value with
//! `|δ_λ(t)|² = ψ(|t|)`, where `ψ` is the identity on `|t|² ≤ C` and
//! saturates at `R² = C (1 + 1/a)` beyond it. The normalized tensor
//! `Λ(t) = δ_{λ(t)}(t)` therefore always has norm at most `R`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signature::{signature, TimeSeries};
use crate::tensor::TruncTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    /// Shape parameter, `C ≥ 1`.
    pub c: f64,
    /// Tail exponent, `a > 0`.
    pub a: f64,
    pub solve_tol: f64,
    pub max_iter: usize,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            c: 4.0,
            a: 1.0,
            solve_tol: 1e-12,
            max_iter: 200,
        }
    }
}

impl NormConfig {
    pub fn new(c: f64, a: f64) -> Result<Self> {
        let cfg = Self {
            c,
            a,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 1.0) || !self.c.is_finite() {
            return Err(Error::invalid(format!("C must be >= 1, got {}", self.c)));
        }
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::invalid(format!("a must be > 0, got {}", self.a)));
        }
        Ok(())
    }

    /// Bound on the norm of every normalized tensor.
    pub fn r(&self) -> f64 {
        self.r_sq().sqrt()
    }

    /// `sup ψ = C (1 + 1/a)`.
    pub fn r_sq(&self) -> f64 {
        self.c * (1.0 + 1.0 / self.a)
    }

    /// `ψ` as a function of the squared norm `x = u²`.
    pub fn psi_sq(&self, x: f64) -> f64 {
        if x <= self.c {
            x
        } else {
            let (c, a) = (self.c, self.a);
            c + c.powf(1.0 + a) / a * (c.powf(-a) - x.powf(-a))
        }
    }

    /// `dψ/dx` at squared norm `x`; the tail branch is used from `x = C` on.
    pub fn psi_slope(&self, x: f64) -> f64 {
        if x < self.c {
            1.0
        } else {
            self.c.powf(1.0 + self.a) * x.powf(-self.a - 1.0)
        }
    }
}

/// `ψ(u)` for `u ≥ 1`.
pub fn psi(u: f64, cfg: &NormConfig) -> Result<f64> {
    if !(u >= 1.0) {
        return Err(Error::invalid(format!("psi is defined on [1, inf), got {u}")));
    }
    Ok(cfg.psi_sq(u * u))
}

/// Derivative `ψ'(u)`.
pub fn psi_derivative(u: f64, cfg: &NormConfig) -> Result<f64> {
    if !(u >= 1.0) {
        return Err(Error::invalid(format!("psi is defined on [1, inf), got {u}")));
    }
    Ok(2.0 * u * cfg.psi_slope(u * u))
}

fn check_group_like(t: &TruncTensor) -> Result<()> {
    let s = t.get(0)[0];
    if s != 1.0 {
        return Err(Error::NotGroupLike(s));
    }
    Ok(())
}

struct Dilated {
    level_sq: Vec<f64>,
}

impl Dilated {
    fn new(t: &TruncTensor) -> Self {
        Self {
            level_sq: (1..=t.level()).map(|n| t.level_norm_sq(n)).collect(),
        }
    }

    /// `|δ_λ t|² - 1` and its derivative in `λ`.
    fn eval(&self, lam: f64) -> (f64, f64) {
        let lam_sq = lam * lam;
        let mut pow = 1.0; // λ^{2(n-1)}
        let (mut value, mut slope) = (0.0, 0.0);
        for (i, &q) in self.level_sq.iter().enumerate() {
            let n = (i + 1) as f64;
            slope += 2.0 * n * pow * lam * q;
            pow *= lam_sq;
            value += pow * q;
        }
        (value, slope)
    }
}

/// Residual `|δ_λ(t)|² - ψ(|t|)`.
pub fn lambda_residual(t: &TruncTensor, lam: f64, cfg: &NormConfig) -> f64 {
    let (v, _) = Dilated::new(t).eval(lam);
    1.0 + v - cfg.psi_sq(t.norm_sq())
}

/// Solves for the normalization constant `λ(t)`.
///
/// The target is strictly increasing and convex in `λ` on `(0, ∞)`, so a
/// bracket `[0, hi]` with `hi` grown geometrically always holds the root.
/// Newton steps are taken from inside the bracket and replaced by bisection
/// whenever they would leave it.
pub fn solve_lambda(t: &TruncTensor, cfg: &NormConfig) -> Result<f64> {
    check_group_like(t)?;
    let x = t.norm_sq();
    if x <= cfg.c {
        return Ok(1.0);
    }
    let target = cfg.psi_sq(x) - 1.0;
    let f = Dilated::new(t);
    let residual = |lam: f64| {
        let (v, s) = f.eval(lam);
        (v - target, s)
    };

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut iterations = 0;
    while residual(hi).0 < 0.0 {
        lo = hi;
        hi *= 2.0;
        iterations += 1;
        if iterations >= cfg.max_iter {
            return Err(Error::SolverDiverged {
                iterations,
                residual: residual(hi).0,
            });
        }
    }

    let mut lam = hi;
    loop {
        let (r, s) = residual(lam);
        if r.abs() <= cfg.solve_tol {
            return Ok(lam);
        }
        if r > 0.0 {
            hi = lam;
        } else {
            lo = lam;
        }
        iterations += 1;
        if hi - lo <= 2.0 * f64::EPSILON * hi {
            // bracket exhausted at double precision
            let (rl, rh) = (residual(lo).0, residual(hi).0);
            let best = if rl.abs() <= rh.abs() { lo } else { hi };
            return Ok(best);
        }
        if iterations >= cfg.max_iter {
            return Err(Error::SolverDiverged {
                iterations,
                residual: r,
            });
        }
        let newton = lam - r / s;
        lam = if s > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
}

/// Applies the normalization, returning `(δ_λ(t), λ)`.
pub fn normalize(t: &TruncTensor, cfg: &NormConfig) -> Result<(TruncTensor, f64)> {
    let lam = solve_lambda(t, cfg)?;
    Ok((t.dilation(lam)?, lam))
}

/// Gradient of `λ(t)` with respect to every coefficient of levels `1..=L`
/// (the level-0 slot of the returned tensor is zero).
///
/// From the implicit function theorem applied to
/// `F(λ, t) = |δ_λ t|² - ψ(|t|)`:
/// `∂λ/∂t_j = -t_j (λ^{2j} - ψ'(|t|) / (2|t|)) / Σ_k k λ^{2k-1} |t_k|²`.
pub fn lambda_gradient(t: &TruncTensor, cfg: &NormConfig) -> Result<TruncTensor> {
    let lam = solve_lambda(t, cfg)?;
    lambda_gradient_at(t, lam, cfg)
}

/// Same as [`lambda_gradient`] with a precomputed `λ(t)`.
pub fn lambda_gradient_at(t: &TruncTensor, lam: f64, cfg: &NormConfig) -> Result<TruncTensor> {
    check_group_like(t)?;
    let x = t.norm_sq();
    if x <= 1.0 {
        return Err(Error::SingularGradient);
    }
    let mut grad = TruncTensor::zeros(t.dim(), t.level());
    if x < cfg.c {
        return Ok(grad);
    }
    let slope = cfg.psi_slope(x);
    let mut denom = 0.0;
    let mut pow = 1.0; // λ^{2k-1} built up incrementally
    for k in 1..=t.level() {
        pow *= if k == 1 { lam } else { lam * lam };
        denom += k as f64 * pow * t.level_norm_sq(k);
    }
    if denom == 0.0 {
        return Err(Error::SingularGradient);
    }
    let mut lam_pow = 1.0;
    for j in 1..=t.level() {
        lam_pow *= lam * lam;
        let factor = -(lam_pow - slope) / denom;
        for (g, &tj) in grad.level_mut(j).iter_mut().zip(t.get(j)) {
            *g = factor * tj;
        }
    }
    Ok(grad)
}

/// `λ_L` computed on the truncations `(1, t¹, …, t^L, 0, …)` of the
/// signature of `x`, for `L = 1..=max_level`.
pub fn lambda_truncation_curve(
    x: &TimeSeries,
    cfg: &NormConfig,
    max_level: usize,
) -> Result<Vec<(usize, f64)>> {
    let sig = signature(x, max_level)?;
    (1..=max_level)
        .map(|l| Ok((l, solve_lambda(&sig.truncated(l), cfg)?)))
        .collect()
}

/// Tail of the exponential series, `Σ_{j > level} v^j / j!`.
pub fn exp_tail(v: f64, level: usize) -> f64 {
    let mut term = 1.0;
    for j in 1..=level {
        term *= v / j as f64;
    }
    let mut sum = 0.0;
    let mut j = level + 1;
    loop {
        term *= v / j as f64;
        sum += term;
        if term <= sum * 1e-17 || j > level + 400 {
            return sum;
        }
        j += 1;
    }
}

/// Smallest constant `c` with `|λ_L - λ_ref| ≤ c · min(tail^{1/4}, tail^{1/2})^{1/r}`
/// over the supplied truncation curve, where `λ_ref` is its last entry,
/// `tail = Σ_{j > L} tv^j / j!` and `r` is the first non-vanishing level.
pub fn fitted_truncation_constant(curve: &[(usize, f64)], tv: f64, r: usize) -> f64 {
    let Some(&(_, reference)) = curve.last() else {
        return 0.0;
    };
    curve[..curve.len() - 1]
        .iter()
        .filter(|(l, _)| *l >= r)
        .filter_map(|&(l, lam)| {
            let tail = exp_tail(tv, l);
            let scale = tail.powf(0.25).min(tail.sqrt()).powf(1.0 / r as f64);
            (scale > 0.0).then(|| (lam - reference).abs() / scale)
        })
        .fold(0.0, f64::max)
}

/// `|Λ(s) - Λ(t)| / min(√|t - s|, |t - s|)`, the ratio bounded by the
/// Hölder/Lipschitz continuity of the normalization.
pub fn continuity_ratio(s: &TruncTensor, t: &TruncTensor, cfg: &NormConfig) -> Result<f64> {
    let dist = s.sub(t)?.norm();
    if dist == 0.0 {
        return Ok(0.0);
    }
    let (ns, _) = normalize(s, cfg)?;
    let (nt, _) = normalize(t, cfg)?;
    Ok(ns.sub(&nt)?.norm() / dist.sqrt().min(dist))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d1(levels: &[f64]) -> TruncTensor {
        let lv: Vec<Vec<f64>> = levels.iter().map(|&x| vec![x]).collect();
        TruncTensor::from_levels(1, &lv).unwrap()
    }

    #[test]
    fn psi_examples() {
        let cfg = NormConfig::new(4.0, 1.0).unwrap();
        assert_eq!(psi(2.0, &cfg).unwrap(), 4.0);
        assert!((psi(4.0, &cfg).unwrap() - 7.0).abs() < 1e-14);
        for c in [1.0, 1.5, 10.0] {
            for a in [0.5, 1.0, 3.0] {
                assert_eq!(psi(1.0, &NormConfig::new(c, a).unwrap()).unwrap(), 1.0);
            }
        }
        assert!(psi(0.99, &cfg).is_err());
        assert!(NormConfig::new(0.5, 1.0).is_err());
        assert!(NormConfig::new(2.0, 0.0).is_err());
    }

    #[test]
    fn psi_is_c1_at_the_branch_point() {
        let cfg = NormConfig::new(4.0, 2.0).unwrap();
        let u = cfg.c.sqrt();
        let h = 1e-7;
        let left = (psi(u, &cfg).unwrap() - psi(u - h, &cfg).unwrap()) / h;
        let right = (psi(u + h, &cfg).unwrap() - psi(u, &cfg).unwrap()) / h;
        assert!((left - 2.0 * u).abs() < 1e-5);
        assert!((right - 2.0 * u).abs() < 1e-5);
        assert!(psi(100.0, &cfg).unwrap() < cfg.r_sq());
    }

    #[test]
    fn identity_branch_and_unit_give_one() {
        let cfg = NormConfig::new(4.0, 1.0).unwrap();
        assert_eq!(solve_lambda(&d1(&[1.0, 1.5]), &cfg).unwrap(), 1.0);
        assert_eq!(solve_lambda(&TruncTensor::unit(3, 3), &cfg).unwrap(), 1.0);
        let t = d1(&[1.0, 1.5]);
        let (n, lam) = normalize(&t, &cfg).unwrap();
        assert_eq!(lam, 1.0);
        assert_eq!(n, t);
        assert!(matches!(
            solve_lambda(&d1(&[0.5, 3.0]), &cfg),
            Err(Error::NotGroupLike(_))
        ));
    }

    #[test]
    fn d1_worked_example() {
        let cfg = NormConfig::new(4.0, 1.0).unwrap();
        let t = d1(&[1.0, 4.0]);
        let lam = solve_lambda(&t, &cfg).unwrap();
        let want = ((7.0 - 16.0 / 17.0) / 16.0f64).sqrt();
        assert!((lam - want).abs() < 1e-13, "{lam} vs {want}");
        assert!((lam - 0.615367).abs() < 1e-6);
        let (n, _) = normalize(&t, &cfg).unwrap();
        assert!((n.norm_sq() - (8.0 - 16.0 / 17.0)).abs() < 1e-12);
        assert!(n.norm() <= cfg.r());
    }

    #[test]
    fn gradient_vanishes_inside_identity_branch_and_is_singular_at_unit() {
        let cfg = NormConfig::new(10.0, 1.0).unwrap();
        let t = TruncTensor::exp(&[0.5, -0.3], 3);
        assert!(t.norm_sq() < cfg.c);
        let g = lambda_gradient(&t, &cfg).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(
            lambda_gradient(&TruncTensor::unit(2, 3), &cfg),
            Err(Error::SingularGradient)
        ));
    }

    #[test]
    fn exp_tail_matches_direct_sum() {
        let v: f64 = 2.5;
        let direct: f64 = v.exp() - (0..=3).map(|j| v.powi(j) / (1..=j).product::<i32>().max(1) as f64).sum::<f64>();
        assert!((exp_tail(v, 3) - direct).abs() < 1e-12);
    }
}
