//! Signatures of piecewise-linear time series and their reverse-mode
//! derivative.

use crate::error::{Error, Result};
use crate::tensor::TruncTensor;

/// Strictly increasing time stamps paired with `d`-dimensional values,
/// stored row-major (`values[i * dim + k]` is channel `k` at `times[i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("series dimension must be positive"));
        }
        if times.len() < 2 {
            return Err(Error::invalid(format!(
                "a series needs at least 2 points, got {}",
                times.len()
            )));
        }
        if values.len() != times.len() * dim {
            return Err(Error::shape(format!(
                "{} values for {} times of dimension {dim}",
                values.len(),
                times.len()
            )));
        }
        if let Some(index) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonIncreasingTimes { index: index + 1 });
        }
        Ok(Self { times, values, dim })
    }

    /// One-dimensional series.
    pub fn scalar(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(times, values, 1)
    }

    /// Series on the uniform grid `i / (N - 1)` over `[0, 1]`.
    pub fn on_unit_grid(values: Vec<f64>, dim: usize) -> Result<Self> {
        let n = values.len() / dim.max(1);
        Self::new(unit_grid(n), values, dim)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Values of one channel across time.
    pub fn channel(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.dim).copied().collect()
    }

    /// Total variation `Σ |x_{i+1} - x_i|` with the Euclidean norm.
    pub fn total_variation(&self) -> f64 {
        (1..self.len())
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(self.row(i - 1))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }
}

/// `n` equally spaced stamps `i / (n - 1)`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    let denom = (n.max(2) - 1) as f64;
    (0..n).map(|i| i as f64 / denom).collect()
}

fn increment(x: &TimeSeries, i: usize, buf: &mut [f64]) {
    let d = x.dim;
    let a = &x.values[i * d..(i + 1) * d];
    let b = &x.values[(i + 1) * d..(i + 2) * d];
    for k in 0..d {
        buf[k] = b[k] - a[k];
    }
}

fn check_level(level: usize) -> Result<()> {
    if level == 0 {
        return Err(Error::invalid("signature level must be at least 1"));
    }
    Ok(())
}

/// Signature of the piecewise-linear interpolation of `x`, truncated at
/// `level`: the left-to-right product of the increment exponentials.
pub fn signature(x: &TimeSeries, level: usize) -> Result<TruncTensor> {
    check_level(level)?;
    let mut delta = vec![0.0; x.dim];
    let mut sig = TruncTensor::unit(x.dim, level);
    for i in 0..x.len() - 1 {
        increment(x, i, &mut delta);
        sig = sig.mul(&TruncTensor::exp(&delta, level))?;
    }
    Ok(sig)
}

/// Appends time as the last channel. With `rescale` the appended channel is
/// mapped affinely onto `[0, 1]`.
pub fn time_augment(x: &TimeSeries, rescale: bool) -> TimeSeries {
    let d = x.dim;
    let (t0, span) = (x.times[0], x.times[x.len() - 1] - x.times[0]);
    let mut values = Vec::with_capacity(x.len() * (d + 1));
    for (i, &t) in x.times.iter().enumerate() {
        values.extend_from_slice(x.row(i));
        values.push(if rescale { (t - t0) / span } else { t });
    }
    TimeSeries {
        times: x.times.clone(),
        values,
        dim: d + 1,
    }
}

/// Chen concatenation of two signatures.
pub fn chen_concat(left: &TruncTensor, right: &TruncTensor) -> Result<TruncTensor> {
    left.mul(right)
}

/// Gradient of `⟨exp(v), g⟩` with respect to `v`.
fn exp_vjp(v: &[f64], g: &TruncTensor, out: &mut [f64]) {
    let d = v.len();
    let mut word = Vec::new();
    let mut prefix = Vec::new();
    let mut suffix = Vec::new();
    let mut inv_fact = 1.0;
    for n in 1..=g.level() {
        inv_fact /= n as f64;
        word.clear();
        word.resize(n, 0usize);
        prefix.resize(n + 1, 1.0);
        suffix.resize(n + 1, 1.0);
        for &coef in g.get(n) {
            if coef != 0.0 {
                for j in 0..n {
                    prefix[j + 1] = prefix[j] * v[word[j]];
                }
                suffix[n] = 1.0;
                for j in (0..n).rev() {
                    suffix[j] = suffix[j + 1] * v[word[j]];
                }
                let c = coef * inv_fact;
                for j in 0..n {
                    out[word[j]] += c * prefix[j] * suffix[j + 1];
                }
            }
            // advance the row-major odometer
            for j in (0..n).rev() {
                word[j] += 1;
                if word[j] < d {
                    break;
                }
                word[j] = 0;
            }
        }
    }
}

/// Gradient of `⟨signature(x, level), cotangent⟩` with respect to every value
/// of `x`, returned row-major with the same layout as `x.values()`.
///
/// A forward sweep stores the prefix products `E_1 ⊗ … ⊗ E_i`; a backward
/// sweep contracts the cotangent against the suffix products, so each
/// increment exponential is differentiated in `O(1)` tensor operations.
pub fn signature_vjp(x: &TimeSeries, level: usize, cotangent: &TruncTensor) -> Result<Vec<f64>> {
    check_level(level)?;
    if cotangent.dim() != x.dim || cotangent.level() != level {
        return Err(Error::shape(format!(
            "cotangent shape (d={}, L={}) does not match signature (d={}, L={level})",
            cotangent.dim(),
            cotangent.level(),
            x.dim
        )));
    }
    let d = x.dim;
    let segments = x.len() - 1;
    let mut deltas = vec![0.0; segments * d];
    let mut exps = Vec::with_capacity(segments);
    for i in 0..segments {
        increment(x, i, &mut deltas[i * d..(i + 1) * d]);
        exps.push(TruncTensor::exp(&deltas[i * d..(i + 1) * d], level));
    }
    // prefixes[i] = E_0 ⊗ … ⊗ E_{i-1}
    let mut prefixes = Vec::with_capacity(segments);
    prefixes.push(TruncTensor::unit(d, level));
    for e in exps.iter().take(segments - 1) {
        let next = prefixes.last().unwrap().mul(e)?;
        prefixes.push(next);
    }

    let mut grad = vec![0.0; x.values.len()];
    let mut dv = vec![0.0; d];
    // h = cotangent contracted on the right with E_{i+1} ⊗ … ⊗ E_{last}
    let mut h = cotangent.clone();
    for i in (0..segments).rev() {
        let g = prefixes[i].left_contract(&h)?;
        dv.iter_mut().for_each(|v| *v = 0.0);
        exp_vjp(&deltas[i * d..(i + 1) * d], &g, &mut dv);
        for k in 0..d {
            grad[(i + 1) * d + k] += dv[k];
            grad[i * d + k] -= dv[k];
        }
        if i > 0 {
            h = h.right_contract(&exps[i])?;
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_rejects_bad_series() {
        assert!(matches!(
            TimeSeries::scalar(vec![0.0, 1.0, 1.0], vec![0.0; 3]),
            Err(Error::NonIncreasingTimes { index: 2 })
        ));
        assert!(TimeSeries::scalar(vec![0.0], vec![0.0]).is_err());
        assert!(TimeSeries::new(vec![0.0, 1.0], vec![0.0; 3], 2).is_err());
    }

    #[test]
    fn single_increment_is_exponential() {
        let x = TimeSeries::scalar(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let s = signature(&x, 3).unwrap();
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0];
        for (g, w) in s.as_slice().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn straight_line_gives_factorial_levels() {
        let c = 0.35;
        let vals: Vec<f64> = (0..6).map(|i| i as f64 * c).collect();
        let x = TimeSeries::on_unit_grid(vals, 1).unwrap();
        let s = signature(&x, 4).unwrap();
        let total: f64 = 5.0 * c;
        let mut fact = 1.0;
        for n in 1..=4 {
            fact *= n as f64;
            assert!((s.get(n)[0] - total.powi(n as i32) / fact).abs() < 1e-14);
        }
    }

    #[test]
    fn level_zero_signature_is_rejected() {
        let x = TimeSeries::scalar(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(signature(&x, 0).is_err());
    }

    #[test]
    fn time_augment_appends_rescaled_time() {
        let x = TimeSeries::scalar(vec![2.0, 3.0, 6.0], vec![5.0, 5.0, 5.0]).unwrap();
        let a = time_augment(&x, true);
        assert_eq!(a.dim(), 2);
        assert_eq!(a.channel(1), vec![0.0, 0.25, 1.0]);
        assert_eq!(a.channel(0), vec![5.0, 5.0, 5.0]);
        let s = signature(&a, 2).unwrap();
        assert_eq!(s.get(1), &[0.0, 1.0]);
        let raw = time_augment(&x, false);
        assert_eq!(raw.channel(1), vec![2.0, 3.0, 6.0]);
    }

    #[test]
    fn constant_levels_are_invisible_without_a_common_origin() {
        let t = vec![0.0, 0.5, 1.0];
        let a = time_augment(&TimeSeries::scalar(t.clone(), vec![1.0; 3]).unwrap(), true);
        let b = time_augment(&TimeSeries::scalar(t, vec![2.0; 3]).unwrap(), true);
        let sa = signature(&a, 2).unwrap();
        let sb = signature(&b, 2).unwrap();
        // Signatures only see increments.
        assert_eq!(sa, sb);
        // Anchored at a shared starting value the two levels separate in
        // the level-2 cross terms.
        let a0 = time_augment(
            &TimeSeries::scalar(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.0]).unwrap(),
            true,
        );
        let b0 = time_augment(
            &TimeSeries::scalar(vec![0.0, 0.5, 1.0], vec![0.0, 2.0, 2.0]).unwrap(),
            true,
        );
        assert_ne!(signature(&a0, 2).unwrap(), signature(&b0, 2).unwrap());
    }

    #[test]
    fn vjp_of_level_one_indicator_is_endpoint_difference() {
        let x = TimeSeries::new(
            vec![0.0, 0.3, 0.7, 1.0],
            vec![0.1, 0.2, -0.4, 0.5, 0.9, 1.1, 0.0, -0.3],
            2,
        )
        .unwrap();
        let mut cot = TruncTensor::zeros(2, 3);
        cot.level_mut(1)[1] = 1.0;
        let g = signature_vjp(&x, 3, &cot).unwrap();
        let mut want = vec![0.0; 8];
        want[1] = -1.0;
        want[7] = 1.0;
        for (a, b) in g.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14, "{g:?}");
        }
        let zero = signature_vjp(&x, 3, &TruncTensor::zeros(2, 3)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(signature_vjp(&x, 3, &TruncTensor::zeros(2, 2)).is_err());
    }
}
