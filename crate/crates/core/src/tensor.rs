//! Dense truncated tensor algebra over `R^d`.
//!
//! A [`TruncTensor`] stores levels `0..=L` in one flat buffer. Level `n` holds
//! `d^n` coefficients in row-major multi-index order, so the word
//! `(i_1, …, i_n)` lives at offset `Σ_k i_k d^(n-k)` within its level.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TruncTensor {
    dim: usize,
    level: usize,
    offsets: Vec<usize>,
    coeffs: Vec<f64>,
}

fn level_offsets(dim: usize, level: usize) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(level + 2);
    let mut acc = 0;
    let mut width = 1;
    for _ in 0..=level {
        offsets.push(acc);
        acc += width;
        width *= dim;
    }
    offsets.push(acc);
    offsets
}

/// Number of coefficients in levels `1..=level` of `T_L(R^dim)`.
pub fn feature_len(dim: usize, level: usize) -> usize {
    (1..=level).map(|n| dim.pow(n as u32)).sum()
}

impl TruncTensor {
    pub fn zeros(dim: usize, level: usize) -> Self {
        assert!(dim > 0, "tensor dimension must be positive");
        let offsets = level_offsets(dim, level);
        let coeffs = vec![0.0; offsets[level + 1]];
        Self {
            dim,
            level,
            offsets,
            coeffs,
        }
    }

    /// The algebra unit `(1, 0, …, 0)`.
    pub fn unit(dim: usize, level: usize) -> Self {
        let mut t = Self::zeros(dim, level);
        t.coeffs[0] = 1.0;
        t
    }

    /// Builds a tensor from per-level coefficient vectors; `levels[n]` must
    /// have exactly `dim^n` entries.
    pub fn from_levels(dim: usize, levels: &[Vec<f64>]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::shape("at least level 0 is required"));
        }
        let mut t = Self::zeros(dim, levels.len() - 1);
        for (n, lv) in levels.iter().enumerate() {
            if lv.len() != dim.pow(n as u32) {
                return Err(Error::shape(format!(
                    "level {n} has {} coefficients, expected {}",
                    lv.len(),
                    dim.pow(n as u32)
                )));
            }
            t.level_mut(n).copy_from_slice(lv);
        }
        Ok(t)
    }

    /// Builds a tensor from a flat coefficient buffer laid out level by level.
    pub fn from_flat(dim: usize, level: usize, coeffs: Vec<f64>) -> Result<Self> {
        let offsets = level_offsets(dim, level);
        if coeffs.len() != offsets[level + 1] {
            return Err(Error::shape(format!(
                "flat buffer has {} coefficients, expected {}",
                coeffs.len(),
                offsets[level + 1]
            )));
        }
        Ok(Self {
            dim,
            level,
            offsets,
            coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn get(&self, n: usize) -> &[f64] {
        &self.coeffs[self.offsets[n]..self.offsets[n + 1]]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.coeffs[self.offsets[n]..self.offsets[n + 1]]
    }

    /// Coefficients of levels `1..=L`, i.e. everything except the scalar.
    pub fn without_scalar(&self) -> &[f64] {
        &self.coeffs[1..]
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.level != other.level {
            return Err(Error::shape(format!(
                "tensor shapes differ: (d={}, L={}) vs (d={}, L={})",
                self.dim, self.level, other.dim, other.level
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.coeffs
            .iter_mut()
            .zip(&other.coeffs)
            .for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.coeffs
            .iter_mut()
            .zip(&other.coeffs)
            .for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|a| *a *= c);
        out
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        self.coeffs
            .iter_mut()
            .zip(&other.coeffs)
            .for_each(|(a, b)| *a += c * b);
        Ok(())
    }

    /// Truncated tensor product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let d = self.dim;
        let mut out = Self::zeros(d, self.level);
        for n in 0..=self.level {
            let start = out.offsets[n];
            for i in 0..=n {
                let left = self.get(n - i);
                let right = other.get(i);
                let width = right.len();
                for (ia, &av) in left.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let base = start + ia * width;
                    let dst = &mut out.coeffs[base..base + width];
                    for (o, &bv) in dst.iter_mut().zip(right) {
                        *o += av * bv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Truncated exponential `Σ_n v^{⊗n} / n!` of a level-1 vector.
    pub fn exp(v: &[f64], level: usize) -> Self {
        let d = v.len();
        let mut out = Self::zeros(d, level);
        out.coeffs[0] = 1.0;
        for n in 1..=level {
            let (head, tail) = out.coeffs.split_at_mut(out.offsets[n]);
            let prev = &head[out.offsets[n - 1]..];
            let cur = &mut tail[..prev.len() * d];
            let inv_n = 1.0 / n as f64;
            for (ip, &p) in prev.iter().enumerate() {
                for (k, &vk) in v.iter().enumerate() {
                    cur[ip * d + k] = p * vk * inv_n;
                }
            }
        }
        out
    }

    /// Dilation `δ_λ`: level `n` scaled by `λ^n`. Only defined for
    /// group-like tensors.
    pub fn dilation(&self, lam: f64) -> Result<Self> {
        if self.coeffs[0] != 1.0 {
            return Err(Error::NotGroupLike(self.coeffs[0]));
        }
        let mut out = self.clone();
        let mut factor = 1.0;
        for n in 1..=self.level {
            factor *= lam;
            out.level_mut(n).iter_mut().for_each(|c| *c *= factor);
        }
        Ok(out)
    }

    /// Squared Euclidean norm of level `n`.
    pub fn level_norm_sq(&self, n: usize) -> f64 {
        self.get(n).iter().map(|c| c * c).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// Euclidean norm over every level, level 0 included.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Copy with every level above `upto` set to zero.
    pub fn truncated(&self, upto: usize) -> Self {
        let mut out = self.clone();
        if upto < self.level {
            let start = self.offsets[upto + 1];
            out.coeffs[start..].iter_mut().for_each(|c| *c = 0.0);
        }
        out
    }

    /// Adjoint of left multiplication: `⟨a ⊗ b, c⟩ = ⟨b, a.left_contract(c)⟩`.
    /// Level `n` of the result is `Σ_u a[u] c[u w]` over words `u` with
    /// `|u| + n ≤ L`.
    pub fn left_contract(&self, c: &Self) -> Result<Self> {
        self.check_same_shape(c)?;
        let mut out = Self::zeros(self.dim, self.level);
        for n in 0..=self.level {
            let width = self.dim.pow(n as u32);
            let start = out.offsets[n];
            for p in 0..=(self.level - n) {
                let a = self.get(p);
                let src = c.get(p + n);
                for (iu, &av) in a.iter().enumerate() {
                    if av == 0.0 {
                        continue;
                    }
                    let row = &src[iu * width..(iu + 1) * width];
                    for (o, &cv) in out.coeffs[start..start + width].iter_mut().zip(row) {
                        *o += av * cv;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of right multiplication: `⟨a ⊗ b, c⟩ = ⟨a, c.right_contract(b)⟩`.
    /// Level `n` of the result is `Σ_v c[w v] b[v]`.
    pub fn right_contract(&self, b: &Self) -> Result<Self> {
        self.check_same_shape(b)?;
        let mut out = Self::zeros(self.dim, self.level);
        for n in 0..=self.level {
            let start = out.offsets[n];
            let count = self.dim.pow(n as u32);
            for q in 0..=(self.level - n) {
                let bq = b.get(q);
                let src = self.get(n + q);
                let width = bq.len();
                for iw in 0..count {
                    let row = &src[iw * width..(iw + 1) * width];
                    let dot: f64 = row.iter().zip(bq).map(|(x, y)| x * y).sum();
                    out.coeffs[start + iw] += dot;
                }
            }
        }
        Ok(out)
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d1(levels: &[f64]) -> TruncTensor {
        let lv: Vec<Vec<f64>> = levels.iter().map(|&x| vec![x]).collect();
        TruncTensor::from_levels(1, &lv).unwrap()
    }

    #[test]
    fn add_and_scale_small_cases() {
        let a = d1(&[1.0, 2.0]);
        let b = d1(&[1.0, 3.0]);
        assert_eq!(a.add(&b).unwrap().as_slice(), &[2.0, 5.0]);
        assert_eq!(a.add(&TruncTensor::zeros(1, 1)).unwrap(), a);
        let z = a.add(&a.scale(-1.0)).unwrap();
        assert!(z.as_slice().iter().all(|&c| c == 0.0));
        assert_eq!(a.scale(3.0).as_slice(), &[3.0, 6.0]);
        assert_eq!(a.scale(1.0), a);
        assert!(a.scale(0.0).as_slice().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = TruncTensor::zeros(2, 2);
        let b = TruncTensor::zeros(2, 3);
        let c = TruncTensor::zeros(3, 2);
        assert!(matches!(a.add(&b), Err(Error::Shape(_))));
        assert!(matches!(a.mul(&c), Err(Error::Shape(_))));
    }

    #[test]
    fn mul_by_unit_and_d1_convolution() {
        let a = TruncTensor::exp(&[0.3, -1.2], 3);
        let u = TruncTensor::unit(2, 3);
        assert_eq!(a.mul(&u).unwrap(), a);
        assert_eq!(u.mul(&a).unwrap(), a);

        let (x, y) = (1.5, -0.25);
        let p = d1(&[1.0, x, 0.0]).mul(&d1(&[1.0, y, 0.0])).unwrap();
        assert_eq!(p.as_slice(), &[1.0, x + y, x * y]);
    }

    #[test]
    fn exp_examples() {
        assert_eq!(TruncTensor::exp(&[0.0, 0.0], 3), TruncTensor::unit(2, 3));
        let e = TruncTensor::exp(&[1.0], 3);
        let want = [1.0, 1.0, 0.5, 1.0 / 6.0];
        for (g, w) in e.as_slice().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        let e = TruncTensor::exp(&[1.0, 1.0], 2);
        assert_eq!(e.get(1), &[1.0, 1.0]);
        assert_eq!(e.get(2), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn dilation_examples() {
        let t = d1(&[1.0, 2.0, 4.0]);
        assert_eq!(t.dilation(0.5).unwrap().as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(t.dilation(1.0).unwrap(), t);
        let ab = t.dilation(0.7).unwrap().dilation(1.3).unwrap();
        let direct = t.dilation(0.7 * 1.3).unwrap();
        for (x, y) in ab.as_slice().iter().zip(direct.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(matches!(
            d1(&[2.0, 1.0]).dilation(0.5),
            Err(Error::NotGroupLike(_))
        ));
    }

    #[test]
    fn norm_examples() {
        assert_eq!(TruncTensor::unit(3, 4).norm(), 1.0);
        assert!((d1(&[1.0, 3.0]).norm() - 10f64.sqrt()).abs() < 1e-15);
        let t = TruncTensor::exp(&[0.4, -0.9, 1.1], 4);
        let lam: f64 = 0.6;
        let want: f64 = 1.0
            + (1..=4)
                .map(|n| lam.powi(2 * n as i32) * t.level_norm_sq(n))
                .sum::<f64>();
        assert!((t.dilation(lam).unwrap().norm_sq() - want).abs() < 1e-14);
    }

    #[test]
    fn contractions_are_adjoint_to_products() {
        let a = TruncTensor::exp(&[0.2, -0.7], 3);
        let b = TruncTensor::exp(&[1.1, 0.4], 3).scale(0.9);
        let mut c = TruncTensor::zeros(2, 3);
        for (i, x) in c.as_mut_slice().iter_mut().enumerate() {
            *x = ((i * 7 + 3) % 11) as f64 / 5.0 - 1.0;
        }
        let lhs = a.mul(&b).unwrap().dot(&c).unwrap();
        let via_left = b.dot(&a.left_contract(&c).unwrap()).unwrap();
        let via_right = a.dot(&c.right_contract(&b).unwrap()).unwrap();
        assert!((lhs - via_left).abs() < 1e-13);
        assert!((lhs - via_right).abs() < 1e-13);
    }

    #[test]
    fn feature_len_counts_levels_one_and_up() {
        assert_eq!(feature_len(2, 3), 2 + 4 + 8);
        assert_eq!(feature_len(3, 2), 3 + 9);
        assert_eq!(TruncTensor::zeros(3, 2).without_scalar().len(), 12);
    }
}
