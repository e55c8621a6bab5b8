//! Dense square matrices and log-scaled vectors.
//!
//! Everything here is deliberately small: kernels are at most a few thousand
//! states, and the numerical work is dominated by matrix-vector products.

use crate::error::{Error, Result};

/// Row-major dense square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Dimension { expected: n * n, got: data.len() });
        }
        Ok(Matrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension { expected: n, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.n + y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[x * self.n + y] = value;
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.n..(x + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n.max(1)).take(self.n)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    /// `M v` (action on functions).
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        self.rows().map(|r| dot(r, v)).collect()
    }

    /// `mu M` (action on measures).
    pub fn apply_left(&self, mu: &[f64]) -> Vec<f64> {
        debug_assert_eq!(mu.len(), self.n);
        let mut out = vec![0.0; self.n];
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (o, &k) in out.iter_mut().zip(self.row(x)) {
                *o += m * k;
            }
        }
        out
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "matrix dimensions differ");
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `M^t` by repeated squaring.
    pub fn pow(&self, mut t: u64) -> Matrix {
        let mut result = Matrix::identity(self.n);
        let mut base = self.clone();
        while t > 0 {
            if t & 1 == 1 {
                result = result.mul(&base);
            }
            t >>= 1;
            if t > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// A vector stored as `unit * exp(log_scale)` with `max |unit| = 1`.
///
/// Used for quantities that decay geometrically over thousands of steps
/// (survival vectors, transient deviations) so that neither underflow nor
/// loss of relative precision occurs. The zero vector has `log_scale = -inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub unit: Vec<f64>,
    pub log_scale: f64,
}

impl Scaled {
    pub fn zero(n: usize) -> Self {
        Scaled { unit: vec![0.0; n], log_scale: f64::NEG_INFINITY }
    }

    pub fn new(v: Vec<f64>) -> Self {
        let mut s = Scaled { unit: v, log_scale: 0.0 };
        s.renormalize();
        s
    }

    /// Rescale `unit` to max-abs one, folding the factor into `log_scale`.
    pub fn renormalize(&mut self) {
        let m = max_abs(&self.unit);
        if m == 0.0 || !m.is_finite() {
            self.unit.iter_mut().for_each(|u| *u = 0.0);
            self.log_scale = f64::NEG_INFINITY;
            return;
        }
        self.unit.iter_mut().for_each(|u| *u /= m);
        self.log_scale += m.ln();
    }

    pub fn is_zero(&self) -> bool {
        self.log_scale == f64::NEG_INFINITY
    }

    pub fn len(&self) -> usize {
        self.unit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit.is_empty()
    }

    /// Plain values; entries below the f64 range underflow to zero.
    pub fn to_vec(&self) -> Vec<f64> {
        if self.is_zero() {
            return vec![0.0; self.unit.len()];
        }
        let s = self.log_scale.exp();
        self.unit.iter().map(|u| u * s).collect()
    }

    /// Entrywise product.
    pub fn hadamard(&self, other: &Scaled) -> Scaled {
        if self.is_zero() || other.is_zero() {
            return Scaled::zero(self.len());
        }
        let mut out = Scaled {
            unit: self.unit.iter().zip(&other.unit).map(|(a, b)| a * b).collect(),
            log_scale: self.log_scale + other.log_scale,
        };
        out.renormalize();
        out
    }

    /// `sum_i c_i v_i`, rescaled to the largest term before adding.
    pub fn combine(terms: &[(f64, &Scaled)]) -> Scaled {
        let n = terms.first().map_or(0, |(_, v)| v.len());
        let top = terms
            .iter()
            .filter(|(c, v)| *c != 0.0 && !v.is_zero())
            .map(|(c, v)| v.log_scale + c.abs().ln())
            .fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Scaled::zero(n);
        }
        let mut unit = vec![0.0; n];
        for (c, v) in terms.iter().filter(|(c, v)| *c != 0.0 && !v.is_zero()) {
            let w = c.signum() * (v.log_scale + c.abs().ln() - top).exp();
            unit.iter_mut().zip(&v.unit).for_each(|(u, x)| *u += w * x);
        }
        let mut out = Scaled { unit, log_scale: top };
        out.renormalize();
        out
    }

    /// `ln |v_i|`, `-inf` for zero entries.
    pub fn ln_abs(&self, i: usize) -> f64 {
        let u = self.unit[i].abs();
        if u == 0.0 {
            f64::NEG_INFINITY
        } else {
            u.ln() + self.log_scale
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_keeps_tiny_terms() {
        let a = Scaled { unit: vec![1.0, -0.5], log_scale: -700.0 };
        let b = Scaled { unit: vec![0.25, 1.0], log_scale: -700.0 + 2f64.ln() };
        let c = Scaled::combine(&[(2.0, &a), (-1.0, &b)]);
        // 2a - b = e^-700 (1.5, -3)
        assert!((c.log_scale - (-700.0 + 3f64.ln())).abs() < 1e-12);
        assert!((c.unit[0] - 0.5).abs() < 1e-15 && (c.unit[1] + 1.0).abs() < 1e-15);
        assert!(Scaled::combine(&[(1.0, &a), (-1.0, &a)]).is_zero());
        assert!(a.hadamard(&Scaled::zero(2)).is_zero());
        let sq = a.hadamard(&a);
        assert!((sq.log_scale + 1400.0).abs() < 1e-12);
        assert_eq!(sq.unit, vec![1.0, 0.25]);
    }

    #[test]
    fn pow_matches_repeated_product() {
        let m = Matrix::from_rows(&[vec![0.3, 0.4, 0.0], vec![0.3, 0.3, 0.3], vec![0.0, 0.4, 0.5]])
            .unwrap();
        let mut p = Matrix::identity(3);
        for _ in 0..7 {
            p = p.mul(&m);
        }
        assert!(p.max_abs_diff(&m.pow(7)) < 1e-15);
        assert_eq!(m.pow(0), Matrix::identity(3));
    }

    #[test]
    fn left_and_right_actions() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.apply(&[1.0, 1.0]), vec![3.0, 7.0]);
        assert_eq!(m.apply_left(&[1.0, 1.0]), vec![4.0, 6.0]);
        assert_eq!(m.transpose().apply(&[1.0, 1.0]), vec![4.0, 6.0]);
    }

    #[test]
    fn scaled_keeps_tiny_values() {
        let mut s = Scaled::new(vec![1e-200, -2e-200]);
        for _ in 0..10 {
            s.unit.iter_mut().for_each(|u| *u *= 1e-100);
            s.renormalize();
        }
        assert!((s.ln_abs(1) - (2e-200f64.ln() - 1000.0 * 10f64.ln())).abs() < 1e-9);
        assert_eq!(s.unit, vec![0.5, -1.0]);
        assert!(Scaled::new(vec![0.0, 0.0]).is_zero());
    }
}
