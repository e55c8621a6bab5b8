use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Slack allowed on `row sum <= 1` for kernels written in decimal.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Largest number of offending state pairs listed in a primitivity diagnostic.
const MAX_REPORTED_PAIRS: usize = 16;

/// Killed one-step transition matrix on the survivor states `0..n`.
///
/// The absorbing state is implicit: from `x` the chain is killed with
/// probability `1 - sum_y K(x, y)`. Construction enforces nonnegativity,
/// row sums at most one, at least one killing row and primitivity.
#[derive(Debug, Clone, PartialEq)]
pub struct SubStochasticKernel {
    matrix: Matrix,
    time_unit: f64,
}

impl SubStochasticKernel {
    pub fn new(matrix: Matrix, time_unit: f64) -> Result<Self> {
        validate_structure(&matrix, time_unit)?;
        check_primitive(&matrix)?;
        Ok(SubStochasticKernel { matrix, time_unit })
    }

    pub fn from_rows(rows: &[Vec<f64>], time_unit: f64) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?, time_unit)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.matrix.dim()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Physical duration of one step.
    #[inline]
    pub fn time_unit(&self) -> f64 {
        self.time_unit
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.matrix.get(x, y)
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        self.matrix.row(x)
    }

    /// One-step killing probability from `x`.
    pub fn absorption(&self, x: usize) -> f64 {
        (1.0 - self.row(x).iter().sum::<f64>()).max(0.0)
    }

    pub fn with_time_unit(self, time_unit: f64) -> Result<Self> {
        if !(time_unit > 0.0 && time_unit.is_finite()) {
            return Err(Error::InvalidKernel(format!("time_unit must be positive, got {time_unit}")));
        }
        Ok(SubStochasticKernel { time_unit, ..self })
    }
}

fn validate_structure(matrix: &Matrix, time_unit: f64) -> Result<()> {
    let n = matrix.dim();
    if n == 0 {
        return Err(Error::InvalidKernel("kernel has no states".into()));
    }
    if !(time_unit > 0.0 && time_unit.is_finite()) {
        return Err(Error::InvalidKernel(format!("time_unit must be positive, got {time_unit}")));
    }
    let mut absorbing = false;
    for x in 0..n {
        let row = matrix.row(x);
        if let Some((y, v)) = row.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidKernel(format!("entry ({x}, {y}) = {v} is not a nonnegative number")));
        }
        let sum: f64 = row.iter().sum();
        if sum > 1.0 + ROW_SUM_TOL {
            return Err(Error::InvalidKernel(format!("row {x} sums to {sum} > 1")));
        }
        absorbing |= sum < 1.0;
    }
    if !absorbing {
        return Err(Error::InvalidKernel("every row sums to 1; absorption is impossible".into()));
    }
    Ok(())
}

/// Verifies that some power `K^m` is entrywise positive.
///
/// A nonnegative matrix is primitive iff `K^m > 0` for `m = (n-1)^2 + 1`
/// (Wielandt), and then for every larger `m`; the sparsity pattern is squared
/// until the exponent passes that bound.
pub fn check_primitive(matrix: &Matrix) -> Result<()> {
    let n = matrix.dim();
    let mut pattern = BitMatrix::support_of(matrix);
    let wielandt = (n - 1) * (n - 1) + 1;
    let mut power = 1usize;
    while power < wielandt {
        pattern = pattern.square();
        power *= 2;
    }
    let pairs = pattern.zero_pairs(MAX_REPORTED_PAIRS);
    if pairs.is_empty() {
        Ok(())
    } else {
        Err(Error::NotPrimitive { power, pairs })
    }
}

struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn support_of(m: &Matrix) -> Self {
        let n = m.dim();
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; n * words];
        for x in 0..n {
            for (y, &v) in m.row(x).iter().enumerate() {
                if v > 0.0 {
                    bits[x * words + y / 64] |= 1 << (y % 64);
                }
            }
        }
        BitMatrix { n, words, bits }
    }

    fn has(&self, x: usize, y: usize) -> bool {
        self.bits[x * self.words + y / 64] >> (y % 64) & 1 == 1
    }

    fn square(&self) -> Self {
        let (n, w) = (self.n, self.words);
        let mut bits = vec![0u64; n * w];
        for x in 0..n {
            for k in 0..n {
                if self.has(x, k) {
                    for j in 0..w {
                        bits[x * w + j] |= self.bits[k * w + j];
                    }
                }
            }
        }
        BitMatrix { n, words: w, bits }
    }

    fn zero_pairs(&self, limit: usize) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|x| (0..self.n).map(move |y| (x, y)))
            .filter(|&(x, y)| !self.has(x, y))
            .take(limit)
            .collect()
    }
}

/// Continuous-time killed generator: off-diagonal rates `>= 0`, row sums
/// `<= 0`, the deficit being the killing rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    rates: Matrix,
}

impl Generator {
    pub fn new(rates: Matrix) -> Result<Self> {
        let n = rates.dim();
        if n == 0 {
            return Err(Error::InvalidGenerator("generator has no states".into()));
        }
        for x in 0..n {
            let row = rates.row(x);
            for (y, &r) in row.iter().enumerate() {
                if !r.is_finite() {
                    return Err(Error::InvalidGenerator(format!("rate ({x}, {y}) is not finite")));
                }
                if x != y && r < 0.0 {
                    return Err(Error::InvalidGenerator(format!("off-diagonal rate ({x}, {y}) = {r} < 0")));
                }
            }
            let sum: f64 = row.iter().sum();
            let scale = row.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(1.0);
            if sum > ROW_SUM_TOL * scale {
                return Err(Error::InvalidGenerator(format!("row {x} sums to {sum} > 0")));
            }
        }
        Ok(Generator { rates })
    }

    pub fn rates(&self) -> &Matrix {
        &self.rates
    }

    /// `max_x |G(x, x)|`, the smallest admissible uniformization rate.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.rates.dim()).map(|x| self.rates.get(x, x).abs()).fold(0.0, f64::max)
    }
}

/// Output of [`uniformize`]: `I + G / theta` with its physical step length.
///
/// Kept separate from [`SubStochasticKernel`] because uniformizing a valid
/// generator may yield a periodic matrix, which the kernel type refuses.
#[derive(Debug, Clone, PartialEq)]
pub struct Uniformized {
    pub matrix: Matrix,
    pub theta: f64,
    pub time_unit: f64,
}

impl Uniformized {
    pub fn into_kernel(self) -> Result<SubStochasticKernel> {
        SubStochasticKernel::new(self.matrix, self.time_unit)
    }

    /// Continuous-time decay rate `theta (1 - rho)` matching a per-step
    /// survival eigenvalue `rho` of the uniformized kernel.
    pub fn continuous_decay_rate(&self, rho: f64) -> f64 {
        self.theta * (1.0 - rho)
    }
}

pub fn uniformize(generator: &Generator, theta: f64) -> Result<Uniformized> {
    let required = generator.max_exit_rate();
    if !(theta.is_finite() && theta > 0.0) || theta < required {
        return Err(Error::RateTooSmall { theta, required });
    }
    let n = generator.rates.dim();
    let mut matrix = Matrix::zeros(n);
    for x in 0..n {
        for y in 0..n {
            let g = generator.rates.get(x, y) / theta;
            matrix.set(x, y, if x == y { 1.0 + g } else { g });
        }
    }
    Ok(Uniformized { matrix, theta, time_unit: 1.0 / theta })
}
