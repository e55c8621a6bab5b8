use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, Matrix};
use crate::markov::{Distribution, SubStochasticKernel};

/// Shift applied before power iteration: `(K + SHIFT I) / (1 + SHIFT)`.
const SHIFT: f64 = 0.5;

/// Iterations without improvement that end the polishing phase.
const POLISH_PATIENCE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { tol: 1e-12, max_iters: 1_000_000 }
    }
}

/// Perron data of a killed kernel.
///
/// * `alpha`: quasi-stationary distribution, `alpha K = rho alpha`;
/// * `rho`: per-step survival eigenvalue, `lambda0 = -ln rho`;
/// * `eta`: positive right eigenvector, `K eta = rho eta`, scaled so that
///   `alpha(eta) = 1`;
/// * `beta = eta * alpha`: invariant law of the Q-process.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTriple {
    pub alpha: Distribution,
    pub rho: f64,
    pub eta: Vec<f64>,
    pub beta: Distribution,
    /// Largest eigen-equation residual of the returned vectors.
    pub residual: f64,
}

impl SpectralTriple {
    /// Decay rate of the survival probability per step.
    pub fn lambda0(&self) -> f64 {
        -self.rho.ln()
    }

    /// Decay rate per unit of physical time.
    pub fn lambda0_physical(&self, time_unit: f64) -> f64 {
        self.lambda0() / time_unit
    }

    pub fn n(&self) -> usize {
        self.eta.len()
    }
}

/// Computes `(alpha, rho, eta, beta)` by shifted power iteration on both
/// sides of the kernel.
pub fn compute_spectral(kernel: &SubStochasticKernel, options: SpectralOptions) -> Result<SpectralTriple> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", options.tol)));
    }
    let k = kernel.matrix();
    let kt = k.transpose();
    let left = perron_vector(&kt, options)?;
    let right = perron_vector(k, options)?;

    let mass: f64 = left.iter().sum();
    let alpha: Vec<f64> = left.iter().map(|a| a / mass).collect();
    let rho: f64 = k.apply_left(&alpha).iter().sum();
    if rho >= 1.0 {
        return Err(Error::NoAbsorption { rho });
    }
    let scale = dot(&alpha, &right);
    let eta: Vec<f64> = right.iter().map(|h| h / scale).collect();
    let beta: Vec<f64> = alpha.iter().zip(&eta).map(|(a, h)| a * h).collect();

    let residual = eigen_residual(k, &alpha, &eta, rho);
    Ok(SpectralTriple {
        alpha: Distribution::new(alpha)?,
        rho,
        eta,
        beta: Distribution::new(beta)?,
        residual,
    })
}

/// `max(|alpha K - rho alpha|_inf, |K eta - rho eta|_inf / |eta|_inf)`.
pub fn eigen_residual(k: &Matrix, alpha: &[f64], eta: &[f64], rho: f64) -> f64 {
    let left = k
        .apply_left(alpha)
        .iter()
        .zip(alpha)
        .map(|(a, b)| (a - rho * b).abs())
        .fold(0.0, f64::max);
    let right = k
        .apply(eta)
        .iter()
        .zip(eta)
        .map(|(a, b)| (a - rho * b).abs())
        .fold(0.0, f64::max)
        / max_abs(eta);
    left.max(right)
}

/// Positive eigenvector of the dominant eigenvalue of `m`, max-normalized.
///
/// Once the residual is below `tol` the iteration keeps going while it still
/// improves, so the result sits at rounding level rather than just at `tol`.
fn perron_vector(m: &Matrix, options: SpectralOptions) -> Result<Vec<f64>> {
    let n = m.dim();
    let mut v = vec![1.0; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;
    let mut residual = f64::INFINITY;
    for _ in 0..options.max_iters {
        let mv = m.apply(&v);
        let rho = mv.iter().sum::<f64>() / v.iter().sum::<f64>();
        residual = mv.iter().zip(&v).map(|(a, b)| (a - rho * b).abs()).fold(0.0, f64::max);
        if residual <= options.tol {
            match &best {
                Some((r, _)) if residual >= *r => stale += 1,
                _ => {
                    best = Some((residual, v.clone()));
                    stale = 0;
                }
            }
            if stale >= POLISH_PATIENCE || residual == 0.0 {
                break;
            }
        }
        let mut next: Vec<f64> = mv.iter().zip(&v).map(|(a, b)| (a + SHIFT * b) / (1.0 + SHIFT)).collect();
        let top = max_abs(&next);
        next.iter_mut().for_each(|x| *x /= top);
        v = next;
    }
    best.map(|(_, v)| v).ok_or(Error::NotConverged { iterations: options.max_iters, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{t3, w3};

    #[test]
    fn single_state() {
        let k = SubStochasticKernel::from_rows(&[vec![0.5]], 1.0).unwrap();
        let s = compute_spectral(&k, SpectralOptions::default()).unwrap();
        assert_eq!(s.alpha.weights(), &[1.0]);
        assert_eq!(s.rho, 0.5);
        assert_eq!(s.eta, vec![1.0]);
        assert_eq!(s.beta.weights(), &[1.0]);
    }

    #[test]
    fn symmetric_two_state() {
        let s = compute_spectral(&t3(), SpectralOptions::default()).unwrap();
        assert_eq!(s.alpha.weights(), &[0.5, 0.5]);
        assert!((s.rho - 0.7).abs() < 1e-15);
        assert_eq!(s.eta, vec![1.0, 1.0]);
        assert_eq!(s.beta.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn normalizations_on_w3() {
        let s = compute_spectral(&w3(), SpectralOptions::default()).unwrap();
        assert!((s.alpha.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((s.alpha.expect(&s.eta) - 1.0).abs() < 1e-12);
        assert!(s.residual <= 1e-12);
        assert!(s.eta.iter().all(|&h| h > 0.0));
        for x in 0..3 {
            assert_eq!(s.beta.weights()[x], s.alpha.weights()[x] * s.eta[x]);
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance_and_reports_nonconvergence() {
        let opts = SpectralOptions { tol: 0.0, max_iters: 10 };
        assert!(compute_spectral(&w3(), opts).is_err());
        let opts = SpectralOptions { tol: 1e-12, max_iters: 2 };
        assert!(matches!(compute_spectral(&w3(), opts), Err(Error::NotConverged { iterations: 2, .. })));
    }

    #[test]
    fn time_unit_only_rescales_physical_rates() {
        let a = compute_spectral(&w3(), SpectralOptions::default()).unwrap();
        let b = compute_spectral(&w3().with_time_unit(0.25).unwrap(), SpectralOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!((b.lambda0_physical(0.25) - 4.0 * a.lambda0()).abs() < 1e-15);
    }
}
