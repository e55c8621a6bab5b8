//! Deviations from the limiting objects, computed in relative precision.
//!
//! Quantities such as `eta_t - eta` or `P_x(X_t in . | t < tau) - alpha`
//! decay like `(|lambda_2| / rho)^t`. Subtracting two converged vectors
//! loses everything below ~1e-16, so instead the deviation itself is
//! propagated by the kernel restricted to the complement of the Perron pair:
//!
//! * right: `d <- (K / rho) d`, then `d <- d - alpha(d) eta`;
//! * left:  `e <- e (K / rho)`, then `e <- e - (e . eta) alpha`.
//!
//! The projection removes the Perron component reintroduced by rounding, so
//! the error stays relative to the size of the deviation.

use super::fit::{tail_decay, DecayFit};
use super::SpectralTriple;
use crate::linalg::{dot, Matrix, Scaled};
use crate::markov::SubStochasticKernel;

/// `scale * M` acting on the complement of the eigenpair `(left, right)`,
/// where `left . right = 1`.
#[derive(Debug, Clone)]
pub struct Deflated<'a> {
    op: &'a Matrix,
    scale: f64,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl<'a> Deflated<'a> {
    pub fn new(op: &'a Matrix, scale: f64, left: Vec<f64>, right: Vec<f64>) -> Self {
        Deflated { op, scale, left, right }
    }

    /// `K / rho` around `(alpha, eta)`.
    pub fn for_kernel(kernel: &'a SubStochasticKernel, spectral: &SpectralTriple) -> Self {
        Self::new(
            kernel.matrix(),
            1.0 / spectral.rho,
            spectral.alpha.weights().to_vec(),
            spectral.eta.clone(),
        )
    }

    /// A stochastic matrix around `(invariant, 1)`.
    pub fn for_stochastic(op: &'a Matrix, invariant: &[f64]) -> Self {
        Self::new(op, 1.0, invariant.to_vec(), vec![1.0; op.dim()])
    }

    fn project_right(&self, d: &mut [f64]) {
        let c = dot(&self.left, d);
        d.iter_mut().zip(&self.right).for_each(|(v, h)| *v -= c * h);
    }

    fn project_left(&self, e: &mut [f64]) {
        let c = dot(e, &self.right);
        e.iter_mut().zip(&self.left).for_each(|(v, a)| *v -= c * a);
    }

    /// `(scale M)^s d0` for `s = 0..=steps`, `d0` projected first.
    pub fn right_orbit(&self, mut d0: Vec<f64>, steps: usize) -> Vec<Scaled> {
        self.project_right(&mut d0);
        let mut current = Scaled::new(d0);
        let mut out = Vec::with_capacity(steps + 1);
        for _ in 0..steps {
            let next = if current.is_zero() {
                current.clone()
            } else {
                let mut v = self.op.apply(&current.unit);
                v.iter_mut().for_each(|x| *x *= self.scale);
                self.project_right(&mut v);
                let mut s = Scaled { unit: v, log_scale: current.log_scale };
                s.renormalize();
                s
            };
            out.push(std::mem::replace(&mut current, next));
        }
        out.push(current);
        out
    }

    /// `e0 (scale M)^t` for `t = 0..=steps`, `e0` projected first.
    pub fn left_orbit(&self, mut e0: Vec<f64>, steps: usize) -> Vec<Scaled> {
        self.project_left(&mut e0);
        let mut current = Scaled::new(e0);
        let mut out = Vec::with_capacity(steps + 1);
        for _ in 0..steps {
            let next = if current.is_zero() {
                current.clone()
            } else {
                let mut v = self.op.apply_left(&current.unit);
                v.iter_mut().for_each(|x| *x *= self.scale);
                self.project_left(&mut v);
                let mut s = Scaled { unit: v, log_scale: current.log_scale };
                s.renormalize();
                s
            };
            out.push(std::mem::replace(&mut current, next));
        }
        out.push(current);
        out
    }
}

/// `eta_s - eta` for `s = 0..=horizon`, where `eta_s = rho^{-s} K^s 1`.
pub fn eta_deviations(kernel: &SubStochasticKernel, spectral: &SpectralTriple, horizon: usize) -> Vec<Scaled> {
    let start: Vec<f64> = spectral.eta.iter().map(|h| 1.0 - h).collect();
    Deflated::for_kernel(kernel, spectral).right_orbit(start, horizon)
}

/// `rho^{-t} delta_x K^t - eta(x) alpha` for `t = 0..=horizon`.
pub fn qsd_deviations(
    kernel: &SubStochasticKernel,
    spectral: &SpectralTriple,
    x: usize,
    horizon: usize,
) -> Vec<Scaled> {
    let mut start = vec![0.0; kernel.n()];
    start[x] = 1.0;
    Deflated::for_kernel(kernel, spectral).left_orbit(start, horizon)
}

/// Conditioned law minus `alpha`, given the left deviation `e` from `x`.
///
/// `P_x(X_t in . | t < tau) = (eta(x) alpha + e) / (eta(x) + e . 1)`, so the
/// difference is `(e - (e . 1) alpha) / (eta(x) + e . 1)`.
pub fn conditioned_minus_qsd(spectral: &SpectralTriple, x: usize, e: &Scaled) -> Scaled {
    if e.is_zero() {
        return e.clone();
    }
    let alpha = spectral.alpha.weights();
    let total: f64 = e.unit.iter().sum();
    let numerator: Vec<f64> = e.unit.iter().zip(alpha).map(|(u, a)| u - total * a).collect();
    let denominator = spectral.eta[x] + e.log_scale.exp() * total;
    let mut out = Scaled { unit: numerator, log_scale: e.log_scale - denominator.ln() };
    out.renormalize();
    out
}

/// `ln TV(P_x(X_t in . | t < tau), alpha)` from a left deviation.
pub fn ln_tv_to_qsd(spectral: &SpectralTriple, x: usize, e: &Scaled) -> f64 {
    ln_half_l1(&conditioned_minus_qsd(spectral, x, e))
}

/// `ln (1/2 sum |v|)`.
pub fn ln_half_l1(v: &Scaled) -> f64 {
    if v.is_zero() {
        return f64::NEG_INFINITY;
    }
    (0.5 * v.unit.iter().map(|u| u.abs()).sum::<f64>()).ln() + v.log_scale
}

/// `ln sup_x TV(P_x(X_t in . | t < tau), alpha)` for `t = 0..=horizon`.
///
/// The supremum over initial laws is attained at point masses, since the
/// conditioned law of a mixture is a mixture of conditioned laws.
pub fn qsd_tv_curve(kernel: &SubStochasticKernel, spectral: &SpectralTriple, horizon: usize) -> Vec<(usize, f64)> {
    let mut curve: Vec<(usize, f64)> = (0..=horizon).map(|t| (t, f64::NEG_INFINITY)).collect();
    for x in 0..kernel.n() {
        for (t, e) in qsd_deviations(kernel, spectral, x, horizon).iter().enumerate() {
            curve[t].1 = curve[t].1.max(ln_tv_to_qsd(spectral, x, e));
        }
    }
    curve
}

/// Uniform exponential convergence of the conditioned laws to `alpha`:
/// `sup_x TV <= C exp(-gamma t)`, with `gamma` fitted on the tail of
/// `t in 1..=horizon`.
pub fn qsd_convergence(kernel: &SubStochasticKernel, spectral: &SpectralTriple, horizon: usize) -> DecayFit {
    let curve = qsd_tv_curve(kernel, spectral, horizon.max(3));
    tail_decay(&curve[1..])
}
