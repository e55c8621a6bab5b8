//! The Q-process (the chain conditioned never to be absorbed) and checks of
//! its two approximation bounds.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Scaled};
use crate::markov::SubStochasticKernel;
use crate::spectral::{eta_deviations, qsd_convergence, qsd_tv_curve, tail_decay, DecayFit, Deflated, SpectralTriple};

/// `eta` entries below this make the h-transform meaningless.
pub const MIN_ETA: f64 = 1e-14;

/// Slack on `max_violation` for a report to count as holding.
pub const VIOLATION_TOL: f64 = 1e-9;

/// Horizon of the fits that produce `gamma` and `gamma'`.
pub const RATE_HORIZON: usize = 200;

/// Doob h-transform of a killed kernel by its right Perron vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QKernel {
    matrix: Matrix,
    spectral: SpectralTriple,
}

impl QKernel {
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn spectral(&self) -> &SpectralTriple {
        &self.spectral
    }

    pub fn n(&self) -> usize {
        self.matrix.dim()
    }

    /// Rows of `Q^t`.
    pub fn power(&self, t: usize) -> Matrix {
        self.matrix.pow(t as u64)
    }
}

/// `Q(x, y) = K(x, y) eta(y) / (rho eta(x))`.
pub fn build_q_kernel(kernel: &SubStochasticKernel, spectral: &SpectralTriple) -> Result<QKernel> {
    let n = kernel.n();
    if spectral.n() != n {
        return Err(Error::Dimension { expected: n, got: spectral.n() });
    }
    if let Some((state, &value)) = spectral.eta.iter().enumerate().find(|(_, &h)| !(h >= MIN_ETA)) {
        return Err(Error::IllConditioned { state, value });
    }
    let eta = &spectral.eta;
    let mut m = Matrix::zeros(n);
    for x in 0..n {
        for y in 0..n {
            m.set(x, y, kernel.get(x, y) * eta[y] / (spectral.rho * eta[x]));
        }
    }
    Ok(QKernel { matrix: m, spectral: spectral.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPoint {
    pub t: usize,
    pub horizon: usize,
    pub observed: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// An inequality `observed <= constant * envelope` checked on a grid.
///
/// The constant is the smallest one that holds on the fit points; the
/// validation points then test it out of sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub constant: f64,
    pub rate: f64,
    pub fit: Vec<BoundPoint>,
    pub validation: Vec<BoundPoint>,
    pub max_violation: f64,
    /// Decay of the observed errors themselves, where meaningful.
    pub observed_rate: Option<DecayFit>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.max_violation <= 1.0 + VIOLATION_TOL && self.checks.iter().all(|c| c.passed)
    }

    pub fn points(&self) -> impl Iterator<Item = &BoundPoint> {
        self.fit.iter().chain(&self.validation)
    }
}

/// One grid point before the constant is known, in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Sample {
    pub t: usize,
    pub horizon: usize,
    pub ln_observed: f64,
    pub ln_envelope: f64,
}

impl Sample {
    fn ln_ratio(&self) -> f64 {
        if self.ln_observed == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else if self.ln_envelope == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            self.ln_observed - self.ln_envelope
        }
    }

    fn point(&self, ln_constant: f64) -> BoundPoint {
        let ln_bound = if ln_constant == f64::NEG_INFINITY || self.ln_envelope == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            ln_constant + self.ln_envelope
        };
        let ratio = if self.ln_observed == f64::NEG_INFINITY {
            0.0
        } else if ln_bound == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            (self.ln_observed - ln_bound).exp()
        };
        BoundPoint { t: self.t, horizon: self.horizon, observed: self.ln_observed.exp(), bound: ln_bound.exp(), ratio }
    }
}

/// First half for fitting, second half for validation.
pub(crate) fn split_half<T>(mut items: Vec<T>) -> (Vec<T>, Vec<T>) {
    let validation = items.split_off(items.len().div_ceil(2));
    (items, validation)
}

pub(crate) fn assemble(name: &'static str, rate: f64, fit: &[Sample], validation: &[Sample]) -> BoundReport {
    let ln_constant = fit.iter().map(Sample::ln_ratio).fold(f64::NEG_INFINITY, f64::max);
    let fit: Vec<BoundPoint> = fit.iter().map(|s| s.point(ln_constant)).collect();
    let validation: Vec<BoundPoint> = validation.iter().map(|s| s.point(ln_constant)).collect();
    let max_violation = fit.iter().chain(&validation).map(|p| p.ratio).fold(0.0, f64::max);
    BoundReport {
        name,
        constant: ln_constant.exp(),
        rate,
        fit,
        validation,
        max_violation,
        observed_rate: None,
        checks: Vec::new(),
        notes: Vec::new(),
    }
}

/// `ln TV(Q^t(x, .), P_x(X_t in . | T < tau))` with `s = T - t`.
///
/// With `q = Q^t(x, .)` and `u = (eta_s - eta) / eta`, the conditioned law
/// is `q (1 + u) / (1 + q.u)`, so the distance is
/// `(1/2) sum_y q(y) |u(y) - q.u| / (1 + q.u)`.
fn ln_bridge_gap(q_row: &[f64], eta_dev: &Scaled, eta: &[f64]) -> f64 {
    if eta_dev.is_zero() {
        return f64::NEG_INFINITY;
    }
    let u: Vec<f64> = eta_dev.unit.iter().zip(eta).map(|(d, h)| d / h).collect();
    let qu = dot(q_row, &u);
    let spread: f64 = q_row.iter().zip(&u).map(|(q, v)| q * (v - qu).abs()).sum();
    if spread == 0.0 {
        return f64::NEG_INFINITY;
    }
    (0.5 * spread).ln() + eta_dev.log_scale - (1.0 + qu * eta_dev.log_scale.exp()).ln()
}

/// `sup_x TV(Q_x(X_t in .), P_x(X_t in . | T < tau))`, in log space.
pub fn ln_bridge_gap_sup(q: &QKernel, eta_dev: &Scaled, t: usize) -> f64 {
    let qt = q.power(t);
    (0..q.n())
        .map(|x| ln_bridge_gap(qt.row(x), eta_dev, &q.spectral.eta))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Rates entering the approximation bounds, per step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub lambda0: f64,
    /// Uniform convergence rate of the conditioned laws to `alpha`.
    pub gamma: f64,
    /// Mixing rate of the Q-process.
    pub gamma_prime: f64,
}

impl Rates {
    pub fn fit(kernel: &SubStochasticKernel, q: &QKernel) -> Self {
        let spectral = q.spectral();
        Rates {
            lambda0: spectral.lambda0(),
            gamma: conditioned_rate(kernel, spectral).rate,
            gamma_prime: q_mixing_fit(q, RATE_HORIZON).rate,
        }
    }
}

/// `gamma` from the decay of `sup_x TV(P_x(X_t in . | t < tau), alpha)`.
pub fn conditioned_rate(kernel: &SubStochasticKernel, spectral: &SpectralTriple) -> DecayFit {
    qsd_convergence(kernel, spectral, RATE_HORIZON)
}

/// Fits `sup_x TV(P_x(X_t in . | t < tau), alpha) <= C exp(-gamma t)`.
pub fn conditioned_tv_report(kernel: &SubStochasticKernel, spectral: &SpectralTriple, t_grid: &[usize]) -> Result<BoundReport> {
    let grid = sorted_grid(t_grid)?;
    let curve = qsd_tv_curve(kernel, spectral, *grid.last().unwrap());
    let series: Vec<(usize, f64)> = grid.iter().map(|&t| curve[t]).collect();
    Ok(decay_report("C", &series))
}

fn sorted_grid(grid: &[usize]) -> Result<Vec<usize>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    let mut g = grid.to_vec();
    g.sort_unstable();
    g.dedup();
    Ok(g)
}

/// Report for `value(t) <= C exp(-rate t)` with the rate fitted on the tail.
fn decay_report(name: &'static str, series: &[(usize, f64)]) -> BoundReport {
    let fit = tail_decay(series);
    let samples: Vec<Sample> = series
        .iter()
        .map(|&(t, ln_v)| Sample { t, horizon: t, ln_observed: ln_v, ln_envelope: -fit.rate * t as f64 })
        .map(|mut s| {
            if fit.is_vanishing() {
                s.ln_envelope = if s.t == 0 { 0.0 } else { f64::NEG_INFINITY };
            }
            s
        })
        .collect();
    let (a, b) = split_half(samples);
    let mut report = assemble(name, fit.rate, &a, &b);
    report.observed_rate = Some(fit);
    report
}

/// Checks `|eta_t(x) - eta(x)| <= a1 eta_t(x) exp(-gamma t)` where
/// `eta_t(x) = P_x(t < tau) / rho^t`, together with the sandwich
/// `(1 - a1 e^{-gamma t}) eta_t <= eta <= (1 + a1 e^{-gamma t}) eta_t`.
pub fn verify_eta_bound(kernel: &SubStochasticKernel, spectral: &SpectralTriple, t_grid: &[usize]) -> Result<BoundReport> {
    let grid = sorted_grid(t_grid)?;
    let gamma = conditioned_rate(kernel, spectral).rate;
    let devs = eta_deviations(kernel, spectral, *grid.last().unwrap());
    let eta = &spectral.eta;
    let samples: Vec<Sample> = grid
        .iter()
        .map(|&t| {
            let d = &devs[t];
            let plain = d.to_vec();
            let ln_observed = (0..eta.len())
                .map(|x| d.ln_abs(x) - (eta[x] + plain[x]).ln())
                .fold(f64::NEG_INFINITY, f64::max);
            Sample { t, horizon: t, ln_observed, ln_envelope: -gamma * t as f64 }
        })
        .collect();
    let (fit, validation) = split_half(samples);
    let mut report = assemble("a1", gamma, &fit, &validation);

    let a1 = report.constant;
    let mut worst = 0.0f64;
    for &t in &grid {
        let eps = if a1 == 0.0 { 0.0 } else { a1 * (-gamma * t as f64).exp() };
        let plain = devs[t].to_vec();
        for x in 0..eta.len() {
            let eta_t = eta[x] + plain[x];
            let excess = ((1.0 - eps) * eta_t - eta[x]).max(eta[x] - (1.0 + eps) * eta_t);
            worst = worst.max(excess / eta[x]);
        }
    }
    report.checks.push(Check {
        name: "eta sandwich",
        passed: worst <= VIOLATION_TOL,
        detail: format!("largest relative excess {worst:e}"),
    });
    Ok(report)
}

/// Checks `TV(Q_x(X_t in .), P_x(X_t in . | T < tau)) <= a2 exp(-gamma (T - t))`
/// over `pairs` of `(t, T)`, sup over `x`.
///
/// Both laws have the same density along a path up to a factor depending on
/// the endpoint only, so the distance on time-`t` marginals equals the
/// distance on path cylinders up to time `t`.
pub fn verify_qproc_approx(
    kernel: &SubStochasticKernel,
    spectral: &SpectralTriple,
    q: &QKernel,
    pairs: &[(usize, usize)],
) -> Result<BoundReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("empty (t, T) grid".into()));
    }
    if let Some(&(t, big_t)) = pairs.iter().find(|(t, big_t)| t > big_t) {
        return Err(Error::InvalidArgument(format!("t = {t} exceeds T = {big_t}")));
    }
    let gamma = conditioned_rate(kernel, spectral).rate;
    let mut ordered = pairs.to_vec();
    ordered.sort_unstable_by_key(|&(t, big_t)| (big_t - t, t));
    ordered.dedup();

    let max_gap = ordered.iter().map(|(t, big_t)| big_t - t).max().unwrap_or(0);
    let devs = eta_deviations(kernel, spectral, max_gap);
    let max_t = ordered.iter().map(|p| p.0).max().unwrap_or(0);
    let powers: Vec<Matrix> = (0..=max_t).map(|t| q.power(t)).collect();

    let samples: Vec<Sample> = ordered
        .iter()
        .map(|&(t, big_t)| {
            let s = big_t - t;
            let ln_observed = (0..q.n())
                .map(|x| ln_bridge_gap(powers[t].row(x), &devs[s], &spectral.eta))
                .fold(f64::NEG_INFINITY, f64::max);
            Sample { t, horizon: big_t, ln_observed, ln_envelope: -gamma * s as f64 }
        })
        .collect();

    // decay in T - t of the worst case over t
    let mut by_gap: Vec<(usize, f64)> = Vec::new();
    for s in &samples {
        let gap = s.horizon - s.t;
        match by_gap.last_mut() {
            Some(last) if last.0 == gap => last.1 = last.1.max(s.ln_observed),
            _ => by_gap.push((gap, s.ln_observed)),
        }
    }

    let (fit, validation) = split_half(samples);
    let mut report = assemble("a2", gamma, &fit, &validation);
    report.observed_rate = Some(tail_decay(&by_gap));

    let a1 = verify_eta_bound(kernel, spectral, &(1..=RATE_HORIZON).collect::<Vec<_>>())?.constant;
    if a1 > 0.0 && gamma.is_finite() {
        report.notes.push(format!("proof threshold: T > t + ln(a1)/gamma = t + {:.6}", a1.ln() / gamma));
    }
    Ok(report)
}

fn q_mixing_curve(q: &QKernel, horizon: usize) -> Vec<(usize, f64)> {
    let beta = q.spectral.beta.weights();
    let op = Deflated::for_stochastic(q.matrix(), beta);
    let mut curve: Vec<(usize, f64)> = (0..=horizon).map(|t| (t, f64::NEG_INFINITY)).collect();
    for x in 0..q.n() {
        let mut start = vec![0.0; q.n()];
        start[x] = 1.0;
        for (t, e) in op.left_orbit(start, horizon).iter().enumerate() {
            curve[t].1 = curve[t].1.max(crate::spectral::ln_half_l1(e));
        }
    }
    curve
}

/// `gamma'` from the decay of `sup_x TV(Q^t(x, .), beta)`.
pub fn q_mixing_fit(q: &QKernel, horizon: usize) -> DecayFit {
    let curve = q_mixing_curve(q, horizon.max(3));
    tail_decay(&curve[1..])
}

/// Fits `sup_x TV(Q^t(x, .), beta) <= C' exp(-gamma' t)`.
pub fn q_mixing_report(q: &QKernel, t_grid: &[usize]) -> Result<BoundReport> {
    let grid = sorted_grid(t_grid)?;
    let curve = q_mixing_curve(q, *grid.last().unwrap());
    let series: Vec<(usize, f64)> = grid.iter().map(|&t| curve[t]).collect();
    Ok(decay_report("C'", &series))
}

/// `sup_{x,y} TV(Q^t(x, .), Q^t(y, .))` for `t = 0..=horizon`, in log space.
pub fn ln_q_pair_curve(q: &QKernel, horizon: usize) -> Vec<f64> {
    let op = Deflated::for_stochastic(q.matrix(), q.spectral.beta.weights());
    let orbits: Vec<Vec<Scaled>> = (0..q.n())
        .map(|x| {
            let mut start = vec![0.0; q.n()];
            start[x] = 1.0;
            op.left_orbit(start, horizon)
        })
        .collect();
    (0..=horizon)
        .map(|t| {
            let mut worst = f64::NEG_INFINITY;
            for x in 0..q.n() {
                for y in x + 1..q.n() {
                    let diff = Scaled::combine(&[(1.0, &orbits[x][t]), (-1.0, &orbits[y][t])]);
                    worst = worst.max(crate::spectral::ln_half_l1(&diff));
                }
            }
            worst
        })
        .collect()
}
