use super::transient::{eta_deviations, qsd_convergence};
use super::SpectralTriple;
use crate::error::{Error, Result};
use crate::linalg::{dot, Scaled};
use crate::markov::{conditioned_evolve, Distribution, SubStochasticKernel, SurvivalIter};

/// Horizon of the pilot convergence fit used to pick the default `c2` horizon.
const PILOT_HORIZON: usize = 200;

/// Witness of the two-part sufficient condition for uniform convergence:
///
/// * `P_x(X_t0 in . | t0 < tau) >= c1 nu` for every `x`;
/// * `P_nu(t < tau) >= c2 P_x(t < tau)` for every `t` and `x`.
///
/// `c2` is the smaller of the exact minimum over `t <= horizon` and a bound
/// on the tail `t > horizon` derived from `|eta_t - eta| <= a1 e^{-gamma t} eta_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorizationCert {
    pub t0: usize,
    pub nu: Distribution,
    pub c1: f64,
    pub c2: f64,
    pub horizon: usize,
    pub probed_c2: f64,
    pub tail_c2: f64,
}

/// Builds `nu` from the entrywise minimum of the conditioned one-shot laws,
/// retrying larger `t0` (up to `n^2`) while that minimum vanishes.
pub fn certify_minorization(
    kernel: &SubStochasticKernel,
    spectral: &SpectralTriple,
    t0: usize,
    horizon: Option<usize>,
) -> Result<MinorizationCert> {
    if t0 == 0 {
        return Err(Error::InvalidArgument("t0 must be at least 1".into()));
    }
    let n = kernel.n();
    let t0_max = t0.max(n * n);
    let mut found = None;
    for t in t0..=t0_max {
        let floor = conditioned_floor(kernel, t)?;
        if floor.iter().sum::<f64>() > 0.0 {
            found = Some((t, floor));
            break;
        }
    }
    let (t0, floor) = found.ok_or(Error::ConditionNotSatisfied { t0_max: t0_max as u64 })?;
    let c1: f64 = floor.iter().sum();
    let nu = Distribution::from_unnormalized(floor)?;

    let fit = qsd_convergence(kernel, spectral, PILOT_HORIZON);
    let mut horizon = horizon.unwrap_or_else(|| {
        if fit.is_vanishing() || fit.rate <= 0.0 {
            1
        } else {
            (20.0 / fit.rate).ceil().max(1.0) as usize
        }
    });

    // Tail: eta_t lies within a factor (1 +- eps) of eta once eps < 1.
    let nu_eta = dot(nu.weights(), &spectral.eta);
    let eta_max = spectral.eta.iter().fold(0.0f64, |m, &h| m.max(h));
    let (tail_c2, horizon) = loop {
        let eps = eta_tail_eps(kernel, spectral, fit.rate, horizon);
        if eps < 0.5 || horizon >= 1 << 14 {
            let tail = if eps < 1.0 { nu_eta / eta_max * (1.0 - eps) / (1.0 + eps) } else { 0.0 };
            break (tail, horizon);
        }
        horizon *= 2;
    };

    let probed_c2 = SurvivalIter::new(kernel)
        .take(horizon + 1)
        .map(|s| dot(nu.weights(), &s.unit))
        .fold(f64::INFINITY, f64::min);

    Ok(MinorizationCert { t0, nu, c1, c2: probed_c2.min(tail_c2), horizon, probed_c2, tail_c2 })
}

/// `y -> min_x P_x(X_t = y | t < tau)`.
fn conditioned_floor(kernel: &SubStochasticKernel, t: usize) -> Result<Vec<f64>> {
    let n = kernel.n();
    let mut floor = vec![f64::INFINITY; n];
    for x in 0..n {
        let law = conditioned_evolve(kernel, &Distribution::dirac(n, x), t)?;
        floor.iter_mut().zip(law.weights()).for_each(|(f, w)| *f = f.min(*w));
    }
    Ok(floor)
}

/// `a1 e^{-gamma (horizon + 1)}` where `a1 = max_{t <= horizon, x} e^{gamma t} |eta_t - eta| / eta_t`.
fn eta_tail_eps(kernel: &SubStochasticKernel, spectral: &SpectralTriple, gamma: f64, horizon: usize) -> f64 {
    let devs = eta_deviations(kernel, spectral, horizon);
    if devs.iter().all(Scaled::is_zero) {
        return 0.0;
    }
    if !gamma.is_finite() || gamma <= 0.0 {
        return 1.0;
    }
    let ln_a1 = devs
        .iter()
        .enumerate()
        .flat_map(|(t, d)| {
            let plain = d.to_vec();
            (0..d.len()).map(move |x| {
                let eta_t = spectral.eta[x] + plain[x];
                d.ln_abs(x) + gamma * t as f64 - eta_t.ln()
            })
        })
        .fold(f64::NEG_INFINITY, f64::max);
    (ln_a1 - gamma * (horizon + 1) as f64).exp()
}
