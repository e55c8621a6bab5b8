//! Bridge operators `R^T_{s,t}` (the chain pinned to survive until `T`), their
//! Dobrushin contraction, and the geometric decay it forces on conditioned
//! laws.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scaled};
use crate::markov::{check_state, half_l1, ConditionedFlow, Distribution, SubStochasticKernel, SurvivalIter};
use crate::qprocess::{ln_bridge_gap_sup, ln_q_pair_curve, QKernel};
use crate::spectral::{conditioned_minus_qsd, eta_deviations, ln_half_l1, qsd_deviations, tail_decay, DecayFit, SpectralTriple};

/// `R^T_{0,t}(x, y) = K^t(x, y) (K^{T-t} 1)(y) / (K^T 1)(x)`.
pub fn bridge_matrix(kernel: &SubStochasticKernel, t: usize, horizon: usize) -> Result<Matrix> {
    if t > horizon {
        return Err(Error::InvalidArgument(format!("t = {t} exceeds T = {horizon}")));
    }
    let rows = bridge_rows(kernel, t, &[horizon])?;
    Matrix::from_rows(&rows.into_iter().next().expect("one horizon"))
}

/// Rows of `R^T_{0,t}` for each `T` in `horizons` (all `>= t`).
fn bridge_rows(kernel: &SubStochasticKernel, t: usize, horizons: &[usize]) -> Result<Vec<Vec<Vec<f64>>>> {
    let n = kernel.n();
    let laws = (0..n)
        .map(|x| {
            let mut flow = ConditionedFlow::new(kernel, &Distribution::dirac(n, x))?;
            Ok(flow.advance_by(t)?.law.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let max_gap = horizons.iter().map(|h| h - t).max().unwrap_or(0);
    let survival: Vec<Scaled> = SurvivalIter::new(kernel).take(max_gap + 1).collect();
    horizons
        .iter()
        .map(|&h| {
            let g = &survival[h - t].unit;
            laws.iter()
                .map(|law| {
                    let w: Vec<f64> = law.weights().iter().zip(g).map(|(a, b)| a * b).collect();
                    let total: f64 = w.iter().sum();
                    if !(total > 0.0) {
                        return Err(Error::HorizonTooLarge { step: h as u64 });
                    }
                    Ok(w.iter().map(|v| v / total).collect())
                })
                .collect()
        })
        .collect()
}

/// Largest total variation distance between two rows.
fn pair_sup(rows: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            worst = worst.max(half_l1(a, b));
        }
    }
    worst
}

/// `delta(t, T) = sup_{x,y} TV(delta_x R^T_{0,t}, delta_y R^T_{0,t})`.
pub fn dobrushin_coeff(kernel: &SubStochasticKernel, t: usize, horizon: usize) -> Result<f64> {
    if t > horizon {
        return Err(Error::InvalidArgument(format!("t = {t} exceeds T = {horizon}")));
    }
    Ok(pair_sup(&bridge_rows(kernel, t, &[horizon])?[0]))
}

/// Dobrushin coefficient of a stochastic matrix.
pub fn dobrushin_of(m: &Matrix) -> f64 {
    pair_sup(&m.rows().map(<[f64]>::to_vec).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConverseLimits {
    pub max_t1: usize,
    /// Largest `T` probed, and the end of the decay curve.
    pub max_horizon: usize,
}

impl Default for ConverseLimits {
    fn default() -> Self {
        ConverseLimits { max_t1: 16, max_horizon: 200 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub certified: bool,
    pub t1: usize,
    pub big_t1: usize,
    /// `sup_{T >= T1} delta(t1, T)` over the probed `T` and the limit `T -> inf`.
    pub delta: f64,
    /// `lim_{T -> inf} delta(t1, T)`, the Dobrushin coefficient of `Q^{t1}`.
    pub limit_delta: f64,
    /// `(T, delta(t1, T))` for every probed `T`.
    pub probed: Vec<(usize, f64)>,
    /// `(T, sup_{x,y} TV(P_x(X_T in . | T < tau), P_y(X_T in . | T < tau)))`.
    pub decay_curve: Vec<(usize, f64)>,
    /// Largest `decay / envelope` over `T >= T1`.
    pub max_envelope_ratio: f64,
}

impl ContractionReport {
    /// `(1/2)^{(T - T1) / t1}`, and 1 before `T1`.
    pub fn envelope(&self, horizon: usize) -> f64 {
        envelope(self.t1, self.big_t1, horizon)
    }

    /// The rate `ln 2 / t1` that the contraction forces on conditioned laws.
    pub fn implied_rate(&self) -> f64 {
        std::f64::consts::LN_2 / self.t1 as f64
    }
}

fn envelope(t1: usize, big_t1: usize, horizon: usize) -> f64 {
    if horizon <= big_t1 {
        1.0
    } else {
        0.5f64.powf((horizon - big_t1) as f64 / t1 as f64)
    }
}

/// `ln sup_{x,y} TV` between conditioned laws at `T = 0..=horizon`.
pub fn ln_conditioned_pair_curve(kernel: &SubStochasticKernel, spectral: &SpectralTriple, horizon: usize) -> Vec<f64> {
    let n = kernel.n();
    let gaps: Vec<Vec<Scaled>> = (0..n)
        .map(|x| qsd_deviations(kernel, spectral, x, horizon).iter().map(|e| conditioned_minus_qsd(spectral, x, e)).collect())
        .collect();
    (0..=horizon)
        .map(|t| {
            let mut worst = f64::NEG_INFINITY;
            for x in 0..n {
                for y in x + 1..n {
                    let d = Scaled::combine(&[(1.0, &gaps[x][t]), (-1.0, &gaps[y][t])]);
                    worst = worst.max(ln_half_l1(&d));
                }
            }
            worst
        })
        .collect()
}

/// Finds the smallest `t1` (and then `T1`) with `delta(t1, T) <= 1/2` for
/// every probed `T >= T1` and in the limit `T -> inf`, such that the pair
/// distance of conditioned laws stays below `(1/2)^{(T - T1)/t1}`.
///
/// Every `T` in `T1..=max_horizon` is probed. Past the frontier the
/// coefficient converges to that of `Q^{t1}`, which is checked as well.
pub fn certify_converse(
    kernel: &SubStochasticKernel,
    q: &QKernel,
    limits: ConverseLimits,
) -> Result<ContractionReport> {
    if limits.max_t1 == 0 || limits.max_horizon == 0 {
        return Err(Error::InvalidArgument("search limits must be positive".into()));
    }
    let spectral = q.spectral();
    let ln_curve = ln_conditioned_pair_curve(kernel, spectral, limits.max_horizon);
    let decay_curve: Vec<(usize, f64)> = ln_curve.iter().enumerate().map(|(t, v)| (t, v.exp())).collect();
    let slack = |t1: usize, big_t1: usize| -> f64 {
        decay_curve[big_t1..]
            .iter()
            .map(|&(h, v)| if v == 0.0 { 0.0 } else { v / envelope(t1, big_t1, h) })
            .fold(0.0, f64::max)
    };

    let mut last = None;
    for t1 in 1..=limits.max_t1.min(limits.max_horizon) {
        let limit_delta = dobrushin_of(&q.power(t1));
        let horizons: Vec<usize> = (t1..=limits.max_horizon).collect();
        let probed: Vec<(usize, f64)> =
            bridge_rows(kernel, t1, &horizons)?.iter().zip(&horizons).map(|(rows, &h)| (h, pair_sup(rows))).collect();
        // suffix maxima, including the limit
        let mut suffix = vec![limit_delta; probed.len() + 1];
        for i in (0..probed.len()).rev() {
            suffix[i] = suffix[i + 1].max(probed[i].1);
        }
        let found = (0..probed.len()).find(|&i| suffix[i] <= 0.5 && slack(t1, probed[i].0) <= 1.0 + 1e-9);
        let report = |i: usize, certified: bool| ContractionReport {
            certified,
            t1,
            big_t1: probed[i].0,
            delta: suffix[i],
            limit_delta,
            probed: probed.clone(),
            decay_curve: decay_curve.clone(),
            max_envelope_ratio: slack(t1, probed[i].0),
        };
        if let Some(i) = found {
            return Ok(report(i, true));
        }
        last = Some(report(0, false));
    }
    Ok(last.expect("at least one t1 probed"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    /// `(T, sup_{x, t <= T} TV(Q_x(X_t in .), P_x(X_t in . | T < tau)))`.
    pub bridge_curve: Vec<(usize, f64)>,
    /// `(t, sup_{x,y} TV(Q^t(x, .), Q^t(y, .)))`.
    pub mixing_curve: Vec<(usize, f64)>,
    pub bridge_fit: DecayFit,
    pub mixing_fit: DecayFit,
    pub bridge_decays: bool,
    pub mixing_decays: bool,
}

fn decays(curve: &[(usize, f64)]) -> bool {
    match (curve.first(), curve.last()) {
        (Some(a), Some(b)) => b.1 == 0.0 || b.1 < a.1,
        _ => false,
    }
}

/// The two hypotheses of the converse: the pinned chain approaches the
/// Q-process as `T` grows, and the Q-process forgets its start.
pub fn hypothesis_check(
    kernel: &SubStochasticKernel,
    q: &QKernel,
    t_grid: &[usize],
    horizon_grid: &[usize],
) -> Result<HypothesisReport> {
    if t_grid.is_empty() || horizon_grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let mut ts = t_grid.to_vec();
    ts.sort_unstable();
    ts.dedup();
    let mut hs = horizon_grid.to_vec();
    hs.sort_unstable();
    hs.dedup();
    let spectral = q.spectral();
    let max_h = *hs.last().unwrap();
    let devs = eta_deviations(kernel, spectral, max_h);

    let ln_bridge: Vec<(usize, f64)> = hs
        .iter()
        .map(|&h| {
            let v = ts
                .iter()
                .filter(|&&t| t <= h)
                .map(|&t| ln_bridge_gap_sup(q, &devs[h - t], t))
                .fold(f64::NEG_INFINITY, f64::max);
            (h, v)
        })
        .collect();
    let pair = ln_q_pair_curve(q, *ts.last().unwrap());
    let ln_mixing: Vec<(usize, f64)> = ts.iter().map(|&t| (t, pair[t])).collect();

    let plain = |c: &[(usize, f64)]| c.iter().map(|&(t, v)| (t, v.exp())).collect::<Vec<_>>();
    let bridge_curve = plain(&ln_bridge);
    let mixing_curve = plain(&ln_mixing);
    Ok(HypothesisReport {
        bridge_decays: decays(&bridge_curve),
        mixing_decays: decays(&mixing_curve),
        bridge_fit: tail_decay(&ln_bridge),
        mixing_fit: tail_decay(&ln_mixing),
        bridge_curve,
        mixing_curve,
    })
}

/// `delta_x R^T_{0,t}` for diagnostics.
pub fn bridge_row(kernel: &SubStochasticKernel, x: usize, t: usize, horizon: usize) -> Result<Vec<f64>> {
    check_state(kernel, x)?;
    Ok(bridge_matrix(kernel, t, horizon)?.row(x).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::conditioned_marginal;
    use crate::models::{t3, w3};
    use crate::qprocess::build_q_kernel;
    use crate::spectral::{compute_spectral, SpectralOptions};
    use crate::test_util::random_kernel;
    use proptest::prelude::*;

    fn q_of(k: &SubStochasticKernel) -> QKernel {
        build_q_kernel(k, &compute_spectral(k, SpectralOptions::default()).unwrap()).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        let one = SubStochasticKernel::from_rows(&[vec![0.5]], 1.0).unwrap();
        assert_eq!(dobrushin_coeff(&one, 1, 5).unwrap(), 0.0);
        for horizon in [1, 2, 10, 100] {
            assert!((dobrushin_coeff(&t3(), 1, horizon).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        }
        assert!(dobrushin_coeff(&t3(), 3, 2).is_err());
    }

    #[test]
    fn bridge_rows_are_bridge_marginals() {
        let k = w3();
        let m = bridge_matrix(&k, 2, 7).unwrap();
        for x in 0..3 {
            let law = conditioned_marginal(&k, x, 2, 7).unwrap();
            for y in 0..3 {
                assert!((m.get(x, y) - law.weights()[y]).abs() < 1e-15);
            }
        }
        assert_eq!(bridge_row(&k, 1, 2, 7).unwrap(), m.row(1));
    }

    #[test]
    fn certificates() {
        let one = SubStochasticKernel::from_rows(&[vec![0.5]], 1.0).unwrap();
        let r = certify_converse(&one, &q_of(&one), ConverseLimits::default()).unwrap();
        assert!(r.certified);
        assert_eq!((r.t1, r.delta), (1, 0.0));

        let r = certify_converse(&t3(), &q_of(&t3()), ConverseLimits::default()).unwrap();
        assert!(r.certified);
        assert_eq!((r.t1, r.big_t1), (1, 1));
        assert!((r.delta - 1.0 / 7.0).abs() < 1e-15);

        let r = certify_converse(&w3(), &q_of(&w3()), ConverseLimits::default()).unwrap();
        assert!(r.certified);
        assert!(r.delta <= 0.5 && r.max_envelope_ratio <= 1.0 + 1e-9);
        for &(h, v) in &r.decay_curve[r.big_t1..] {
            assert!(v <= r.envelope(h) + 1e-9);
        }
        assert!(certify_converse(&w3(), &q_of(&w3()), ConverseLimits { max_t1: 0, max_horizon: 10 }).is_err());
    }

    #[test]
    fn exhausted_search_is_reported() {
        let r = certify_converse(&w3(), &q_of(&w3()), ConverseLimits { max_t1: 1, max_horizon: 50 }).unwrap();
        assert!(!r.certified);
        assert!(r.delta > 0.5);
        assert_eq!(r.probed.last().unwrap().0, 50);
    }

    #[test]
    fn pair_curve_matches_direct_computation() {
        let k = w3();
        let s = compute_spectral(&k, SpectralOptions::default()).unwrap();
        let ln_curve = ln_conditioned_pair_curve(&k, &s, 12);
        for (h, v) in ln_curve.iter().enumerate() {
            let direct = dobrushin_coeff(&k, h, h).unwrap();
            assert!((v.exp() - direct).abs() < 1e-13, "T={h}");
        }
    }

    #[test]
    fn hypothesis_curves() {
        let k = t3();
        let r = hypothesis_check(&k, &q_of(&k), &(0..=20).collect::<Vec<_>>(), &(1..=30).collect::<Vec<_>>()).unwrap();
        assert!(r.bridge_curve.iter().all(|&(_, v)| v == 0.0));
        for &(t, v) in &r.mixing_curve {
            assert!((v - 7f64.powi(-(t as i32))).abs() <= 1e-12 * v);
        }
        assert!(r.bridge_decays && r.mixing_decays);

        let one = SubStochasticKernel::from_rows(&[vec![0.5]], 1.0).unwrap();
        let r = hypothesis_check(&one, &q_of(&one), &[0, 1, 2], &[3, 4]).unwrap();
        assert!(r.bridge_curve.iter().chain(&r.mixing_curve).all(|&(_, v)| v == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn bridge_semigroup(seed in 0u64..100, t in 0usize..6, s in 0usize..6, extra in 0usize..6) {
            let k = random_kernel(seed);
            let horizon = t + s + extra;
            let lhs = bridge_matrix(&k, t + s, horizon).unwrap();
            let rhs = bridge_matrix(&k, t, horizon).unwrap().mul(&bridge_matrix(&k, s, horizon - t).unwrap());
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }

        #[test]
        fn contraction_is_submultiplicative(seed in 0u64..100, t in 1usize..5, s in 1usize..5, extra in 0usize..8) {
            let k = random_kernel(seed);
            let horizon = t + s + extra;
            let whole = dobrushin_coeff(&k, t + s, horizon).unwrap();
            let parts = dobrushin_coeff(&k, t, horizon).unwrap() * dobrushin_coeff(&k, s, horizon - t).unwrap();
            prop_assert!(whole <= parts + 1e-12);
        }
    }
}
