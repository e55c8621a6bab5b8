//! Conditional time averages `E_x(int f(X_t) mu_T(dt) | T < tau)` and their
//! convergence to `beta(f)`.
//!
//! Time integrals over `[0, T]` are left Riemann sums over the integer steps
//! `0..T`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, Scaled};
use crate::markov::{check_state, log_survival_vector, reweight, ConditionedFlow, Distribution, SubStochasticKernel};
use crate::qprocess::{assemble, split_half, BoundReport, Check, Rates, Sample, VIOLATION_TOL};
use crate::spectral::{eta_deviations, qsd_deviations, SpectralTriple};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Uniform,
    Dirac,
    Custom,
}

/// A probability measure `mu_T` on the steps `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    kind: PlanKind,
    horizon: usize,
    atoms: Vec<(usize, f64)>,
}

impl SamplingPlan {
    /// Equal weight on `0..T`.
    pub fn uniform(horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidPlan("uniform plan needs T >= 1".into()));
        }
        let w = 1.0 / horizon as f64;
        Ok(SamplingPlan { kind: PlanKind::Uniform, horizon, atoms: (0..horizon).map(|t| (t, w)).collect() })
    }

    pub fn dirac(t: usize, horizon: usize) -> Result<Self> {
        if t > horizon {
            return Err(Error::InvalidPlan(format!("sampling time {t} exceeds T = {horizon}")));
        }
        Ok(SamplingPlan { kind: PlanKind::Dirac, horizon, atoms: vec![(t, 1.0)] })
    }

    pub fn custom(horizon: usize, atoms: Vec<(usize, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidPlan("no atoms".into()));
        }
        if let Some((t, _)) = atoms.iter().find(|(t, _)| *t > horizon) {
            return Err(Error::InvalidPlan(format!("atom at t = {t} exceeds T = {horizon}")));
        }
        if let Some((t, w)) = atoms.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidPlan(format!("weight {w} at t = {t} is not a nonnegative number")));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPlan(format!("weights sum to {total}, not 1")));
        }
        Ok(SamplingPlan { kind: PlanKind::Custom, horizon, atoms })
    }

    pub fn kind(&self) -> PlanKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.atoms
    }

    /// The sampling time of a dirac plan, `T` otherwise.
    pub fn label_time(&self) -> usize {
        match self.kind {
            PlanKind::Dirac => self.atoms[0].0,
            _ => self.horizon,
        }
    }

    /// `int (e^{-gamma' t} + e^{-gamma (T - t)}) mu_T(dt)`.
    pub fn envelope(&self, rates: &Rates) -> f64 {
        self.atoms
            .iter()
            .map(|&(t, w)| w * (decay(rates.gamma_prime, t) + decay(rates.gamma, self.horizon - t)))
            .sum()
    }
}

/// `exp(-rate t)`, with `t = 0` giving 1 even for an infinite rate.
fn decay(rate: f64, t: usize) -> f64 {
    if t == 0 {
        1.0
    } else {
        (-rate * t as f64).exp()
    }
}

/// A plan description independent of `T`, as given on the command line:
/// `uniform`, `dirac:<t>`, `dirac:opt`, or `custom:<t>:<w>,<t>:<w>,...`.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanSpec {
    Uniform,
    Dirac(usize),
    DiracOptimal,
    Custom(Vec<(usize, f64)>),
}

impl PlanSpec {
    pub fn resolve(&self, horizon: usize, rates: Option<&Rates>) -> Result<SamplingPlan> {
        match self {
            PlanSpec::Uniform => SamplingPlan::uniform(horizon),
            PlanSpec::Dirac(t) => SamplingPlan::dirac(*t, horizon),
            PlanSpec::DiracOptimal => {
                let r = rates.ok_or_else(|| Error::InvalidPlan("dirac:opt needs fitted rates".into()))?;
                SamplingPlan::dirac(optimal_t0(r.gamma, r.gamma_prime, horizon), horizon)
            }
            PlanSpec::Custom(atoms) => SamplingPlan::custom(horizon, atoms.clone()),
        }
    }
}

impl FromStr for PlanSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: String| Error::InvalidPlan(msg);
        if s == "uniform" {
            return Ok(PlanSpec::Uniform);
        }
        if let Some(rest) = s.strip_prefix("dirac:") {
            if rest == "opt" {
                return Ok(PlanSpec::DiracOptimal);
            }
            return rest.parse().map(PlanSpec::Dirac).map_err(|_| bad(format!("`{rest}` is not a step")));
        }
        if let Some(rest) = s.strip_prefix("custom:") {
            let atoms = rest
                .split(',')
                .map(|atom| {
                    let (t, w) = atom.split_once(':').ok_or_else(|| bad(format!("atom `{atom}` is not t:w")))?;
                    let t = t.trim().parse().map_err(|_| bad(format!("`{t}` is not a step")))?;
                    let w = w.trim().parse().map_err(|_| bad(format!("`{w}` is not a weight")))?;
                    Ok((t, w))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(PlanSpec::Custom(atoms));
        }
        Err(bad(format!("unknown plan `{s}`; expected uniform, dirac:<t>, dirac:opt or custom:<t>:<w>,...")))
    }
}

impl fmt::Display for PlanSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanSpec::Uniform => write!(f, "uniform"),
            PlanSpec::Dirac(t) => write!(f, "dirac:{t}"),
            PlanSpec::DiracOptimal => write!(f, "dirac:opt"),
            PlanSpec::Custom(atoms) => {
                let parts: Vec<String> = atoms.iter().map(|(t, w)| format!("{t}:{w}")).collect();
                write!(f, "custom:{}", parts.join(","))
            }
        }
    }
}

fn is_constant(f: &[f64]) -> bool {
    f.iter().all(|v| *v == f[0])
}

fn check_f(kernel: &SubStochasticKernel, f: &[f64]) -> Result<()> {
    if f.len() != kernel.n() {
        return Err(Error::Dimension { expected: kernel.n(), got: f.len() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("f has non-finite entries".into()));
    }
    Ok(())
}

/// `E_x(sum_t w_t f(X_t) | T < tau)` where the conditioned law at each atom is
/// `K^t(x, y) (K^{T-t} 1)(y) / (K^T 1)(x)`.
pub fn conditional_functional(kernel: &SubStochasticKernel, x: usize, f: &[f64], plan: &SamplingPlan) -> Result<f64> {
    check_f(kernel, f)?;
    check_state(kernel, x)?;
    if is_constant(f) {
        return Ok(f[0]);
    }
    let horizon = plan.horizon();
    let mut atoms = plan.atoms().to_vec();
    atoms.sort_by_key(|a| a.0);
    let mut flow = ConditionedFlow::new(kernel, &Distribution::dirac(kernel.n(), x))?;
    let mut total = 0.0;
    for (t, w) in atoms {
        let law = flow.advance_by(t - flow.current().step)?.law.clone();
        let survival: Scaled = log_survival_vector(kernel, horizon - t);
        total += w * reweight(&law, &survival.unit)?.expect(f);
    }
    Ok(total)
}

/// Deviations from the spectral limits from every start, up to a horizon.
///
/// With `rho^{-t} K^t(x, .) = eta(x) alpha + e_t` and
/// `rho^{-s} K^s 1 = eta + d_s`, the conditioned law at `t` given survival to
/// `T = t + s` is `(eta(x) beta + r) / (eta(x) + sum r)` where
/// `r = eta(x) alpha d_s + eta e_t + e_t d_s`, so
/// `E - beta(f) = (f.r - beta(f) sum r) / (eta(x) + sum r)` without any
/// cancellation between nearly equal numbers.
pub struct DeviationTable<'a> {
    spectral: &'a SpectralTriple,
    alpha: Scaled,
    eta: Scaled,
    left: Vec<Vec<Scaled>>,
    right: Vec<Scaled>,
}

impl<'a> DeviationTable<'a> {
    pub fn new(kernel: &SubStochasticKernel, spectral: &'a SpectralTriple, horizon: usize) -> Self {
        DeviationTable {
            spectral,
            alpha: Scaled::new(spectral.alpha.weights().to_vec()),
            eta: Scaled::new(spectral.eta.clone()),
            left: (0..kernel.n()).map(|x| qsd_deviations(kernel, spectral, x, horizon)).collect(),
            right: eta_deviations(kernel, spectral, horizon),
        }
    }

    pub fn horizon(&self) -> usize {
        self.right.len() - 1
    }

    /// `E_x(f(X_t) | T < tau) - beta(f)`.
    pub fn error_at(&self, x: usize, f: &[f64], t: usize, horizon: usize) -> f64 {
        let e = &self.left[x][t];
        let d = &self.right[horizon - t];
        let a_d = self.alpha.hadamard(d);
        let e_eta = e.hadamard(&self.eta);
        let e_d = e.hadamard(d);
        let r = Scaled::combine(&[(self.spectral.eta[x], &a_d), (1.0, &e_eta), (1.0, &e_d)]);
        if r.is_zero() {
            return 0.0;
        }
        let beta_f = self.spectral.beta.expect(f);
        let sum_r: f64 = r.unit.iter().sum();
        let numerator = dot(f, &r.unit) - beta_f * sum_r;
        let scale = r.log_scale.exp();
        numerator * scale / (self.spectral.eta[x] + sum_r * scale)
    }

    /// `E_x(int f dmu_T | T < tau) - beta(f)`.
    pub fn plan_error(&self, x: usize, f: &[f64], plan: &SamplingPlan) -> Result<f64> {
        if plan.horizon() > self.horizon() {
            return Err(Error::InvalidArgument(format!(
                "plan horizon {} exceeds the table horizon {}",
                plan.horizon(),
                self.horizon()
            )));
        }
        if is_constant(f) {
            return Ok(0.0);
        }
        Ok(plan.atoms().iter().map(|&(t, w)| w * self.error_at(x, f, t, plan.horizon())).sum())
    }

    /// `sup_x |E_x(int f dmu_T | T < tau) - beta(f)|`.
    pub fn sup_plan_error(&self, f: &[f64], plan: &SamplingPlan) -> Result<f64> {
        (0..self.left.len()).map(|x| self.plan_error(x, f, plan).map(f64::abs)).try_fold(0.0, |m, e| Ok(f64::max(m, e?)))
    }
}

fn ln_or_neg_inf(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Checks `|E_x(int f dmu_T | T < tau) - beta(f)| <= a3 |f|_inf int (e^{-gamma' t}
/// + e^{-gamma (T - t)}) mu_T(dt)`, with `a3` fitted on `fit_plans` and tested
/// on `validation_plans`.
pub fn verify_general_bound(
    kernel: &SubStochasticKernel,
    spectral: &SpectralTriple,
    rates: &Rates,
    f: &[f64],
    fit_plans: &[SamplingPlan],
    validation_plans: &[SamplingPlan],
) -> Result<BoundReport> {
    check_f(kernel, f)?;
    let all = fit_plans.iter().chain(validation_plans);
    let horizon = all.clone().map(SamplingPlan::horizon).max().ok_or_else(|| Error::InvalidPlan("no plans".into()))?;
    let table = DeviationTable::new(kernel, spectral, horizon);
    let ln_norm = ln_or_neg_inf(max_abs(f));
    let sample = |plan: &SamplingPlan| -> Result<Sample> {
        Ok(Sample {
            t: plan.label_time(),
            horizon: plan.horizon(),
            ln_observed: ln_or_neg_inf(table.sup_plan_error(f, plan)?),
            ln_envelope: ln_norm + plan.envelope(rates).ln(),
        })
    };
    let fit = fit_plans.iter().map(sample).collect::<Result<Vec<_>>>()?;
    let validation = validation_plans.iter().map(sample).collect::<Result<Vec<_>>>()?;
    Ok(assemble("a3", rates.gamma, &fit, &validation))
}

/// Checks `|E_x((1/T) sum_{t<T} f(X_t) | T < tau) - beta(f)| <= a4 |f|_inf / T`.
///
/// `a4` comes from the first half of the grid. The check `T |error|
/// non-increasing` on the second half (within 1e-9) guards against a slow
/// drift that a fitted constant would hide.
pub fn verify_ergodic_theorem(
    kernel: &SubStochasticKernel,
    spectral: &SpectralTriple,
    f: &[f64],
    t_grid: &[usize],
) -> Result<BoundReport> {
    check_f(kernel, f)?;
    let mut grid = t_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let horizon = *grid.last().ok_or_else(|| Error::InvalidArgument("empty T grid".into()))?;
    let table = DeviationTable::new(kernel, spectral, horizon);
    let ln_norm = ln_or_neg_inf(max_abs(f));
    let samples = grid
        .iter()
        .map(|&big_t| {
            let plan = SamplingPlan::uniform(big_t)?;
            Ok(Sample {
                t: big_t,
                horizon: big_t,
                ln_observed: ln_or_neg_inf(table.sup_plan_error(f, &plan)?),
                ln_envelope: ln_norm - (big_t as f64).ln(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (fit, validation) = split_half(samples);
    let mut report = assemble("a4", f64::NAN, &fit, &validation);

    let scaled: Vec<f64> = report.validation.iter().map(|p| p.horizon as f64 * p.observed).collect();
    let worst_rise = scaled.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    report.checks.push(Check {
        name: "T*error non-increasing",
        passed: worst_rise <= VIOLATION_TOL,
        detail: format!("largest rise {worst_rise:e}"),
    });
    if let Some(last) = scaled.last() {
        report.notes.push(format!("plateau of T*|error| at the last T: {last}"));
    }
    Ok(report)
}

/// `round(gamma T / (gamma + gamma'))`, the sampling time balancing the two
/// error terms.
pub fn optimal_t0(gamma: f64, gamma_prime: f64, horizon: usize) -> usize {
    let share = match (gamma.is_infinite(), gamma_prime.is_infinite()) {
        (true, true) => 0.5,
        (true, false) => 1.0,
        (false, true) => 0.0,
        _ => gamma / (gamma + gamma_prime),
    };
    ((share * horizon as f64).round() as usize).min(horizon)
}

/// Grid minimizer of `e^{-gamma' t} + e^{-gamma (T - t)}` over `t in 0..=T`.
pub fn envelope_minimizer(gamma: f64, gamma_prime: f64, horizon: usize) -> usize {
    let rates = Rates { lambda0: 0.0, gamma, gamma_prime };
    (0..=horizon)
        .map(|t| (t, SamplingPlan::dirac(t, horizon).expect("t <= T").envelope(&rates)))
        .fold((0, f64::INFINITY), |best, (t, v)| if v < best.1 { (t, v) } else { best })
        .0
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

    #[test]
    fn plan_validation() {
        assert!(SamplingPlan::uniform(0).is_err());
        assert!(SamplingPlan::dirac(5, 4).is_err());
        assert!(SamplingPlan::custom(4, vec![(1, 0.5), (2, 0.4)]).is_err());
        assert!(SamplingPlan::custom(4, vec![(1, 0.5), (5, 0.5)]).is_err());
        assert!(SamplingPlan::custom(4, vec![(1, 1.5), (2, -0.5)]).is_err());
        assert_eq!(SamplingPlan::uniform(4).unwrap().atoms().len(), 4);
    }

    #[test]
    fn plan_specs_parse() {
        for text in ["uniform", "dirac:3", "dirac:opt", "custom:0:0.25,4:0.75"] {
            let spec: PlanSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
        for text in ["", "dirac:", "dirac:-1", "custom:1", "custom:a:1", "gauss"] {
            assert!(text.parse::<PlanSpec>().is_err(), "{text}");
        }
        let rates = Rates { lambda0: 0.1, gamma: 2.0, gamma_prime: 1.0 };
        let plan = PlanSpec::DiracOptimal.resolve(3, Some(&rates)).unwrap();
        assert_eq!(plan.atoms(), &[(2, 1.0)]);
        assert!(PlanSpec::DiracOptimal.resolve(3, None).is_err());
    }

    #[test]
    fn constant_f_is_exact() {
        let k = w3();
        let plan = SamplingPlan::uniform(17).unwrap();
        assert_eq!(conditional_functional(&k, 1, &[0.3; 3], &plan).unwrap(), 0.3);
    }

    #[test]
    fn two_state_dirac() {
        let v = conditional_functional(&t3(), 0, &[1.0, 0.0], &SamplingPlan::dirac(1, 9).unwrap()).unwrap();
        assert!((v - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn deviation_route_matches_direct_evaluation() {
        for k in [w3(), random_kernel(6), random_kernel(13)] {
            let s = compute_spectral(&k, SpectralOptions::default()).unwrap();
            let table = DeviationTable::new(&k, &s, 30);
            let f: Vec<f64> = (0..k.n()).map(|y| (y as f64 * 1.7).sin()).collect();
            for big_t in [1, 5, 12, 30] {
                for t in 0..=big_t {
                    for x in 0..k.n() {
                        let plan = SamplingPlan::dirac(t, big_t).unwrap();
                        let direct = conditional_functional(&k, x, &f, &plan).unwrap() - s.beta.expect(&f);
                        let precise = table.plan_error(x, &f, &plan).unwrap();
                        assert!((direct - precise).abs() < 1e-13, "T={big_t} t={t} x={x}: {direct} {precise}");
                    }
                }
            }
        }
    }

    #[test]
    fn two_state_error_is_geometric() {
        let k = t3();
        let s = compute_spectral(&k, SpectralOptions::default()).unwrap();
        let table = DeviationTable::new(&k, &s, 300);
        for t in [1, 10, 50, 200] {
            let plan = SamplingPlan::dirac(t, 300).unwrap();
            let err = table.plan_error(0, &[1.0, -1.0], &plan).unwrap();
            let exact = 7f64.powi(-(t as i32));
            assert!((err - exact).abs() <= 1e-12 * exact, "t={t}: {err} vs {exact}");
        }
    }

    #[test]
    fn optimal_t0_examples() {
        assert_eq!(optimal_t0(0.7, 0.7, 40), 20);
        assert_eq!(optimal_t0(2.0, 1.0, 3), 2);
        assert_eq!(optimal_t0(f64::INFINITY, 1.0, 9), 9);
        assert_eq!(optimal_t0(f64::INFINITY, f64::INFINITY, 9), 5);
        assert_eq!(envelope_minimizer(1.0, 1.0, 10), 5);
    }

    #[test]
    fn ergodic_single_state_and_constant_f() {
        let one = SubStochasticKernel::from_rows(&[vec![0.5]], 1.0).unwrap();
        let s = compute_spectral(&one, SpectralOptions::default()).unwrap();
        let r = verify_ergodic_theorem(&one, &s, &[2.0], &[1, 5, 10]).unwrap();
        assert_eq!(r.constant, 0.0);
        assert!(r.holds());
        let k = w3();
        let s = compute_spectral(&k, SpectralOptions::default()).unwrap();
        let r = verify_ergodic_theorem(&k, &s, &[1.0; 3], &(10..=40).collect::<Vec<_>>()).unwrap();
        assert!(r.points().all(|p| p.observed == 0.0));
    }

    #[test]
    fn general_bound_on_w3() {
        let k = w3();
        let s = compute_spectral(&k, SpectralOptions::default()).unwrap();
        let q = build_q_kernel(&k, &s).unwrap();
        let rates = Rates::fit(&k, &q);
        let plans = |big_t: usize| -> Vec<SamplingPlan> {
            let mut p: Vec<SamplingPlan> = (0..=big_t).map(|t| SamplingPlan::dirac(t, big_t).unwrap()).collect();
            p.push(SamplingPlan::uniform(big_t).unwrap());
            p
        };
        let r = verify_general_bound(&k, &s, &rates, &[0.0, 0.0, 1.0], &plans(60), &plans(80)).unwrap();
        assert!(r.constant > 0.0 && r.constant.is_finite());
        assert!(r.holds(), "max violation {}", r.max_violation);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn dirac_plan_agrees_with_bridge_marginal(seed in 0u64..100, t in 0usize..12, extra in 0usize..12) {
            let k = random_kernel(seed);
            let f: Vec<f64> = (0..k.n()).map(|y| y as f64 - 1.0).collect();
            let big_t = t + extra;
            for x in 0..k.n() {
                let via_plan = conditional_functional(&k, x, &f, &SamplingPlan::dirac(t, big_t).unwrap()).unwrap();
                let via_marginal = conditioned_marginal(&k, x, t, big_t).unwrap().expect(&f);
                prop_assert!((via_plan - via_marginal).abs() < 1e-12);
            }
        }
    }
}
