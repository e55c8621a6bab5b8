//! Survival probabilities and conditioned laws.
//!
//! Products over long horizons are renormalized at every step and the lost
//! mass is carried as a logarithm, so nothing here underflows for horizons in
//! the thousands.

use super::{Distribution, SubStochasticKernel};
use crate::error::{Error, Result};
use crate::linalg::Scaled;

/// `P_x(t < tau)` for every `x`, i.e. `K^t 1`.
///
/// Entries below the f64 range come back as zero; use
/// [`log_survival_vector`] for long horizons.
pub fn survival_vector(kernel: &SubStochasticKernel, t: usize) -> Vec<f64> {
    (0..t).fold(vec![1.0; kernel.n()], |v, _| kernel.matrix().apply(&v))
}

/// `K^t 1` in log-scaled form.
pub fn log_survival_vector(kernel: &SubStochasticKernel, t: usize) -> Scaled {
    SurvivalIter::new(kernel).nth(t).expect("survival iterator is infinite")
}

/// Yields `K^s 1` for `s = 0, 1, 2, ...`.
pub struct SurvivalIter<'a> {
    kernel: &'a SubStochasticKernel,
    next: Option<Scaled>,
}

impl<'a> SurvivalIter<'a> {
    pub fn new(kernel: &'a SubStochasticKernel) -> Self {
        SurvivalIter { kernel, next: Some(Scaled::new(vec![1.0; kernel.n()])) }
    }
}

impl Iterator for SurvivalIter<'_> {
    type Item = Scaled;

    fn next(&mut self) -> Option<Scaled> {
        let current = self.next.take()?;
        let mut following = Scaled {
            unit: self.kernel.matrix().apply(&current.unit),
            log_scale: current.log_scale,
        };
        following.renormalize();
        self.next = Some(following);
        Some(current)
    }
}

/// Conditioned law `mu K^t / (mu K^t 1)` together with `ln(mu K^t 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedState {
    pub step: usize,
    pub law: Distribution,
    pub log_survival: f64,
}

/// Yields the conditioned laws of `mu` at steps `0, 1, 2, ...`.
pub struct ConditionedFlow<'a> {
    kernel: &'a SubStochasticKernel,
    state: ConditionedState,
}

impl<'a> ConditionedFlow<'a> {
    pub fn new(kernel: &'a SubStochasticKernel, mu: &Distribution) -> Result<Self> {
        if mu.len() != kernel.n() {
            return Err(Error::Dimension { expected: kernel.n(), got: mu.len() });
        }
        Ok(ConditionedFlow { kernel, state: ConditionedState { step: 0, law: mu.clone(), log_survival: 0.0 } })
    }

    pub fn current(&self) -> &ConditionedState {
        &self.state
    }

    /// Advances one step.
    pub fn advance(&mut self) -> Result<&ConditionedState> {
        let mut next = self.kernel.matrix().apply_left(self.state.law.weights());
        let mass: f64 = next.iter().sum();
        let step = self.state.step + 1;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::HorizonTooLarge { step: step as u64 });
        }
        next.iter_mut().for_each(|w| *w /= mass);
        self.state = ConditionedState {
            step,
            law: Distribution::from_unnormalized(next)?,
            log_survival: self.state.log_survival + mass.ln(),
        };
        Ok(&self.state)
    }

    pub fn advance_by(&mut self, steps: usize) -> Result<&ConditionedState> {
        for _ in 0..steps {
            self.advance()?;
        }
        Ok(&self.state)
    }
}

/// `P_mu(X_t in . | t < tau)`.
pub fn conditioned_evolve(kernel: &SubStochasticKernel, mu: &Distribution, t: usize) -> Result<Distribution> {
    let mut flow = ConditionedFlow::new(kernel, mu)?;
    Ok(flow.advance_by(t)?.law.clone())
}

/// `ln P_mu(t < tau)`.
pub fn log_survival_probability(kernel: &SubStochasticKernel, mu: &Distribution, t: usize) -> Result<f64> {
    let mut flow = ConditionedFlow::new(kernel, mu)?;
    Ok(flow.advance_by(t)?.log_survival)
}

/// `P_x(X_t in . | horizon < tau)`: the law at time `t` of the chain started
/// at `x` and pinned to survive until `horizon`. Weights are proportional to
/// `K^t(x, y) (K^{horizon - t} 1)(y)`.
pub fn conditioned_marginal(kernel: &SubStochasticKernel, x: usize, t: usize, horizon: usize) -> Result<Distribution> {
    if t > horizon {
        return Err(Error::InvalidArgument(format!("t = {t} exceeds the horizon {horizon}")));
    }
    check_state(kernel, x)?;
    let law = conditioned_evolve(kernel, &Distribution::dirac(kernel.n(), x), t)?;
    if t == horizon {
        return Ok(law);
    }
    let survival = log_survival_vector(kernel, horizon - t);
    reweight(&law, &survival.unit)
}

/// `mu(y) h(y)` renormalized.
pub(crate) fn reweight(mu: &Distribution, h: &[f64]) -> Result<Distribution> {
    let weights = mu.weights().iter().zip(h).map(|(m, v)| m * v).collect();
    Distribution::from_unnormalized(weights)
}

pub(crate) fn check_state(kernel: &SubStochasticKernel, x: usize) -> Result<()> {
    if x >= kernel.n() {
        return Err(Error::InvalidArgument(format!("state {x} out of range for {} states", kernel.n())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::tv_distance;
    use crate::models::{t3, w3};
    use crate::test_util::random_kernel;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn survival_examples() {
        let k = SubStochasticKernel::from_rows(&[vec![0.5]], 1.0).unwrap();
        assert_eq!(survival_vector(&k, 3), vec![0.125]);
        assert_eq!(survival_vector(&w3(), 0), vec![1.0; 3]);
        assert!(close(&survival_vector(&t3(), 2), &[0.49, 0.49], 1e-15));
        let ls = log_survival_vector(&k, 5000);
        assert!((ls.ln_abs(0) - 5000.0 * 0.5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn conditioned_evolve_examples() {
        let k = SubStochasticKernel::from_rows(&[vec![0.5]], 1.0).unwrap();
        assert_eq!(conditioned_evolve(&k, &Distribution::dirac(1, 0), 7).unwrap().weights(), &[1.0]);
        let law = conditioned_evolve(&t3(), &Distribution::dirac(2, 0), 1).unwrap();
        assert!(close(law.weights(), &[4.0 / 7.0, 3.0 / 7.0], 1e-15));
        let mu = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(conditioned_evolve(&w3(), &mu, 0).unwrap(), mu);
    }

    #[test]
    fn conditioned_evolve_matches_matrix_power_on_w3() {
        let k = w3();
        let p = k.matrix().pow(5);
        let row = p.row(0);
        let mass: f64 = row.iter().sum();
        let expected: Vec<f64> = row.iter().map(|v| v / mass).collect();
        let law = conditioned_evolve(&k, &Distribution::dirac(3, 0), 5).unwrap();
        assert!(close(law.weights(), &expected, 1e-14));
    }

    #[test]
    fn marginal_given_horizon_examples() {
        let k = w3();
        assert_eq!(conditioned_marginal(&k, 1, 0, 9).unwrap(), Distribution::dirac(3, 1));
        for t in 0..=6 {
            let bridge = conditioned_marginal(&t3(), 0, t, 6).unwrap();
            let plain = conditioned_evolve(&t3(), &Distribution::dirac(2, 0), t).unwrap();
            assert!(tv_distance(&bridge, &plain) < 1e-15);
        }
        assert!(conditioned_marginal(&k, 0, 4, 3).is_err());
        assert!(conditioned_marginal(&k, 3, 0, 3).is_err());
    }

    #[test]
    fn survival_of_w3_matches_power() {
        let k = w3();
        let p = k.matrix().pow(12);
        assert!(close(&survival_vector(&k, 12), &p.row_sums(), 1e-15));
    }

    proptest! {
        #[test]
        fn conditioned_semigroup(seed in 0u64..500, t in 0usize..30, s in 0usize..30) {
            let k = random_kernel(seed);
            let mu = Distribution::uniform(k.n());
            let two_stage = conditioned_evolve(&k, &conditioned_evolve(&k, &mu, t).unwrap(), s).unwrap();
            let direct = conditioned_evolve(&k, &mu, t + s).unwrap();
            prop_assert!(close(two_stage.weights(), direct.weights(), 1e-10));
        }

        #[test]
        fn survival_markov_property(seed in 0u64..500, t in 0usize..20, s in 0usize..20) {
            let k = random_kernel(seed);
            let lhs = survival_vector(&k, t + s);
            let rhs = k.matrix().pow(t as u64).apply(&survival_vector(&k, s));
            prop_assert!(close(&lhs, &rhs, 1e-12));
        }

        #[test]
        fn marginal_at_horizon_is_conditioned_law(seed in 0u64..500, t in 0usize..25) {
            let k = random_kernel(seed);
            for x in 0..k.n() {
                let bridge = conditioned_marginal(&k, x, t, t).unwrap();
                let plain = conditioned_evolve(&k, &Distribution::dirac(k.n(), x), t).unwrap();
                prop_assert_eq!(bridge, plain);
            }
        }
    }
}
