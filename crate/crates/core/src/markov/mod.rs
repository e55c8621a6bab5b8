//! Absorbed chains: kernels, distributions, survival and conditioned laws.

mod distribution;
mod evolve;
mod kernel;

pub use distribution::{tv_distance, Distribution, NORMALIZATION_TOL};
pub(crate) use distribution::half_l1;
pub use evolve::{
    conditioned_evolve, conditioned_marginal, log_survival_probability, log_survival_vector, survival_vector,
    ConditionedFlow, ConditionedState, SurvivalIter,
};
pub(crate) use evolve::{check_state, reweight};
pub use kernel::{check_primitive, uniformize, Generator, SubStochasticKernel, Uniformized, ROW_SUM_TOL};
