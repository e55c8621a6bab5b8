//! Quasi-stationary distributions, the Q-process and conditioned evolution
//! for finite Markov chains with an absorbing state.
//!
//! States are `0..n`; the absorbing state is implicit in the row deficits of
//! a [`SubStochasticKernel`]. Time is counted in integer steps, and every
//! rate is reported per step.

pub mod converse;
pub mod ergodic;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod markov;
pub mod models;
pub mod qprocess;
pub mod spectral;

pub use error::{Error, Result};
pub use markov::{
    conditioned_evolve, conditioned_marginal, survival_vector, tv_distance, uniformize, Distribution, Generator,
    SubStochasticKernel,
};
pub use models::{ModelKind, ModelSpec};
pub use spectral::{compute_spectral, SpectralOptions, SpectralTriple};
