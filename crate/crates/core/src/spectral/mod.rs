//! Perron data of killed kernels, convergence-rate fits and the
//! minorization certificate.

mod fit;
mod minorization;
mod power;
mod transient;

pub use fit::{fit_decay, fit_log_decay, tail_decay, DecayFit};
pub use minorization::{certify_minorization, MinorizationCert};
pub use power::{compute_spectral, eigen_residual, SpectralOptions, SpectralTriple};
pub use transient::{
    conditioned_minus_qsd, eta_deviations, ln_half_l1, ln_tv_to_qsd, qsd_convergence, qsd_deviations, qsd_tv_curve,
    Deflated,
};
