use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    /// Some power of the kernel never becomes entrywise positive.
    #[error("kernel is not primitive on its survivor states; zero entries of K^{power} at {pairs:?}")]
    NotPrimitive { power: usize, pairs: Vec<(usize, usize)> },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("uniformization rate {theta} is below the largest exit rate {required}")]
    RateTooSmall { theta: f64, required: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("survival mass vanished at step {step}; horizon too large")]
    HorizonTooLarge { step: u64 },

    #[error("spectral radius {rho} is not below 1; the chain is never absorbed")]
    NoAbsorption { rho: f64 },

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("h-transform is ill-conditioned: eta({state}) = {value:e}")]
    IllConditioned { state: usize, value: f64 },

    #[error("minorization condition not satisfied for t0 up to {t0_max}")]
    ConditionNotSatisfied { t0_max: u64 },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("too few survivors: {survivors} (need at least {needed})")]
    TooFewSurvivors { survivors: usize, needed: usize },

    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}
