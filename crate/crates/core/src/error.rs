use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("point ({t}, {x}, {y}) lies outside the solid torus")]
    OutsideTorus { t: f64, x: f64, y: f64 },

    #[error("point is not in the image of F (best branch residual {residual:e})")]
    NotInImage { residual: f64 },

    #[error(
        "inverse branch is ambiguous: branches {first} and {second} both reconstruct the point"
    )]
    AmbiguousBranch { first: usize, second: usize },

    #[error("argument {value} outside the validated domain (limit {limit})")]
    OutOfDomain { value: f64, limit: f64 },

    #[error("series tail bound {bound:e} too large at order K={order}")]
    TailTooLarge { bound: f64, order: usize },

    #[error("integrator step size fell below {min_step:e} at t={t}")]
    StepFailure { t: f64, min_step: f64 },

    #[error("integrator budget of {max_steps} steps exceeded at t={t}")]
    BudgetExceeded { t: f64, max_steps: usize },

    #[error(
        "psi blend on [r0, r1] is not strictly increasing (derivative {derivative:e} at r={r:e})"
    )]
    NonMonotoneBlend { r: f64, derivative: f64 },

    #[error("closed form is only valid in the pure-power region: {0}")]
    DomainError(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("trajectory never exits the ball (entry on the stable manifold)")]
    NoExit,

    #[error("curve did not reach the requested span within {iterations} iterations")]
    FailedToSpan { iterations: usize },

    #[error("curve refinement cannot keep adjacent gaps below {eps:e}: {reason}")]
    CurveTooCoarse { eps: f64, reason: String },

    #[error("fit window has {usable} usable bins, need at least {required}")]
    WindowTooSparse { usable: usize, required: usize },

    #[error("observable means must be positive, got {mean1} and {mean2}")]
    ZeroMeans { mean1: f64, mean2: f64 },

    #[error("bad base set: {0}")]
    BadBase(String),

    #[error("orbit failed at step {step}: {source}")]
    Orbit { step: u64, source: Box<Error> },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
