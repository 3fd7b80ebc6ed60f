use thiserror::Error;

/// Errors raised by the analytic, inversion and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsdError {
    #[error("argument {value} outside the finiteness domain ({lo}, {hi}) of the exponent")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("derivative order {0} not supported (maximum is 4)")]
    UnsupportedOrder(usize),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is not stable: {0}")]
    Unstable(String),

    #[error("no interior minimum of the exponent found inside its domain")]
    NoInteriorMinimum,

    #[error("minimum of the exponent is {0}, which is not strictly negative")]
    NotStrictlyNegative(f64),

    #[error("argument {s} lies below the branch point {zeta_star}")]
    BelowBranchPoint { s: f64, zeta_star: f64 },

    #[error("singular denominator: {0}")]
    SingularDenominator(String),

    #[error("operation requires a {expected} model")]
    WrongKind { expected: &'static str },

    #[error("{0}")]
    Unsupported(String),

    #[error("convergence failure: {0}")]
    ConvergenceFailure(String),

    #[error("initial workload must be positive, got {0}")]
    InvalidInitial(f64),

    #[error("no replication survived; the conditional estimate is undefined")]
    DegenerateSample,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, QsdError>;
