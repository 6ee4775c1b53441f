use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("variance of the sufficient statistic is not positive at theta={theta}")]
    NonsingularityViolated { theta: f64 },
    #[error(
        "cumulant derivative check failed at theta={theta}: analytic {analytic}, numeric {numeric}"
    )]
    DerivativeMismatch {
        theta: f64,
        analytic: f64,
        numeric: f64,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("parameter {value} at index {index} is outside the box [-{bound}, {bound}]")]
    ParameterOutOfBox {
        index: usize,
        value: f64,
        bound: f64,
    },
    #[error("lambda {lambda} is outside [-{bound}, {bound}]")]
    LambdaOutOfRange { lambda: f64, bound: f64 },
    #[error("no cloud point lies in the ball")]
    EmptyIntersection,
    #[error("n={n} is not a perfect {q}-th power")]
    LatticeSize { q: usize, n: usize },
    #[error("entropy increases from {low} at eps={eps_low} to {high} at eps={eps_high}")]
    NotMonotone {
        eps_low: f64,
        low: f64,
        eps_high: f64,
        high: f64,
    },
    #[error("tree invariant violated: {0}")]
    InvariantViolation(String),
    #[error("level {level} would hold {nodes} nodes, above the cap of {cap}")]
    NodeCapExceeded {
        level: usize,
        nodes: usize,
        cap: usize,
    },
    #[error("traversal needs {requested} levels but the tree has {depth}")]
    DepthExceeded { requested: usize, depth: usize },
    #[error("point is not a member of the constraint set")]
    NotInSet,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// Stable short code used in machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonsingularityViolated { .. } => "E_NONSINGULAR",
            Error::DerivativeMismatch { .. } => "E_DERIVATIVE",
            Error::DimensionMismatch { .. } => "E_DIMENSION",
            Error::ParameterOutOfBox { .. } => "E_OUT_OF_BOX",
            Error::LambdaOutOfRange { .. } => "E_LAMBDA",
            Error::EmptyIntersection => "E_EMPTY",
            Error::LatticeSize { .. } => "E_LATTICE",
            Error::NotMonotone { .. } => "E_NOT_MONOTONE",
            Error::InvariantViolation(_) => "E_INVARIANT",
            Error::NodeCapExceeded { .. } => "E_NODE_CAP",
            Error::DepthExceeded { .. } => "E_DEPTH",
            Error::NotInSet => "E_NOT_IN_SET",
            Error::InvalidArgument(_) => "E_ARGUMENT",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
