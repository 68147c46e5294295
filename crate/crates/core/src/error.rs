use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite objective value {value} at theta = {theta:?}")]
    Evaluation { theta: Vec<f64>, value: f64 },

    #[error("objective value {value} exceeds declared upper bound {bound} at theta = {theta:?}")]
    BoundViolated { theta: Vec<f64>, value: f64, bound: f64 },

    #[error("matrix is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("matrix is not {what}: smallest eigenvalue {min_eig:e}")]
    NotDefinite { what: &'static str, min_eig: f64 },

    #[error("degenerate estimate: every sampled exponent underflowed")]
    DegenerateEstimate,

    #[error("exponent {exponent} overflows at sample {sample}")]
    Overflow { sample: usize, exponent: f64 },

    #[error("field has no gradient")]
    MissingGradient,

    #[error("missing derivative: {0}")]
    MissingDerivative(&'static str),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: String, expected: usize, got: usize },

    #[error("trajectory diverged at t = {t}")]
    Divergence { t: usize },

    #[error("non-finite gradient estimate at iteration {iter}")]
    NonFiniteGradient { iter: usize },

    #[error("convexity certificate fails: margin {margin:e} below tolerance -{tolerance:e}")]
    Uncertified { margin: f64, tolerance: f64 },

    #[error("no feasible starting point: {0}")]
    Infeasible(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn dims(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch { context: context.into(), expected, got }
    }
}
