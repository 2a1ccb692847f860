use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("asymmetric weight between {from} and {to}: {forward} vs {backward}")]
    AsymmetricWeight {
        from: String,
        to: String,
        forward: f64,
        backward: f64,
    },

    #[error("non-positive weight {weight} between {from} and {to}")]
    NonPositiveWeight { from: String, to: String, weight: f64 },

    #[error("vertex {0} has an empty neighbor list")]
    EmptyNeighborhood(String),

    #[error("window has no escape edges (total boundary weight is zero)")]
    NoEscapeEdges,

    #[error("vertex {0} is outside the window")]
    OutsideWindow(String),

    #[error("vertex set must be nonempty")]
    EmptySet,

    #[error("singular linear system: {0}")]
    Singular(&'static str),

    #[error("{0}")]
    Domain(String),

    #[error("internal consistency check failed: {what} ({left} vs {right})")]
    Inconsistent {
        what: &'static str,
        left: f64,
        right: f64,
    },

    #[error(
        "no convergence by radius {radius}: last iterate {last}, previous {previous}, tolerance {tol}"
    )]
    NoConvergence {
        radius: usize,
        last: f64,
        previous: f64,
        tol: f64,
    },

    #[error("Laplace condition violated: sup GV = {0} >= 1")]
    LaplaceCondition(f64),

    #[error("smallness condition violated: sup GV + sum(V)/lambda = {0} >= 1")]
    Smallness(f64),

    #[error("covariance not positive semi-definite (last jitter tried {0})")]
    NotPsd(f64),

    #[error("sample must be nonempty")]
    EmptySample,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
