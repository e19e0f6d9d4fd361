use thiserror::Error;

/// Errors raised by the network conformal toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel evaluated to {value} at ({x}, {y}); expected a finite nonnegative value")]
    InvalidKernelValue { x: f64, y: f64, value: f64 },

    #[error("row {row} of the referral weights has tied entries at columns {a} and {b}")]
    TiedWeights { row: usize, a: usize, b: usize },

    #[error("node index {index} out of range for graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("random walk reached node {node}, which has no neighbors")]
    WalkStuck { node: usize },

    #[error("operation requires an undirected graph")]
    DirectedGraph,

    #[error("node {node} is isolated")]
    IsolatedNode { node: usize },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("design matrix is rank deficient (pivot {pivot:e}); use a positive ridge penalty")]
    RankDeficient { pivot: f64 },

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("eigensolver did not converge (residual {residual:e})")]
    EigenNoConvergence { residual: f64 },

    #[error("selected sample has {size} nodes; split conformal needs at least 3")]
    SampleTooSmall { size: usize },

    #[error("fold split left {fold} empty")]
    EmptyFold { fold: &'static str },

    #[error("no node satisfies the start policy: {0}")]
    NoQualifyingStart(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed edge list at line {line}: {reason}")]
    EdgeList { line: usize, reason: String },

    #[error("malformed node table at line {line}: {reason}")]
    NodeTable { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
