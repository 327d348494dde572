use thiserror::Error;

/// Errors produced by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or input value lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A vector argument has the wrong number of coordinates.
    #[error("arity mismatch: expected {expected} coordinates, got {got}")]
    Arity { expected: usize, got: usize },

    /// Exact enumeration would exceed the configured state cap.
    #[error("capacity exceeded: {states} states > cap {cap}; use the Monte Carlo estimators or raise HIERSTAB_CAP")]
    Capacity { states: u128, cap: u64 },

    /// The table is not multilinear over its supports.
    #[error("function is not multilinear: reconstruction residual {residual:.3e} at table index {index}")]
    NotMultilinear { index: usize, residual: f64 },

    /// A hierarchy does not have a valid tree/partition structure.
    #[error("invalid hierarchy structure: {0}")]
    Structure(String),

    /// A component's certified non-linearity is below its declared value.
    #[error("certification failed at node {node}: certified epsilon {certified:.6} < declared {declared:.6}")]
    Certification {
        node: String,
        declared: f64,
        certified: f64,
    },

    /// An iterative numerical method did not converge.
    #[error("numerical failure in {what}: residual {residual:.3e}")]
    Numerical { what: String, residual: f64 },

    /// Malformed input descriptor.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
