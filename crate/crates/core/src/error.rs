use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    /// Invalid user-supplied configuration (grid, parameters, names).
    #[error("configuration error: {0}")]
    Config(String),

    /// Simulated or user data violates a documented invariant.
    #[error("data error: {0}")]
    Data(String),

    /// A precondition of a property check does not hold on the realized paths.
    #[error("precondition error: {0}")]
    Precondition(String),

    /// The numerical scheme failed (implicit step, inner solve).
    #[error("scheme error at node {node}: {message}")]
    Scheme { node: usize, message: String },

    /// Linear algebra problem in a regression.
    #[error("numeric error at node {node}: {message}")]
    Numeric { node: usize, message: String },

    /// Picard iteration stopped contracting.
    #[error("picard iteration diverged after {} iterations", history.len())]
    Divergence { history: Vec<f64> },

    /// Error raised inside one sub-interval of a subdivided solve.
    #[error("sub-interval {interval}: {source}")]
    Interval {
        interval: usize,
        #[source]
        source: Box<LabError>,
    },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("artifact format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn config(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

pub(crate) fn data(msg: impl Into<String>) -> LabError {
    LabError::Data(msg.into())
}
