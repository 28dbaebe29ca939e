use thiserror::Error;

/// Errors raised by the library. Numerical failures carry the module and
/// operation that produced them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{context}: matrix is singular or not positive definite ({detail})")]
    Singular {
        context: &'static str,
        detail: String,
    },

    #[error("{context}: no convergence after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{context}: operator defect ({detail})")]
    OperatorDefect {
        context: &'static str,
        detail: String,
    },

    #[error("interpolation: singular Gram matrix on element {element} (min pivot {pivot:.3e})")]
    SingularGram { element: usize, pivot: f64 },

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("generator: {0}")]
    Generator(String),

    #[error("audit: {0}")]
    Audit(String),

    #[error("eigen: subgraph is disconnected (lambda = {lambda:.3e})")]
    Disconnected { lambda: f64 },

    #[error("oracle: problem size {size} exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
