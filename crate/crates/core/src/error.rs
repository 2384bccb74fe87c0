use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator dimension must be at least 1")]
    EmptyOperator,

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("operator is not an analytic generator: sector angle {sector_angle:.6} >= pi/2")]
    NotSectorial { sector_angle: f64 },

    #[error("operator is not accretive: margin {margin:.3e}")]
    NotAccretive { margin: f64 },

    #[error("operator is not injective (smallest |eigenvalue| {smallest:.3e})")]
    NotInjective { smallest: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("interval [{lo}, {hi}] is outside the grid span [{span_lo}, {span_hi}]")]
    OutsideGrid {
        lo: f64,
        hi: f64,
        span_lo: f64,
        span_hi: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("alpha = {alpha}: {source}")]
    AtAlpha {
        alpha: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("quadratic estimate did not converge: {0}")]
    NonConvergent(String),

    #[error("not a weak solution of this f: {0}")]
    NotWeakSolution(String),

    #[error("serialization: {0}")]
    Serde(String),
}
