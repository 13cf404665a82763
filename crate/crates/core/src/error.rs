use thiserror::Error;

/// Errors raised by kernel construction, statistics and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain [{lo}, {hi}]^{dim}")]
    Domain {
        point: Vec<f64>,
        lo: f64,
        hi: f64,
        dim: usize,
    },
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),
    #[error("ill-conditioned system: {0}")]
    Conditioning(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("need at least 2 observations, got {0}")]
    InsufficientData(usize),
    #[error("partition alignment: {0}")]
    Alignment(String),
    #[error("point {0:?} is not covered by the partition")]
    Uncovered(Vec<f64>),
    #[error("cell {cell} has zero probability but {count} assigned observations")]
    ZeroMassCell { cell: usize, count: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown {what} `{id}`")]
    Unknown { what: &'static str, id: String },
    #[error("bad data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
