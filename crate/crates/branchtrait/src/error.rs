use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("degenerate node {0}: children traits sum to zero")]
    DegenerateNode(String),
    #[error("point ({x}, {y}) lies outside the grid hull")]
    Extrapolation { x: f64, y: f64 },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("Fisher information is not invertible (condition number {0:e})")]
    NonInvertibleInformation(f64),
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}
