use thiserror::Error;

/// Errors produced anywhere in the tactile pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("press depth {depth} mm punches through gel of thickness {h0} mm")]
    PunchThrough { depth: f64, h0: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("contact geometry: {0}")]
    Geometry(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Dimension(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

pub(crate) fn len_err(what: &str, got: usize, expected: usize) -> Error {
    Error::Dimension(format!("{what}: {got} values, expected {expected}"))
}
