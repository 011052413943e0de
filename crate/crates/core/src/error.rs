use dcg_autodiff::AutodiffError;
use thiserror::Error;

pub type Result<T, E = DcgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DcgError {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix is not definite: pivot {pivot} is {value:e}")]
    NotDefinite { pivot: usize, value: f64 },

    #[error(transparent)]
    Autodiff(#[from] AutodiffError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file {path}: {detail}")]
    Format { path: String, detail: String },
}

impl DcgError {
    pub fn contract(msg: impl Into<String>) -> Self {
        Self::Contract(msg.into())
    }

    /// True for NaN/Inf style failures, as opposed to misuse or I/O.
    pub fn is_numeric(&self) -> bool {
        match self {
            Self::Numeric(_) => true,
            Self::Autodiff(e) => e.is_numeric(),
            _ => false,
        }
    }
}
