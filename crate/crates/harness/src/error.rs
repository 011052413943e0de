use dcg_core::DcgError;
use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("held-out data reached training: {0}")]
    Isolation(String),

    #[error(transparent)]
    Core(#[from] DcgError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<dcg_autodiff::AutodiffError> for HarnessError {
    fn from(e: dcg_autodiff::AutodiffError) -> Self {
        Self::Core(e.into())
    }
}

impl HarnessError {
    /// Process exit code: 2 for configuration errors, 3 for numeric
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Core(e) if e.is_numeric() => 3,
            _ => 1,
        }
    }
}
