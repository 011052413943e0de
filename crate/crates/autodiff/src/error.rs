use thiserror::Error;

pub type Result<T, E = AutodiffError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AutodiffError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("numeric error: {op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("node {0} is not part of this graph")]
    MissingNode(usize),
}

impl AutodiffError {
    pub(crate) fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        Self::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Self::NonFinite { .. })
    }
}
