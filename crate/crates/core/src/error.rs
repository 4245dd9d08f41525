use thiserror::Error;

/// Errors raised by the kernel-learning library.
#[derive(Debug, Error)]
pub enum EklError {
    #[error("structural error: {0}")]
    Structure(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric positive semi-definite: {0}")]
    NotPsd(String),

    #[error("alignment undefined: {0}")]
    UndefinedAlignment(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EklError {
    /// Short machine-readable tag, used by the CLI's one-line error output.
    pub fn kind(&self) -> &'static str {
        match self {
            EklError::Structure(_) => "structure",
            EklError::Dimension(_) => "dimension",
            EklError::InvalidParameter(_) => "invalid-parameter",
            EklError::NotPsd(_) => "not-psd",
            EklError::UndefinedAlignment(_) => "undefined-alignment",
            EklError::Numerical(_) => "numerical",
            EklError::Data(_) => "data",
            EklError::ModelFormat(_) => "model-format",
            EklError::Io(_) => "io",
            EklError::Csv(_) => "csv",
            EklError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, EklError>;
