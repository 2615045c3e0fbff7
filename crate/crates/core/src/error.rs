use thiserror::Error;

/// Errors raised by the sampling pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CemsError {
    /// Shapes or column layouts do not agree with the dataset schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// Input values are unusable (non-finite, non-numeric, empty).
    #[error("data error: {0}")]
    Data(String),
    /// A caller-supplied parameter is out of its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// The neighborhood does not support the requested local geometry.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// A linear-algebra routine failed or produced non-finite output.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Intrinsic-dimension estimation had too little usable data.
    #[error("estimation error: {0}")]
    Estimation(String),
}

/// Coarse failure category, used for CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Geometry,
}

impl CemsError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CemsError::Parameter(_) => ErrorCategory::Config,
            CemsError::Schema(_) | CemsError::Data(_) | CemsError::Estimation(_) => ErrorCategory::Data,
            CemsError::Geometry(_) | CemsError::Numeric(_) => ErrorCategory::Geometry,
        }
    }

    pub fn is_geometry(&self) -> bool {
        self.category() == ErrorCategory::Geometry
    }
}

pub type Result<T, E = CemsError> = std::result::Result<T, E>;
