use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Capacity(_) => 3,
            LabError::Solver(_) | LabError::Numeric(_) => 4,
            LabError::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
