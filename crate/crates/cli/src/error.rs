use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dipolar_core::Error),

    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },

    #[error("invalid ensemble file {path}: {source}")]
    Schema {
        path: String,
        source: serde_json::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{0} verification check(s) failed")]
    VerifyFailed(usize),
}

impl CliError {
    /// 1 for numerical trouble, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 1,
            CliError::Core(_) => 2,
            CliError::Read { .. } | CliError::Schema { .. } | CliError::Usage(_) => 2,
            CliError::Write { .. } | CliError::VerifyFailed(_) => 1,
        }
    }
}
