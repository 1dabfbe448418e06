use thiserror::Error;

/// Failure of one CLI run, carrying its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: config, flags or parameter ranges. Exit code 1.
    #[error("validation error: {0}")]
    Validation(String),
    /// A computation failed on valid input. Exit code 2.
    #[error("numerical failure in {module}: {message}")]
    Numerical { module: &'static str, message: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 1,
            CliError::Numerical { .. } => 2,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }
}

/// Classifies a core error raised while running `module` with the given
/// parameter description.
pub fn from_core(module: &'static str, params: &str, e: ddw_core::Error) -> CliError {
    use ddw_core::Error as E;
    match e {
        E::InvalidParameter { .. } | E::OffGrid { .. } | E::DtMismatch { .. } => CliError::Validation(e.to_string()),
        other => CliError::Numerical { module, message: format!("{params}: {other}") },
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
