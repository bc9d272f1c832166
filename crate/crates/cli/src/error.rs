use thiserror::Error;

/// Process exit codes.
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;
pub const EXIT_IO: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Runtime(String),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Prefixes the message, keeping the category.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

impl From<mecdl::Error> for CliError {
    fn from(e: mecdl::Error) -> Self {
        use mecdl::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch(_) | E::PatchIndex { .. } | E::IncompletePatchSet { .. } => {
                CliError::Validation(msg)
            }
            // Unreadable or malformed input files count as I/O failures.
            E::TruncatedHeader
            | E::Header(_)
            | E::UnknownRole(_)
            | E::WrongRole { .. }
            | E::SizeMismatch { .. }
            | E::Io(_)
            | E::Image(_) => CliError::Io(msg),
            E::NonFinite(_) | E::Singular | E::SvdFailed | E::CgStalled { .. } | E::Diverged { .. } => {
                CliError::Runtime(msg)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(format!("JSON: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(format!("CSV: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
