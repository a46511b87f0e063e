use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("no trial reached the correlation threshold; report written to {}", .0.display())]
    EmptySelection(PathBuf),

    #[error("{0}")]
    Data(String),

    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },

    #[error("{0}")]
    Run(String),
}

impl CliError {
    /// 0 success, 2 usage, 3 empty selection, 4 data format, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::EmptySelection(_) => 3,
            CliError::Data(_) => 4,
            CliError::Io { .. } | CliError::Run(_) => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<cgraar::Error> for CliError {
    fn from(e: cgraar::Error) -> Self {
        use cgraar::Error as E;
        match e {
            E::InvalidConfig(_) | E::Oversampling { .. } => CliError::Usage(e.to_string()),
            E::Diverged { .. } | E::ZeroNorm(_) => CliError::Run(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<cgraar::container::ContainerError> for CliError {
    fn from(e: cgraar::container::ContainerError) -> Self {
        CliError::Data(e.to_string())
    }
}
