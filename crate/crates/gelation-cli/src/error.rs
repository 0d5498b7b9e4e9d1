use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("numerical failure: {0}")]
    Numerical(gelation::Error),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{failed} of {total} checks failed")]
    Checks { failed: usize, total: usize },
    #[error("{failed} of {total} sweep runs failed")]
    Sweep { failed: usize, total: usize },
}

impl CliError {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), msg: msg.into() }
    }

    /// Parameter errors become config errors under `block`; the rest are numerical.
    pub fn from_lib(e: gelation::Error, block: &str) -> Self {
        match e {
            gelation::Error::Param { name, reason } => {
                let path = if name.contains('.') { name } else { format!("{block}.{name}") };
                CliError::Config { path, msg: reason }
            }
            gelation::Error::Domain(msg) => CliError::Config { path: block.to_string(), msg },
            other => CliError::Numerical(other),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) | CliError::Output { .. } | CliError::Sweep { .. } => 3,
            CliError::Checks { .. } => 1,
        }
    }
}

impl From<gelation::Error> for CliError {
    fn from(e: gelation::Error) -> Self {
        match e {
            gelation::Error::Param { .. } => CliError::from_lib(e, "config"),
            other => CliError::Numerical(other),
        }
    }
}
