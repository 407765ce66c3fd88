use std::path::PathBuf;

use shgsteer_core::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const UNSTABLE: i32 = 3;
    pub const NUMERICAL: i32 = 4;
    pub const VALIDATION: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("missing required value {0}")]
    Missing(&'static str),

    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("cannot read config {}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{failed} of {total} validation checks failed")]
    Validation { failed: usize, total: usize },

    #[error("every cell of the map failed; first failure: {0}")]
    AllCellsFailed(Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) | CliError::AllCellsFailed(e) => core_exit_code(e),
            CliError::Missing(_) | CliError::Invalid { .. } | CliError::Config { .. } => exit::USAGE,
            CliError::Io { .. } => exit::NUMERICAL,
            CliError::Validation { .. } => exit::VALIDATION,
        }
    }
}

fn core_exit_code(e: &Error) -> i32 {
    if e.is_invalid_input() {
        exit::USAGE
    } else if e.is_instability() {
        exit::UNSTABLE
    } else if matches!(e, Error::DivergenceRate { .. }) {
        exit::VALIDATION
    } else {
        exit::NUMERICAL
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_category() {
        let unstable = CliError::from(Error::AboveThreshold {
            epsilon: 700.0,
            critical: 600.0,
        });
        assert_eq!(unstable.exit_code(), 3);
        let bad = CliError::from(Error::InvalidParameter {
            field: "kappa",
            reason: "must be positive",
        });
        assert_eq!(bad.exit_code(), 2);
        let numeric = CliError::from(Error::Singular { context: "x" });
        assert_eq!(numeric.exit_code(), 4);
        let diverged = CliError::from(Error::DivergenceRate {
            discarded: 9,
            total: 10,
            partial: None,
        });
        assert_eq!(diverged.exit_code(), 5);
        assert_eq!(CliError::Missing("--gamma-b").exit_code(), 2);
    }
}
