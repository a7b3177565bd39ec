//! Command-line failures and their exit codes.

use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },

    /// An earlier stage has not produced its output yet.
    #[error("missing artifact {path}; {hint}")]
    MissingArtifact { path: PathBuf, hint: String },
}

/// Exit code for an error chain: usage 2, numerical 4, anything else 3.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) | CliError::Config { .. } => EXIT_USAGE,
                CliError::MissingArtifact { .. } => EXIT_DATA,
            };
        }
        if let Some(e) = cause.downcast_ref::<radstab_core::Error>() {
            return if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            };
        }
    }
    EXIT_DATA
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn codes_follow_the_cause() {
        let usage = anyhow::Error::new(CliError::Usage("bad".into()));
        assert_eq!(exit_code(&usage), EXIT_USAGE);
        let numeric: anyhow::Result<()> = Err(radstab_core::Error::NotConverged {
            iterations: 1,
            residual: 1.0,
        })
        .context("training split 3");
        assert_eq!(exit_code(&numeric.unwrap_err()), EXIT_NUMERICAL);
        let data = anyhow::Error::new(radstab_core::Error::EmptyMask);
        assert_eq!(exit_code(&data), EXIT_DATA);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), EXIT_DATA);
    }
}
