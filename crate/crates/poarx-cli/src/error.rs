//! Command-line error taxonomy mapped to exit codes.

use std::fmt;

pub type CliResult<T> = Result<T, CliError>;

/// Exit code 1: bad invocation. Exit code 2: unreadable or inconsistent
/// inputs. Exit code 3: the numerics failed or did not converge.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<poarx::Error> for CliError {
    fn from(e: poarx::Error) -> Self {
        match e {
            poarx::Error::Invalid(m) => CliError::Data(m),
            poarx::Error::Domain(m) => CliError::Data(m),
            poarx::Error::Numerical(m) => CliError::Numerical(m),
            poarx::Error::NonConvergence(m) => CliError::Numerical(m),
        }
    }
}
