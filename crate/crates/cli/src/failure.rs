use std::fmt;

use tvspec_core::Error;

/// Outcome classes mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Exit 1: the run completed but a verification check failed.
    Verification(String),
    /// Exit 2: malformed input or parameters.
    Input(String),
    /// Exit 3: synthesis or numerical failure.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Input(_) | Error::Dimension(_) | Error::Horizon(_) | Error::InvalidParameter(_) => {
                Failure::Input(e.to_string())
            }
            Error::Verification { .. } => Failure::Verification(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}
