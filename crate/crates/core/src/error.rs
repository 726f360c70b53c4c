use thiserror::Error;

/// Error type shared by the whole toolkit.
#[derive(Error, Debug)]
pub enum Error {
    /// Shape or squareness violations.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid caller-supplied parameter (k out of range, bad layer sizes, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A documented precondition or invariant was violated.
    #[error("contract error: {0}")]
    Contract(String),

    /// Numerical solver failure (singular pencil, non-convergence, ...).
    #[error("solver error: {0}")]
    Solver(String),

    /// Text parsing failures, with location information where available.
    #[error("parse error: {0}")]
    Parse(String),

    /// Configuration file problems.
    #[error("config error: {0}")]
    Config(String),

    /// File-system failures, annotated with the path involved.
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code category for the CLI: parse/config -> 2, solver -> 3, i/o -> 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Config(_) | Error::Parameter(_) => 2,
            Error::Solver(_) | Error::Contract(_) | Error::Dimension(_) => 3,
            Error::Io(_) => 4,
        }
    }
}
