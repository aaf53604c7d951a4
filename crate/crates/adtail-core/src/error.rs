use thiserror::Error;

/// Error type shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A mathematical precondition on the inputs is violated.
    #[error("domain error: {0}")]
    Domain(String),
    /// Bad configuration: unreadable files, missing table entries, malformed grids.
    #[error("configuration error: {0}")]
    Config(String),
    /// Evaluation would overflow the representable range.
    #[error("range error: {0}")]
    Range(String),
    /// An iterative solver failed to converge or a numeric identity broke down.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The requested computation exceeds the configured resource limits.
    #[error("resource error: {0}")]
    Resource(String),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numeric, 4 resource.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) => 2,
            Error::Range(_) | Error::Numeric(_) => 3,
            Error::Resource(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
