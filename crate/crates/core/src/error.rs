use alloc::string::String;

/// Errors raised by the tracker core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid ontology: {0}")]
    Ontology(String),

    #[error("inconsistent assignment: {0}")]
    InconsistentAssignment(String),

    #[error("invalid distribution for {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("sampling error: {0}")]
    Sampling(String),
}

pub type Result<T> = core::result::Result<T, Error>;
