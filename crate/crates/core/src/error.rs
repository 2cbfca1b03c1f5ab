use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("corrupt payload: {0}")]
    Corruption(String),

    /// A client has no local samples and sits the round out.
    #[error("client {0} has an empty local dataset")]
    EmptyClient(usize),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn at_round(self, round: usize) -> Self {
        match self {
            e @ Error::Round { .. } => e,
            e => Error::Round {
                round,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad inputs rather than by the run itself.
    pub fn is_configuration(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::Format(_)
            | Error::Consistency(_)
            | Error::Partition(_)
            | Error::Io { .. } => true,
            Error::Round { source, .. } => source.is_configuration(),
            _ => false,
        }
    }
}
