use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId {
        path: PathBuf,
        id: String,
        first: usize,
        second: usize,
    },

    #[error("unknown qrels format {0:?} (expected trec-qrels or scored-tsv)")]
    UnknownFormat(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample violates closure: {0}")]
    Closure(String),

    #[error("cluster member {0:?} is missing from the corpus table")]
    MissingEntity(String),

    #[error("node {node:?} carries conflicting labels {first:?} and {second:?}")]
    ConflictingLabels {
        node: String,
        first: String,
        second: String,
    },

    #[error("target of {target} entities is unreachable: at most {max_expected} can be expected")]
    UnreachableTarget { target: u64, max_expected: f64 },

    #[error("fit did not converge after {iterations} iterations (last rho = {last_rho})")]
    NoConvergence { iterations: usize, last_rho: f64 },

    #[error("stage {stage:?} failed at {location}: {source}")]
    Stage {
        stage: String,
        location: String,
        #[source]
        source: Box<Error>,
    },

    #[error("corrupt record encoding: {0}")]
    Codec(String),

    #[error("engine: {0}")]
    Engine(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's input data rather than I/O or internal failures.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Engine(_) => false,
            Error::Stage { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}
