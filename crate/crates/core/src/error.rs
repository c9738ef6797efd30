use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("training error in {location}: {detail}")]
    Training { location: String, detail: String },
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("stream order violated for user {user}: time {time} precedes {last}")]
    StreamOrder { user: usize, last: i64, time: i64 },
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("action space error: {0}")]
    ActionSpace(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("incompatible artifacts: {0}")]
    Compatibility(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("event {index}: {source}")]
    AtEvent {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn training(location: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Training {
            location: location.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn at_event(self, index: usize) -> Self {
        match self {
            e @ Error::AtEvent { .. } => e,
            e => Error::AtEvent {
                index,
                source: Box::new(e),
            },
        }
    }
}
