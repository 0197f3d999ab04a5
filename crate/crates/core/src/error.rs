//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Errors carry a coarse
//! category used by the command-line front end to pick an exit code.

use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("graph error at node `{node}`: {message}")]
    Graph { node: String, message: String },

    #[error("state error: {0}")]
    State(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("empty loss: {0}")]
    EmptyLoss(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("extent error: {0}")]
    Extent(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("invalid name `{0}`")]
    Name(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("corruption: {0}")]
    Corruption(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("fold {fold} of configuration {theta}: {source}")]
    CrossValidation {
        theta: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification for exit codes and machine-readable reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Runtime,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Data => "data",
            Category::Runtime => "runtime",
        }
    }

    /// 2 for configuration problems, 3 for bad input data, 4 for everything else.
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Runtime => 4,
        }
    }
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::CrossValidation { source, .. } => source.category(),
            Error::Config { .. } | Error::Parameter(_) | Error::Name(_) => Category::Config,
            Error::Data(_)
            | Error::EmptyLoss(_)
            | Error::UndefinedMetric(_)
            | Error::Format { .. }
            | Error::Parse { .. }
            | Error::Extent(_)
            | Error::NotFound(_)
            | Error::Integrity(_)
            | Error::Corruption(_)
            | Error::Json(_) => Category::Data,
            Error::Shape(_)
            | Error::Range(_)
            | Error::Graph { .. }
            | Error::State(_)
            | Error::Conflict(_)
            | Error::Io(_) => Category::Runtime,
        }
    }
}
