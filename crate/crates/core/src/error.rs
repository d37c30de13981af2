use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("duplicate utt_id {0:?}")]
    DuplicateId(String),

    #[error("utt_id {0:?} not found in {1}")]
    UnknownId(String, &'static str),

    #[error("{utt_id}: field `{field}`: {message}")]
    Shape { utt_id: String, field: &'static str, message: String },

    #[error("{utt_id}: attention row (layer {layer}, head {head}, row {row}) sums to {sum}")]
    RowSum { utt_id: String, layer: usize, head: usize, row: usize, sum: f64 },

    #[error("{utt_id}: word_spans: {message}")]
    Span { utt_id: String, message: String },

    #[error("{utt_id}: {field} has {found} entries, expected {expected}")]
    LengthMismatch { utt_id: String, field: &'static str, expected: usize, found: usize },

    #[error("{utt_id}: {field} value {value} outside [0, 1]")]
    Range { utt_id: String, field: &'static str, value: f64 },

    #[error("{0}: scaling mode requires gradients, none present")]
    MissingGradients(String),

    #[error("{0}: no reference transcript")]
    MissingReference(String),

    #[error("{0}: every token is special, no token importance can be computed")]
    AllSpecial(String),

    #[error("{0}: score {1} is not finite")]
    NonFinite(String, f64),

    #[error("{0}")]
    Invalid(String),

    #[error("failed to write output: {0}")]
    Output(#[source] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 1 for everything internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Output(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
