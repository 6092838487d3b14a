use thiserror::Error;

use crate::net::{LinkId, NodeId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("unknown link {0}")]
    UnknownLink(LinkId),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid scenario: {0}")]
    Config(String),

    #[error("policy has no row for tick {tick}, link {link}, destination {destination}")]
    IncompletePolicy {
        tick: usize,
        link: LinkId,
        destination: LinkId,
    },

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("event loop exceeded {0} events without terminating")]
    Livelock(usize),

    #[error("line {line}: {kind}: {message}")]
    Parse {
        line: usize,
        kind: ParseErrorKind,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    MissingEndOfMetadata,
    MissingMetadata,
    BadMetadata,
    NonNumeric,
    MalformedRow,
    RowCountMismatch,
    NodeOutOfRange,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ParseErrorKind::MissingEndOfMetadata => "missing <END OF METADATA>",
            ParseErrorKind::MissingMetadata => "missing metadata",
            ParseErrorKind::BadMetadata => "bad metadata",
            ParseErrorKind::NonNumeric => "non-numeric field",
            ParseErrorKind::MalformedRow => "malformed row",
            ParseErrorKind::RowCountMismatch => "row count mismatch",
            ParseErrorKind::NodeOutOfRange => "node out of range",
        };
        f.write_str(s)
    }
}

impl Error {
    pub(crate) fn parse(line: usize, kind: ParseErrorKind, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            kind,
            message: message.into(),
        }
    }
}
