use std::path::PathBuf;

use crate::hedgehog::ConstraintEdge;
use crate::grid::{LabelId, ScribbleIssue};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid scribbles: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScribbles(Vec<ScribbleIssue>),

    /// The starting labeling violates hedgehog constraints; carries the offending edges.
    #[error("labeling is infeasible: {} violated constraint edge(s)", .violations.len())]
    Infeasible { violations: Vec<Violation> },

    /// A pairwise move term failed g(0,0) + g(1,1) <= g(0,1) + g(1,0).
    #[error("non-submodular pairwise term between pixels {p} and {q}")]
    NotSubmodular { p: usize, q: usize },

    #[error("internal invariant failure: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// A violated constraint edge `from -> to` of `label`'s edge set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub label: LabelId,
    pub edge: ConstraintEdge,
}
