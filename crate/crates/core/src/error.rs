//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("empty segment: {0}")]
    EmptySegment(String),

    #[error("feature buffer is empty")]
    EmptyBuffer,

    #[error("label {label} out of range for {n_classes} classes")]
    Label { label: usize, n_classes: usize },

    #[error("unknown label value {0:?}")]
    UnknownLabel(String),

    #[error("training diverged at segment {segment}, step {step}: loss = {loss}")]
    Divergence {
        segment: usize,
        step: usize,
        loss: f64,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power trace does not cover [{start}, {end}]")]
    MissingTrace { start: f64, end: f64 },

    #[error("schema error{}: {message}", location(.row, .column))]
    Schema {
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },

    #[error("cannot split a segment of {0} row(s)")]
    DegenerateSplit(usize),

    #[error("need at least {needed} algorithms, got {got}{}", if *.needed == 3 { " (use the Wilcoxon signed-rank test for two)" } else { "" })]
    InsufficientAlgorithms { needed: usize, got: usize },

    #[error("value out of supported range: {0}")]
    Range(String),

    #[error("missing cell at row {row} ({dataset}), column {column} ({algorithm})")]
    MissingCell {
        row: usize,
        column: usize,
        dataset: String,
        algorithm: String,
    },

    #[error("segment {segment}: {source}")]
    InSegment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

fn location(row: &Option<usize>, column: &Option<String>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" at row {r}, column {c:?}"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" in column {c:?}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::Shape {
            op,
            left: left.into(),
            right: right.into(),
        }
    }

    pub(crate) fn schema(row: Option<usize>, column: Option<&str>, message: impl Into<String>) -> Self {
        Error::Schema {
            row,
            column: column.map(str::to_owned),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Attach a segment index, unless one is already attached.
    pub fn in_segment(self, segment: usize) -> Self {
        match self {
            e @ Error::InSegment { .. } => e,
            e @ Error::Divergence { .. } => e,
            e => Error::InSegment {
                segment,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, with any segment context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InSegment { source, .. } => source.root(),
            e => e,
        }
    }
}
