use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, UkdError>;

/// Diagnostics raised while reading one of the text file formats.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic line: expected `{expected}`, found `{found}`")]
    BadMagic { expected: &'static str, found: String },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("row count mismatch: header declares {expected} rows, found {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("column count mismatch on line {line}: expected {expected} values, found {found}")]
    ColumnCountMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value `{token}` on line {line}")]
    NonFinite { line: usize, token: String },
    #[error("unparsable token `{token}` on line {line}")]
    BadToken { line: usize, token: String },
    #[error("class count mismatch across teacher bank: `{id}` has c={found}, expected c={expected}")]
    ClassMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("sample count mismatch across teacher bank: `{id}` has n={found}, expected n={expected}")]
    SampleMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("label {label} out of range for c={classes} on line {line}")]
    LabelOutOfRange {
        line: usize,
        label: usize,
        classes: usize,
    },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}

#[derive(Debug, Error)]
pub enum UkdError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("strategy mismatch: {0}")]
    StrategyMismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<UkdError>,
    },
}

impl UkdError {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        UkdError::Precondition(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        UkdError::DimensionMismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UkdError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        UkdError::Format {
            path: path.into(),
            source,
        }
    }

    /// Attach a pipeline stage name to an error.
    pub fn in_stage(self, stage: &'static str) -> Self {
        UkdError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any stage wrappers.
    pub fn root(&self) -> &UkdError {
        match self {
            UkdError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 1 usage, 2 malformed input file, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            UkdError::Format { .. } | UkdError::Io { .. } => 2,
            UkdError::Numerical(_) => 3,
            _ => 1,
        }
    }
}
