use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("cache misses exceed accesses at line {line}")]
    MissesExceedAccesses { line: u64 },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("vocabulary has no real tokens")]
    NoRealTokens,

    #[error("degenerate labels: training data must contain both classes")]
    DegenerateLabels,

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("label {0} is not binary")]
    InvalidLabel(u8),

    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: String },

    #[error("corrupt file at line {line}, column {column}: {msg}")]
    Corrupt { line: usize, column: usize, msg: String },

    #[error("AUC undefined: {0}")]
    AucUndefined(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dataset too small: need at least {need} rows, got {got}")]
    TooSmall { need: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("hardware counters unavailable: {reason} (hint: {hint})")]
    Capability { reason: String, hint: String },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(err: &serde_json::Error, line_offset: usize) -> Self {
        Error::Corrupt {
            line: err.line() + line_offset,
            column: err.column(),
            msg: err.to_string(),
        }
    }
}
