use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {matrix} at ({row}, {col})")]
    NonFinite {
        matrix: &'static str,
        row: usize,
        col: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical failure for gene {gene}: {reason}")]
    GeneNumerical { gene: usize, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate truncation: interval ({low}, {high}) has mass below 1e-300")]
    DegenerateTruncation { low: f64, high: f64 },

    #[error("degenerate trace `{0}`: zero variance")]
    DegenerateTrace(String),

    #[error("trace `{label}` too short: {len} values, need at least {min}")]
    TraceTooShort {
        label: String,
        len: usize,
        min: usize,
    },

    #[error("empty trace: no retained samples")]
    EmptyTrace,

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::GeneNumerical { .. }
            | Error::Numerical(_)
            | Error::DegenerateTruncation { .. } => true,
            Error::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
