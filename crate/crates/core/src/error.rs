use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Candidates12,
    Candidates32,
    Clustering,
    Linkage,
    Weights,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Candidates12 => "candidate collection (modes 1,2)",
            Stage::Candidates32 => "candidate collection (modes 3,2)",
            Stage::Clustering => "clustering",
            Stage::Linkage => "triple linkage",
            Stage::Weights => "weight fitting",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for mode {mode} of size {size}")]
    IndexOutOfRange { mode: usize, index: usize, size: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reference tensor has zero Frobenius norm")]
    ZeroNorm,

    #[error("invalid mode permutation {0:?}")]
    InvalidPermutation([usize; 3]),

    #[error("invalid mode {0}, expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("projection onto the slice span vanished")]
    ZeroProjection,

    #[error("only {found} converged rank-one candidates; the tensor is too noisy or the span is mis-sized")]
    TooFewCandidates { found: usize },

    #[error("ill-conditioned system (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("no cluster link passes the vote-share floor")]
    NoLink,

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{}: row {row}, column {col}: {msg}", file.display())]
    Csv {
        file: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("missing file {} in sample sequence", .0.display())]
    MissingSample(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures caused by reading or parsing input rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parse { .. } | Error::Csv { .. } | Error::MissingSample(_) | Error::Io(_) => {
                true
            }
            Error::Stage { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
