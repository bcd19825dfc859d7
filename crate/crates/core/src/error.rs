use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ragged row: row {row} has {found} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at channel {channel}, sample {sample}")]
    NonFinite { channel: usize, sample: usize },

    #[error("unparsable value {value:?} at channel {channel}, sample {sample}")]
    Parse {
        channel: usize,
        sample: usize,
        value: String,
    },

    #[error("invalid sampling rate: {0}")]
    InvalidSamplingRate(f64),

    #[error("malformed sidecar {path}: {message}")]
    Sidecar { path: PathBuf, message: String },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite matrix input")]
    NonFiniteMatrix,

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    Asymmetric(f64),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("rank-deficient covariance: eigenvalue ratio {ratio:.3e} below floor {floor:.3e}")]
    RankDeficient { ratio: f64, floor: f64 },

    #[error("singular matrix")]
    Singular,

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("recording too short: {0}")]
    TooShort(String),

    #[error("recording too short for {segments} segments: {samples} samples, each segment needs at least {min_len}")]
    TooShortForSegments {
        segments: usize,
        samples: usize,
        min_len: usize,
    },

    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),

    #[error("degenerate source {index} in data set {dataset}")]
    DegenerateSource { dataset: usize, index: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
