use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the beamforming library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate beampattern: {0}")]
    DegeneratePattern(String),

    /// The masked direction matrix does not span 3D. `deficient_axis` is the
    /// unit vector (array frame) along which the directions carry no information.
    #[error("direction matrix has rank {rank} < 3 over {n_used} directions; no information along {deficient_axis:?}")]
    RankDeficient {
        rank: usize,
        n_used: usize,
        deficient_axis: [f64; 3],
    },

    #[error("constraint matrix is rank deficient ({0})")]
    RankDeficientConstraints(String),

    #[error("initial point is infeasible: constraint violation {0:e}")]
    InfeasibleStart(f64),

    #[error("all {0} restarts aborted on degenerate objective evaluations")]
    AllRestartsDegenerate(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
