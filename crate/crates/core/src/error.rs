use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the geometry, frame, sampling, estimation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("query point is at the origin (norm {norm:e}); the centrifugal vector is undefined")]
    QueryAtOrigin { norm: f64 },

    #[error("normal is radial in the first frame; second-stage frame is undefined")]
    NormalRadial,

    #[error("degenerate neighborhood at point {index}: smallest covariance eigenvalues {lambda0:e} and {lambda1:e} coincide")]
    DegenerateNeighborhood {
        index: usize,
        lambda0: f64,
        lambda1: f64,
    },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid rotation matrix")]
    NotARotation,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: vertex index {index} out of range (have {count} vertices)")]
    IndexOutOfRange {
        path: PathBuf,
        line: usize,
        index: usize,
        count: usize,
    },

    #[error("invalid face {face}: {message}")]
    InvalidFace { face: usize, message: String },

    #[error("mesh has no faces with positive area")]
    EmptyMesh,

    #[error("all points coincide; cannot rescale to the unit sphere")]
    AllPointsCoincident,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Variant name, used to label CLI error messages.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::QueryAtOrigin { .. } => "QueryAtOrigin",
            Error::NormalRadial => "NormalRadial",
            Error::DegenerateNeighborhood { .. } => "DegenerateNeighborhood",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::DegenerateConfiguration(_) => "DegenerateConfiguration",
            Error::InvalidCloud(_) => "InvalidCloud",
            Error::NotARotation => "NotARotation",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse { .. } => "ParseError",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::InvalidFace { .. } => "InvalidFace",
            Error::EmptyMesh => "EmptyMesh",
            Error::AllPointsCoincident => "AllPointsCoincident",
            Error::Io { .. } => "Io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
