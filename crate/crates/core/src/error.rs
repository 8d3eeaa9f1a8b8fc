use thiserror::Error;

use crate::types::{GeometryError, StrandId};

pub type Result<T, E = BraidError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BraidError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid braid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("no braid strand points lie near the mid-line")]
    NoPointsNearMidLine,
    #[error("strand {0} is allocated but has no reconstruction")]
    MissingReconstruction(StrandId),
    #[error("reconstructed strand {0} was never allocated")]
    UnexpectedReconstruction(StrandId),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BraidError {
    /// True for errors caused by invalid input rather than a failure while
    /// running.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Self::Io(_)
                | Self::Decode(_)
                | Self::NonFinite(_)
                | Self::MissingReconstruction(_)
                | Self::UnexpectedReconstruction(_)
        )
    }
}
