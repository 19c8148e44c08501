use thiserror::Error;

/// Every failure the stitching pipeline can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("need at least {needed} matches, got {got}")]
    InsufficientMatches { needed: usize, got: usize },
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("Levenberg-Marquardt update produced a singular homography")]
    SingularUpdate,
    #[error("no match survived filtering")]
    EmptyResult,
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("decode error: {0}")]
    Decode(String),
    #[error("images do not overlap")]
    EmptyOverlap,
    #[error("point ({x}, {y}) outside image bounds")]
    OutOfBounds { x: f64, y: f64 },
    #[error("no homography model found")]
    NoModelFound,
    #[error("region is empty: {0}")]
    EmptyRegion(String),
    #[error("canvas of {width}x{height} exceeds the size limit")]
    CanvasOverflow { width: i64, height: i64 },
    #[error("singular map for label {0}")]
    SingularMap(usize),
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        match e {
            image::ImageError::IoError(io) => Error::Io(io.to_string()),
            other => Error::Decode(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
