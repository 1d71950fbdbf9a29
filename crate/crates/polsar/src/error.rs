//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value: {0}")]
    NonFiniteValue(String),

    #[error("empty image")]
    EmptyImage,

    #[error("zero-span pixel at ({x},{y}) in band {band}")]
    DegenerateSpan { x: usize, y: usize, band: String },

    #[error("no covariance model for class {0}")]
    MissingClassModel(u8),

    #[error("eigensolver failed to converge after {0} sweeps")]
    ConvergenceFailure(usize),

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged: {0}")]
    DivergenceDetected(String),

    #[error("requested {requested} superpixels but image has {pixels} pixels")]
    KTooLarge { requested: usize, pixels: usize },

    #[error("need at least two labeled classes, found {0}")]
    TooFewClasses(usize),

    #[error("band mismatch: model expects [{expected}], image has [{actual}]")]
    BandMismatch { expected: String, actual: String },

    #[error("class {class} has too few labeled pixels to split ({pixels})")]
    ClassTooSmall { class: u8, pixels: usize },

    #[error("unsupported model version {0}")]
    VersionMismatch(u32),

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("palette has {colors} colors but map has {classes} classes")]
    PaletteTooSmall { classes: usize, colors: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
