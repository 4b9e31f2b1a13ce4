use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("rotation angle is within 1e-6 of pi; the logarithm axis is ambiguous")]
    AngleNearPi,
    #[error("depth must be strictly positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("point lies behind the camera (z = {0})")]
    PointBehindCamera(f64),
    #[error("pyramid level {0} is outside 1..=4")]
    InvalidLevel(usize),
    #[error("channel {0} has zero spatial variance")]
    DegenerateChannel(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("residual set is empty")]
    EmptyResidualSet,
    #[error("normal equations are singular (condition number {0:e})")]
    SingularSystem(f64),
    #[error("no valid pixels to evaluate")]
    NoValidPixels,
    #[error("scene surface is not in front of the camera")]
    SceneBehindCamera,
    #[error("evaluation mask selects no pixels")]
    EmptyMask,
    #[error("trajectory length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
