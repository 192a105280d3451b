//! Error type shared by every module in the crate.

use thiserror::Error;

/// Errors produced by geometry, field, loss and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Input point set or matrix is rank-deficient or otherwise unusable.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    /// A projection field carries no usable direction information.
    #[error("degenerate field: {0}")]
    DegenerateField(String),
    /// A synthetic model collapsed along at least one axis.
    #[error("degenerate model: axis {axis} extent {extent} below 1e-9")]
    DegenerateModel { axis: usize, extent: f64 },
    /// Two fields that must share point count and face mask do not.
    #[error("mask mismatch: {0}")]
    MaskMismatch(String),
    /// Decoding was requested for a symmetry class that under-determines the pose.
    #[error("symmetry-unsupported: decoding requires all six faces, got {0}")]
    SymmetryUnsupported(String),
    /// Matrix operands have incompatible shapes.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    /// An assignment-matrix row does not sum to one.
    #[error("row {row} of assignment matrix sums to {sum}, expected 1 within 1e-6")]
    RowNotNormalized { row: usize, sum: f64 },
    /// A2 augmentation needs an upper/lower partition for every point.
    #[error("unlabeled points: {0}")]
    UnlabeledPoints(String),
    /// Laplacian losses require strictly positive scale parameters.
    #[error("non-positive sigma at face index {face}: {value}")]
    NonPositiveSigma { face: usize, value: f64 },
    /// A loss component is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// Finite-difference probes are too close to an l1 kink to be trusted.
    #[error("kink proximity: component {index} has |value| {value} <= 10*eps")]
    KinkProximity { index: usize, value: f64 },
    /// Depth-map mask selects no pixels.
    #[error("empty mask: no pixels selected for back-projection")]
    EmptyMask,
    /// Masked depth value is zero or negative.
    #[error("non-positive depth {depth} at pixel ({u}, {v})")]
    NonPositiveDepth { u: usize, v: usize, depth: f64 },
    /// Category name outside the supported set.
    #[error("unknown category: {0}")]
    UnknownCategory(String),
    /// Metric computation over an empty collection.
    #[error("empty input: {0}")]
    EmptyInput(String),
    /// Configuration file or pipeline spec rejected; names the offending key.
    #[error("config error at `{key}`: {message}")]
    ConfigError { key: String, message: String },
    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed file contents (PLY, JSON, binary matrix).
    #[error("parse error: {0}")]
    Parse(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
