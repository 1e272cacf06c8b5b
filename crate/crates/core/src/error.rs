use alloc::string::String;
use thiserror::Error;

/// Errors shared across the toolkit.
///
/// Recoverable per-point conditions (a point behind the camera, an invalid
/// depth sample) are encoded in return types, not here; this enum covers
/// contract violations and numerical aborts.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid depth {0}: depth must be finite and > 0")]
    InvalidDepth(f64),

    #[error("camera rotation is not orthonormal with det +1 within 1e-6")]
    NonOrthonormal,

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(&'static str),

    #[error("non-finite loss at epoch {epoch}, iteration {iter}")]
    NonFiniteLoss { epoch: usize, iter: usize },

    #[error("2d chamfer: every point of the {0} cloud projects behind the camera")]
    AllPointsCulled(&'static str),

    #[error("instance mask selects no valid depth pixels")]
    EmptyInstance,

    #[error("plane support is degenerate (fewer than 3 inliers or collinear)")]
    DegeneratePlane,

    #[error("normalization bounds are degenerate in every axis")]
    DegenerateBounds,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),

    #[error("mesh carries no per-corner UVs")]
    MissingUvs,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("view generator failed: {0}")]
    Generator(String),
}
