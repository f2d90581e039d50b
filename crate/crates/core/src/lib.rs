//! Differentiable sphere-tracing renderer for signed distance fields.
//!
//! Surfaces are SDFs (analytic primitives or trilinear voxel grids). Forward
//! rendering is a small path tracer with MIS direct lighting. Image
//! derivatives are the sum of an interior term (analytic intersection
//! differentiation plus forward-mode shading derivatives) and a relaxed
//! boundary term estimated from near-silhouette points collected for free
//! during sphere tracing. On top of that sits an inverse-rendering loop
//! (Adam over SDF/albedo voxel grids, L1 loss, coarse-to-fine upscaling,
//! fast-sweeping redistancing).

pub mod diag;
pub mod dual;
pub mod grad;
pub mod image;
pub mod math;
pub mod opt;
pub mod redistance;
pub mod sampling;
pub mod scene;
pub mod sceneio;
pub mod sdf;
pub mod shade;
pub mod trace;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("selector does not apply to this field: {0}")]
    SelectorMismatch(&'static str),
    #[error("degenerate SDF gradient")]
    DegenerateGradient,
    #[error("empty level set: grid has no sign change")]
    EmptyLevelSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;
