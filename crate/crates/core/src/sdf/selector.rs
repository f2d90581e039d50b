//! Differentiation parameter selectors.

use crate::math::Vec3;

/// Identifies the scalar parameter θ being differentiated, relative to one
/// SDF field.
#[derive(Debug, Clone)]
pub enum ParamSelector {
    /// Shape translated by θ·axis: dφ/dθ = -<∇φ, axis>.
    Translation { axis: Vec3 },
    /// Sphere radius: dφ/dθ = -1.
    Radius,
    /// One grid node value: dφ/dθ_v = trilinear weight of that node.
    Voxel(usize),
    /// All grid nodes at once (reverse mode); queries return sparse weights.
    VoxelSet,
}

#[derive(Debug, Clone)]
pub enum ParamDerivative {
    Scalar(f64),
    /// (voxel index, weight) pairs; at most 8 per query point.
    Sparse(Vec<(usize, f64)>),
}
