//! Signed distance field representations and derivative queries.

pub mod analytic;
pub mod grid;
pub mod io;
pub mod selector;

pub use analytic::{AnalyticSdf, PrimitiveKind};
pub use grid::{GridDims, GridRgb, GridSdf};
pub use selector::{ParamDerivative, ParamSelector};

use crate::math::{Mat3, Vec3};
use crate::{Error, Result};

/// Gradients with norm below this are treated as degenerate (medial axis,
/// flat grid cells); callers drop the sample and count it.
pub const DEGENERATE_GRAD: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum SdfField {
    Analytic(AnalyticSdf),
    Grid(GridSdf),
}

impl SdfField {
    /// Signed distance (negative inside). For grids this is the trilinear
    /// interpolant inside the bounding box and a conservative
    /// distance-to-box bound outside.
    pub fn eval(&self, x: Vec3) -> f64 {
        match self {
            SdfField::Analytic(a) => a.eval(x),
            SdfField::Grid(g) => g.eval(x),
        }
    }

    /// Raw (not normalized) spatial gradient of the field.
    pub fn grad(&self, x: Vec3) -> Vec3 {
        match self {
            SdfField::Analytic(a) => a.grad(x),
            SdfField::Grid(g) => g.grad(x),
        }
    }

    /// Second derivative of the field; exact for sphere/plane/grid,
    /// finite differences of the gradient otherwise.
    pub fn hessian(&self, x: Vec3) -> Mat3 {
        match self {
            SdfField::Analytic(a) => a.hessian(x),
            SdfField::Grid(g) => g.hessian(x),
        }
    }

    /// Unit surface normal; `None` when the gradient is degenerate.
    pub fn normal(&self, x: Vec3) -> Option<Vec3> {
        let g = self.grad(x);
        let n = g.norm();
        if n < DEGENERATE_GRAD {
            None
        } else {
            Some(g / n)
        }
    }

    pub fn as_grid(&self) -> Option<&GridSdf> {
        match self {
            SdfField::Grid(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_grid_mut(&mut self) -> Option<&mut GridSdf> {
        match self {
            SdfField::Grid(g) => Some(g),
            _ => None,
        }
    }

    /// dφ/dθ for the given parameter selector.
    pub fn param_derivative(&self, sel: &ParamSelector, x: Vec3) -> Result<ParamDerivative> {
        match (self, sel) {
            (_, ParamSelector::Translation { axis }) => {
                Ok(ParamDerivative::Scalar(-self.grad(x).dot(*axis)))
            }
            (SdfField::Analytic(a), ParamSelector::Radius) => {
                if a.supports_radius() {
                    Ok(ParamDerivative::Scalar(-1.0))
                } else {
                    Err(Error::SelectorMismatch("radius selector needs a sphere"))
                }
            }
            (SdfField::Grid(g), ParamSelector::Voxel(v)) => {
                Ok(ParamDerivative::Scalar(g.voxel_weight(x, *v)))
            }
            (SdfField::Grid(g), ParamSelector::VoxelSet) => {
                Ok(ParamDerivative::Sparse(g.voxel_weights(x)))
            }
            (SdfField::Analytic(_), ParamSelector::Voxel(_) | ParamSelector::VoxelSet) => {
                Err(Error::SelectorMismatch("voxel selector needs a grid field"))
            }
            (SdfField::Grid(_), ParamSelector::Radius) => {
                Err(Error::SelectorMismatch("radius selector needs a sphere"))
            }
        }
    }

    /// Explicit parameter derivative of the spatial gradient, d(∇φ)/dθ
    /// holding x fixed.
    pub fn param_grad_derivative(&self, sel: &ParamSelector, x: Vec3) -> Vec3 {
        match (self, sel) {
            (_, ParamSelector::Translation { axis }) => -self.hessian(x).mul_vec(*axis),
            (_, ParamSelector::Radius) => Vec3::ZERO,
            (SdfField::Grid(g), ParamSelector::Voxel(v)) => g.voxel_weight_grad(x, *v),
            _ => Vec3::ZERO,
        }
    }

    /// Scalar normal velocity v⊥ = -(dφ/dθ)/‖∇φ‖ for a scalar selector.
    pub fn normal_velocity(&self, sel: &ParamSelector, x: Vec3) -> Result<f64> {
        let g = self.grad(x).norm();
        if g < DEGENERATE_GRAD {
            return Err(Error::DegenerateGradient);
        }
        match self.param_derivative(sel, x)? {
            ParamDerivative::Scalar(dphi) => Ok(-dphi / g),
            ParamDerivative::Sparse(_) => Err(Error::SelectorMismatch(
                "normal_velocity needs a scalar selector; use voxel_weights directly",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;

    fn unit_sphere() -> SdfField {
        SdfField::Analytic(AnalyticSdf::sphere(Vec3::ZERO, 1.0))
    }

    #[test]
    fn sphere_center_distance() {
        assert_eq!(unit_sphere().eval(Vec3::ZERO), -1.0);
        let d = unit_sphere().eval(vec3(1.001, 0.0, 0.0));
        assert!((d - 0.001).abs() < 1e-12);
    }

    #[test]
    fn sphere_gradient_is_radial() {
        let g = unit_sphere().grad(vec3(2.0, 0.0, 0.0));
        assert!((g - vec3(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn translation_param_derivative() {
        // Unit sphere translated along x, queried at (2,0,0): dφ/dθ = -1.
        let sel = ParamSelector::Translation { axis: vec3(1.0, 0.0, 0.0) };
        match unit_sphere().param_derivative(&sel, vec3(2.0, 0.0, 0.0)).unwrap() {
            ParamDerivative::Scalar(v) => assert!((v + 1.0).abs() < 1e-12),
            _ => panic!("expected scalar"),
        }
    }

    #[test]
    fn normal_velocity_on_sphere_surface() {
        let sel = ParamSelector::Translation { axis: vec3(1.0, 0.0, 0.0) };
        let f = unit_sphere();
        assert!((f.normal_velocity(&sel, vec3(1.0, 0.0, 0.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(f.normal_velocity(&sel, vec3(0.0, 1.0, 0.0)).unwrap().abs() < 1e-12);
        assert!((f.normal_velocity(&sel, vec3(-1.0, 0.0, 0.0)).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_gradient_is_an_error() {
        let sel = ParamSelector::Translation { axis: vec3(1.0, 0.0, 0.0) };
        // Center of the sphere sits on the medial axis.
        assert!(matches!(
            unit_sphere().normal_velocity(&sel, Vec3::ZERO),
            Err(Error::DegenerateGradient)
        ));
    }

    #[test]
    fn radius_selector_mismatch() {
        let b = SdfField::Analytic(AnalyticSdf::box_at(Vec3::ZERO, vec3(1.0, 1.0, 1.0)));
        assert!(b.param_derivative(&ParamSelector::Radius, Vec3::ZERO).is_err());
    }
}
