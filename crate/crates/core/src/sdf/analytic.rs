//! Analytic SDF primitives with a rigid transform.

use crate::math::{vec3, Mat3, Rotation, Vec3};

#[derive(Debug, Clone)]
pub enum PrimitiveKind {
    Sphere { radius: f64 },
    /// Axis-aligned (pre-transform) box of the given half extents.
    Box { half_extents: Vec3 },
    RoundedBox { half_extents: Vec3, rounding: f64 },
    /// Ring in the local xz plane.
    Torus { major: f64, minor: f64 },
    /// φ = <normal, p> - offset in local space.
    Plane { normal: Vec3, offset: f64 },
    /// Min-union of child primitives; a distance lower bound.
    Union(Vec<AnalyticSdf>),
}

#[derive(Debug, Clone)]
pub struct AnalyticSdf {
    pub kind: PrimitiveKind,
    pub translation: Vec3,
    pub rotation: Rotation,
}

impl AnalyticSdf {
    pub fn new(kind: PrimitiveKind) -> AnalyticSdf {
        AnalyticSdf {
            kind,
            translation: Vec3::ZERO,
            rotation: Rotation::identity(),
        }
    }

    pub fn sphere(center: Vec3, radius: f64) -> AnalyticSdf {
        AnalyticSdf {
            kind: PrimitiveKind::Sphere { radius },
            translation: center,
            rotation: Rotation::identity(),
        }
    }

    pub fn box_at(center: Vec3, half_extents: Vec3) -> AnalyticSdf {
        AnalyticSdf {
            kind: PrimitiveKind::Box { half_extents },
            translation: center,
            rotation: Rotation::identity(),
        }
    }

    /// Half-space below the plane with the given world normal and offset:
    /// φ(x) = <n, x> - offset.
    pub fn plane(normal: Vec3, offset: f64) -> AnalyticSdf {
        AnalyticSdf::new(PrimitiveKind::Plane {
            normal: normal.normalized(),
            offset,
        })
    }

    pub fn with_rotation(mut self, rotation: Rotation) -> AnalyticSdf {
        self.rotation = rotation;
        self
    }

    pub fn supports_radius(&self) -> bool {
        matches!(self.kind, PrimitiveKind::Sphere { .. })
    }

    fn to_local(&self, x: Vec3) -> Vec3 {
        self.rotation.apply_inv(x - self.translation)
    }

    pub fn eval(&self, x: Vec3) -> f64 {
        let p = self.to_local(x);
        match &self.kind {
            PrimitiveKind::Sphere { radius } => p.norm() - radius,
            PrimitiveKind::Box { half_extents } => box_sdf(p, *half_extents),
            PrimitiveKind::RoundedBox { half_extents, rounding } => {
                box_sdf(p, *half_extents) - rounding
            }
            PrimitiveKind::Torus { major, minor } => {
                let q = vec3((p.x * p.x + p.z * p.z).sqrt() - major, p.y, 0.0);
                q.norm() - minor
            }
            PrimitiveKind::Plane { normal, offset } => normal.dot(p) - offset,
            PrimitiveKind::Union(children) => children
                .iter()
                .map(|c| c.eval(x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn grad(&self, x: Vec3) -> Vec3 {
        let p = self.to_local(x);
        let local = match &self.kind {
            PrimitiveKind::Sphere { .. } => {
                let n = p.norm();
                if n == 0.0 {
                    Vec3::ZERO
                } else {
                    p / n
                }
            }
            PrimitiveKind::Box { half_extents }
            | PrimitiveKind::RoundedBox { half_extents, .. } => box_grad(p, *half_extents),
            PrimitiveKind::Torus { major, minor: _ } => {
                let rho = (p.x * p.x + p.z * p.z).sqrt();
                if rho == 0.0 {
                    return Vec3::ZERO;
                }
                let q = vec3(rho - major, p.y, 0.0);
                let qn = q.norm();
                if qn == 0.0 {
                    return Vec3::ZERO;
                }
                vec3(q.x * p.x / rho, q.y, q.x * p.z / rho) / qn
            }
            PrimitiveKind::Plane { normal, .. } => *normal,
            PrimitiveKind::Union(children) => {
                // Gradient of the closest child.
                let mut best = f64::INFINITY;
                let mut g = Vec3::ZERO;
                for c in children {
                    let d = c.eval(x);
                    if d < best {
                        best = d;
                        g = c.grad(x);
                    }
                }
                return g;
            }
        };
        self.rotation.apply(local)
    }

    pub fn hessian(&self, x: Vec3) -> Mat3 {
        match &self.kind {
            PrimitiveKind::Sphere { .. } => {
                let r = x - self.translation;
                let n = r.norm();
                if n < 1e-9 {
                    return Mat3::ZERO;
                }
                let u = r / n;
                Mat3::identity().add(Mat3::outer(u, u).scale(-1.0)).scale(1.0 / n)
            }
            PrimitiveKind::Plane { .. } => Mat3::ZERO,
            // Piecewise-flat or curved primitives: central differences of
            // the gradient are accurate away from feature lines.
            _ => {
                let h = 1e-5;
                let mut m = Mat3::ZERO;
                for axis in 0..3 {
                    let mut dx = Vec3::ZERO;
                    dx[axis] = h;
                    let gp = self.grad(x + dx);
                    let gm = self.grad(x - dx);
                    m.rows[axis] = (gp - gm) / (2.0 * h);
                }
                // Symmetrize.
                let mut s = Mat3::ZERO;
                for i in 0..3 {
                    for j in 0..3 {
                        s.rows[i][j] = 0.5 * (m.rows[i][j] + m.rows[j][i]);
                    }
                }
                s
            }
        }
    }
}

fn box_sdf(p: Vec3, b: Vec3) -> f64 {
    let q = p.abs() - b;
    let outside = q.max(Vec3::ZERO).norm();
    let inside = q.max_component().min(0.0);
    outside + inside
}

fn box_grad(p: Vec3, b: Vec3) -> Vec3 {
    let q = p.abs() - b;
    let sign = vec3(
        if p.x >= 0.0 { 1.0 } else { -1.0 },
        if p.y >= 0.0 { 1.0 } else { -1.0 },
        if p.z >= 0.0 { 1.0 } else { -1.0 },
    );
    let qo = q.max(Vec3::ZERO);
    let on = qo.norm();
    if on > 0.0 {
        vec3(sign.x * qo.x, sign.y * qo.y, sign.z * qo.z) / on
    } else {
        // Inside: gradient points along the axis of the closest face.
        let mut axis = 0;
        let mut best = q.x;
        if q.y > best {
            best = q.y;
            axis = 1;
        }
        if q.z > best {
            axis = 2;
        }
        let mut g = Vec3::ZERO;
        g[axis] = sign[axis];
        g
    }
}
