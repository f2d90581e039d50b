//! Small fixed-size vector/matrix math used throughout the renderer.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = vec3(0.0, 0.0, 0.0);
    pub const ONE: Vec3 = vec3(1.0, 1.0, 1.0);

    pub fn splat(v: f64) -> Vec3 {
        vec3(v, v, v)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn normalized(self) -> Vec3 {
        self / self.norm()
    }

    pub fn abs(self) -> Vec3 {
        vec3(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn max_component(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        vec3(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        vec3(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Vec3 {
        vec3(
            self.x.clamp(lo, hi),
            self.y.clamp(lo, hi),
            self.z.clamp(lo, hi),
        )
    }

    /// Component-wise product.
    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        vec3(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Vec3 {
        vec3(a[0], a[1], a[2])
    }

    /// Mirror reflection of a direction `d` about unit normal `n`.
    pub fn reflect(self, n: Vec3) -> Vec3 {
        self - n * (2.0 * self.dot(n))
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        vec3(self.x / s, self.y / s, self.z / s)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("vec3 index out of range"),
        }
    }
}

impl IndexMut<usize> for Vec3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("vec3 index out of range"),
        }
    }
}

/// Symmetric 3x3 matrix as rows; used for SDF Hessians.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mat3 {
    pub rows: [Vec3; 3],
}

impl Mat3 {
    pub const ZERO: Mat3 = Mat3 {
        rows: [Vec3::ZERO, Vec3::ZERO, Vec3::ZERO],
    };

    pub fn identity() -> Mat3 {
        Mat3 {
            rows: [vec3(1.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0), vec3(0.0, 0.0, 1.0)],
        }
    }

    pub fn mul_vec(self, v: Vec3) -> Vec3 {
        vec3(self.rows[0].dot(v), self.rows[1].dot(v), self.rows[2].dot(v))
    }

    /// a * b^T outer product.
    pub fn outer(a: Vec3, b: Vec3) -> Mat3 {
        Mat3 {
            rows: [a.x * b, a.y * b, a.z * b],
        }
    }

    pub fn scale(self, s: f64) -> Mat3 {
        Mat3 {
            rows: [self.rows[0] * s, self.rows[1] * s, self.rows[2] * s],
        }
    }

    pub fn add(self, o: Mat3) -> Mat3 {
        Mat3 {
            rows: [
                self.rows[0] + o.rows[0],
                self.rows[1] + o.rows[1],
                self.rows[2] + o.rows[2],
            ],
        }
    }
}

/// Rotation stored as a row-major 3x3 matrix.
#[derive(Debug, Clone, Copy)]
pub struct Rotation(pub Mat3);

impl Rotation {
    pub fn identity() -> Rotation {
        Rotation(Mat3::identity())
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Rotation {
        let a = axis.normalized();
        let (s, c) = angle_rad.sin_cos();
        let k = 1.0 - c;
        Rotation(Mat3 {
            rows: [
                vec3(c + a.x * a.x * k, a.x * a.y * k - a.z * s, a.x * a.z * k + a.y * s),
                vec3(a.y * a.x * k + a.z * s, c + a.y * a.y * k, a.y * a.z * k - a.x * s),
                vec3(a.z * a.x * k - a.y * s, a.z * a.y * k + a.x * s, c + a.z * a.z * k),
            ],
        })
    }

    pub fn apply(self, v: Vec3) -> Vec3 {
        self.0.mul_vec(v)
    }

    /// Inverse rotation (transpose).
    pub fn apply_inv(self, v: Vec3) -> Vec3 {
        let r = &self.0.rows;
        vec3(
            r[0].x * v.x + r[1].x * v.y + r[2].x * v.z,
            r[0].y * v.x + r[1].y * v.y + r[2].y * v.z,
            r[0].z * v.x + r[1].z * v.y + r[2].z * v.z,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_is_orthogonal() {
        let a = vec3(1.0, 2.0, 3.0);
        let b = vec3(-2.0, 0.5, 4.0);
        let c = a.cross(b);
        assert!(c.dot(a).abs() < 1e-12);
        assert!(c.dot(b).abs() < 1e-12);
    }

    #[test]
    fn rotation_preserves_norm() {
        let r = Rotation::from_axis_angle(vec3(1.0, 1.0, 0.0), 0.7);
        let v = vec3(0.3, -0.2, 0.9);
        assert!((r.apply(v).norm() - v.norm()).abs() < 1e-12);
        let back = r.apply_inv(r.apply(v));
        assert!((back - v).norm() < 1e-12);
    }

    #[test]
    fn reflect_unit() {
        let d = vec3(1.0, -1.0, 0.0).normalized();
        let n = vec3(0.0, 1.0, 0.0);
        let r = d.reflect(n);
        assert!((r - vec3(1.0, 1.0, 0.0).normalized()).norm() < 1e-12);
    }
}
