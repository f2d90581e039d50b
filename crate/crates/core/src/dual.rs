//! Forward-mode scalars carrying one derivative component.
//!
//! The shading path is written once over these; plain rendering runs it
//! with zero derivative parts.

use crate::math::Vec3;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

pub const fn dual(v: f64, d: f64) -> Dual {
    Dual { v, d }
}

impl Dual {
    pub const ZERO: Dual = dual(0.0, 0.0);

    pub fn constant(v: f64) -> Dual {
        dual(v, 0.0)
    }

    pub fn sqrt(self) -> Dual {
        let s = self.v.sqrt();
        dual(s, if s > 0.0 { self.d / (2.0 * s) } else { 0.0 })
    }

    pub fn recip(self) -> Dual {
        dual(1.0 / self.v, -self.d / (self.v * self.v))
    }

    /// Branch on the primal value, as forward AD does.
    pub fn max(self, o: Dual) -> Dual {
        if self.v >= o.v {
            self
        } else {
            o
        }
    }

    pub fn max0(self) -> Dual {
        if self.v > 0.0 {
            self
        } else {
            Dual::ZERO
        }
    }

    pub fn abs(self) -> Dual {
        if self.v >= 0.0 {
            self
        } else {
            -self
        }
    }
}

impl From<f64> for Dual {
    fn from(v: f64) -> Dual {
        Dual::constant(v)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        dual(self.v + o.v, self.d + o.d)
    }
}

impl AddAssign for Dual {
    fn add_assign(&mut self, o: Dual) {
        *self = *self + o;
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        dual(self.v - o.v, self.d - o.d)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        dual(-self.v, -self.d)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        dual(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, s: f64) -> Dual {
        dual(self.v * s, self.d * s)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        dual(self.v / o.v, (self.d * o.v - self.v * o.d) / (o.v * o.v))
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, s: f64) -> Dual {
        dual(self.v / s, self.d / s)
    }
}

/// Vector of duals; doubles as a differentiable RGB color.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dv3 {
    pub x: Dual,
    pub y: Dual,
    pub z: Dual,
}

pub const fn dv3(x: Dual, y: Dual, z: Dual) -> Dv3 {
    Dv3 { x, y, z }
}

impl Dv3 {
    pub const ZERO: Dv3 = dv3(Dual::ZERO, Dual::ZERO, Dual::ZERO);

    pub fn constant(v: Vec3) -> Dv3 {
        dv3(Dual::constant(v.x), Dual::constant(v.y), Dual::constant(v.z))
    }

    pub fn new(v: Vec3, d: Vec3) -> Dv3 {
        dv3(dual(v.x, d.x), dual(v.y, d.y), dual(v.z, d.z))
    }

    pub fn value(self) -> Vec3 {
        Vec3 {
            x: self.x.v,
            y: self.y.v,
            z: self.z.v,
        }
    }

    pub fn deriv(self) -> Vec3 {
        Vec3 {
            x: self.x.d,
            y: self.y.d,
            z: self.z.d,
        }
    }

    pub fn dot(self, o: Dv3) -> Dual {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Dv3) -> Dv3 {
        dv3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> Dual {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Dv3 {
        let n = self.norm();
        dv3(self.x / n, self.y / n, self.z / n)
    }

    pub fn scale(self, s: Dual) -> Dv3 {
        dv3(self.x * s, self.y * s, self.z * s)
    }

    pub fn mul_elem(self, o: Dv3) -> Dv3 {
        dv3(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn reflect(self, n: Dv3) -> Dv3 {
        self - n.scale(self.dot(n) * 2.0)
    }

    pub fn is_finite(self) -> bool {
        self.value().is_finite() && self.deriv().is_finite()
    }
}

impl Add for Dv3 {
    type Output = Dv3;
    fn add(self, o: Dv3) -> Dv3 {
        dv3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Dv3 {
    fn add_assign(&mut self, o: Dv3) {
        *self = *self + o;
    }
}

impl Sub for Dv3 {
    type Output = Dv3;
    fn sub(self, o: Dv3) -> Dv3 {
        dv3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Dv3 {
    type Output = Dv3;
    fn neg(self) -> Dv3 {
        dv3(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Dv3 {
    type Output = Dv3;
    fn mul(self, s: f64) -> Dv3 {
        dv3(self.x * s, self.y * s, self.z * s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;

    #[test]
    fn product_rule() {
        let a = dual(3.0, 1.0);
        let b = dual(2.0, 5.0);
        let p = a * b;
        assert_eq!(p.v, 6.0);
        assert_eq!(p.d, 3.0 * 5.0 + 1.0 * 2.0);
    }

    #[test]
    fn sqrt_derivative_matches_fd() {
        let x = 2.37_f64;
        let h = 1e-7_f64;
        let fd = ((x + h).sqrt() - (x - h).sqrt()) / (2.0 * h);
        let d = dual(x, 1.0).sqrt();
        assert!((d.d - fd).abs() < 1e-8);
    }

    #[test]
    fn normalize_derivative_matches_fd() {
        // Perturb a vector along a fixed direction and compare the dual
        // derivative of its normalization against finite differences.
        let v = vec3(0.4, -1.1, 0.7);
        let dir = vec3(0.2, 0.3, -0.9);
        let h = 1e-6;
        let f = |t: f64| (v + dir * t).normalized();
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let dn = Dv3::new(v, dir).normalized().deriv();
        assert!((fd - dn).norm() < 1e-7);
    }
}
