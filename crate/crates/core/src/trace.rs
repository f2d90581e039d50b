//! Sphere tracing with relaxed silhouette detection.
//!
//! While stepping along a ray we watch the directional derivative of the
//! SDF. A sign change from negative to positive brackets a local minimum of
//! φ along the ray; among all such brackets on the valid segment, the one
//! with the smallest SDF value is refined by bisection. If the refined
//! minimum lies in (0, ε) it is kept as the ray's relaxed silhouette point.

use crate::diag::Diagnostics;
use crate::math::Vec3;
use crate::sdf::{SdfField, DEGENERATE_GRAD};

/// Default number of bisection iterations used to pinpoint the relaxed
/// silhouette point.
pub const BISECT_ITERS: u32 = 12;

/// Default surface tolerance for unit-cube scale scenes.
pub const SURFACE_TOL: f64 = 1e-5;

/// Default sphere-tracing step budget.
pub const MAX_STEPS: u32 = 256;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub o: Vec3,
    pub d: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    pub fn new(o: Vec3, d: Vec3) -> Ray {
        debug_assert!((d.norm() - 1.0).abs() < 1e-6, "ray direction must be unit");
        Ray { o, d, t_min: 0.0, t_max: f64::INFINITY }
    }

    pub fn with_range(mut self, t_min: f64, t_max: f64) -> Ray {
        self.t_min = t_min;
        self.t_max = t_max;
        self
    }

    pub fn point(&self, t: f64) -> Vec3 {
        self.o + self.d * t
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RelaxedSilhouette {
    /// The refined minimum point y*.
    pub point: Vec3,
    /// Ray parameter of y*.
    pub t: f64,
    /// λ = φ(y*) ∈ (0, ε).
    pub lambda: f64,
    /// Directional derivative at y*; ~0 after bisection.
    pub dir_deriv: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum TraceStatus {
    Hit { x: Vec3, t: f64 },
    Miss,
}

#[derive(Debug, Clone)]
pub struct TraceResult {
    pub status: TraceStatus,
    pub relaxed: Option<RelaxedSilhouette>,
    pub steps: u32,
}

impl TraceResult {
    pub fn hit(&self) -> Option<(Vec3, f64)> {
        match self.status {
            TraceStatus::Hit { x, t } => Some((x, t)),
            TraceStatus::Miss => None,
        }
    }
}

/// A signed distance query target; scenes implement this as a min over
/// their shapes.
pub trait DistanceField {
    fn value(&self, x: Vec3) -> f64;
    fn gradient(&self, x: Vec3) -> Vec3;
}

impl DistanceField for SdfField {
    fn value(&self, x: Vec3) -> f64 {
        self.eval(x)
    }
    fn gradient(&self, x: Vec3) -> Vec3 {
        self.grad(x)
    }
}

/// Directional derivative of φ along d.
pub fn dir_derivative(field: &impl DistanceField, x: Vec3, d: Vec3) -> f64 {
    field.gradient(x).dot(d)
}

/// Plain sphere tracing, no silhouette bookkeeping.
pub fn sphere_trace(
    field: &impl DistanceField,
    ray: Ray,
    surface_tol: f64,
    max_steps: u32,
    diag: &Diagnostics,
) -> TraceResult {
    trace_impl(field, ray, None, surface_tol, max_steps, BISECT_ITERS, diag)
}

/// Sphere tracing plus relaxed-silhouette detection with threshold ε.
pub fn trace_with_relaxed_silhouette(
    field: &impl DistanceField,
    ray: Ray,
    eps: f64,
    surface_tol: f64,
    max_steps: u32,
    bisect_iters: u32,
    diag: &Diagnostics,
) -> TraceResult {
    debug_assert!(eps > 0.0);
    trace_impl(field, ray, Some(eps), surface_tol, max_steps, bisect_iters, diag)
}

fn trace_impl(
    field: &impl DistanceField,
    ray: Ray,
    eps: Option<f64>,
    surface_tol: f64,
    max_steps: u32,
    bisect_iters: u32,
    diag: &Diagnostics,
) -> TraceResult {
    let mut t = ray.t_min;
    // Best sign-change bracket so far: (t_lo, t_hi, min φ at endpoints).
    let mut best: Option<(f64, f64, f64)> = None;
    let mut prev: Option<(f64, f64, f64)> = None; // (t, φ, φ')
    let mut steps = 0;
    let mut status = TraceStatus::Miss;
    while steps < max_steps {
        steps += 1;
        let x = ray.point(t);
        let phi = field.value(x);
        if phi <= surface_tol {
            status = TraceStatus::Hit { x, t };
            break;
        }
        if eps.is_some() {
            let g = field.gradient(x);
            if g.norm() < DEGENERATE_GRAD {
                Diagnostics::bump(&diag.degenerate_gradients);
                prev = None;
            } else {
                let dphi = g.dot(ray.d);
                if let Some((tp, phip, dphip)) = prev {
                    if dphip < 0.0 && dphi > 0.0 {
                        let key = phip.min(phi);
                        if best.map_or(true, |(_, _, k)| key < k) {
                            best = Some((tp, t, key));
                        }
                    }
                }
                prev = Some((t, phi, dphi));
            }
        }
        let next = t + phi;
        if next > ray.t_max {
            break;
        }
        t = next;
    }
    // Step budget exhausted while φ is small but above tolerance: classify
    // as a hit at the current point and count the stall.
    if matches!(status, TraceStatus::Miss) && steps == max_steps && t <= ray.t_max {
        let x = ray.point(t);
        if field.value(x) <= 10.0 * surface_tol {
            Diagnostics::bump(&diag.step_stalls);
            status = TraceStatus::Hit { x, t };
        }
    }
    let relaxed = match (eps, best) {
        (Some(eps), Some((mut lo, mut hi, _))) => {
            let dlo = dir_derivative(field, ray.point(lo), ray.d);
            let dhi = dir_derivative(field, ray.point(hi), ray.d);
            if dlo >= 0.0 || dhi <= 0.0 {
                Diagnostics::bump(&diag.bracket_failures);
                None
            } else {
                for _ in 0..bisect_iters {
                    let mid = 0.5 * (lo + hi);
                    if dir_derivative(field, ray.point(mid), ray.d) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let ty = 0.5 * (lo + hi);
                let y = ray.point(ty);
                let lambda = field.value(y);
                if lambda > 0.0 && lambda < eps {
                    Diagnostics::bump(&diag.relaxed_points);
                    Some(RelaxedSilhouette {
                        point: y,
                        t: ty,
                        lambda,
                        dir_deriv: dir_derivative(field, y, ray.d),
                    })
                } else {
                    None
                }
            }
        }
        _ => None,
    };
    TraceResult { status, relaxed, steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::vec3;
    use crate::sdf::AnalyticSdf;

    fn unit_sphere() -> SdfField {
        SdfField::Analytic(AnalyticSdf::sphere(Vec3::ZERO, 1.0))
    }

    fn diag() -> Diagnostics {
        Diagnostics::new()
    }

    #[test]
    fn head_on_hit() {
        let r = Ray::new(vec3(0.0, 0.0, -3.0), vec3(0.0, 0.0, 1.0));
        let res = sphere_trace(&unit_sphere(), r, 1e-6, 256, &diag());
        let (x, t) = res.hit().expect("hit");
        assert!((t - 2.0).abs() < 1e-5);
        assert!((x - vec3(0.0, 0.0, -1.0)).norm() < 1e-5);
    }

    #[test]
    fn clear_miss() {
        let r = Ray::new(vec3(0.0, 3.0, 0.0), vec3(0.0, 0.0, 1.0)).with_range(0.0, 100.0);
        let res = sphere_trace(&unit_sphere(), r, 1e-6, 256, &diag());
        assert!(res.hit().is_none());
    }

    #[test]
    fn exact_plane_hits_in_one_step() {
        let f = SdfField::Analytic(AnalyticSdf::plane(vec3(0.0, 0.0, 1.0), 0.0));
        let r = Ray::new(vec3(0.0, 0.0, 1.0), vec3(0.0, 0.0, -1.0));
        let res = sphere_trace(&f, r, 1e-9, 256, &diag());
        let (_, t) = res.hit().expect("hit");
        assert!((t - 1.0).abs() < 1e-9);
        assert_eq!(res.steps, 2); // step to surface, then detect
    }

    #[test]
    fn grazing_ray_carries_relaxed_point() {
        let f = unit_sphere();
        let r = Ray::new(vec3(1.001, 0.0, -3.0), vec3(0.0, 0.0, 1.0)).with_range(0.0, 10.0);
        let res = trace_with_relaxed_silhouette(&f, r, 0.002, 1e-6, 512, 12, &diag());
        assert!(res.hit().is_none());
        let rel = res.relaxed.expect("relaxed point");
        assert!((rel.lambda - 0.001).abs() < 1e-6, "lambda {}", rel.lambda);
        assert!((rel.point - vec3(1.001, 0.0, 0.0)).norm() < 1e-4);
        assert!(rel.dir_deriv.abs() < 1e-5);
    }

    #[test]
    fn clearance_beyond_eps_reports_nothing() {
        let f = unit_sphere();
        let r = Ray::new(vec3(1.01, 0.0, -3.0), vec3(0.0, 0.0, 1.0)).with_range(0.0, 10.0);
        let res = trace_with_relaxed_silhouette(&f, r, 0.002, 1e-6, 512, 12, &diag());
        assert!(res.hit().is_none());
        assert!(res.relaxed.is_none());
    }

    #[test]
    fn head_on_hit_has_no_relaxed_point() {
        let f = unit_sphere();
        let r = Ray::new(vec3(0.0, 0.0, -3.0), vec3(0.0, 0.0, 1.0)).with_range(0.0, 10.0);
        let res = trace_with_relaxed_silhouette(&f, r, 0.002, 1e-6, 512, 12, &diag());
        assert!(res.hit().is_some());
        assert!(res.relaxed.is_none());
    }

    #[test]
    fn dir_derivative_examples() {
        let f = unit_sphere();
        let d = vec3(0.0, 0.0, 1.0);
        assert!((dir_derivative(&f, vec3(0.0, 0.0, -2.0), d) + 1.0).abs() < 1e-12);
        assert!((dir_derivative(&f, vec3(0.0, 0.0, 2.0), d) - 1.0).abs() < 1e-12);
        assert!(dir_derivative(&f, vec3(1.001, 0.0, 0.0), d).abs() < 1e-6);
    }

    #[test]
    fn detection_monotone_in_eps() {
        // Rays that carry a relaxed point at ε₁ also carry one at ε₂ > ε₁.
        let f = unit_sphere();
        let mut small = Vec::new();
        let mut large = Vec::new();
        for i in 0..60 {
            for j in 0..60 {
                let ox = 0.95 + i as f64 * 0.002;
                let oy = -0.06 + j as f64 * 0.002;
                let r = Ray::new(vec3(ox, oy, -3.0), vec3(0.0, 0.0, 1.0)).with_range(0.0, 10.0);
                let d = diag();
                let a = trace_with_relaxed_silhouette(&f, r, 0.002, 1e-7, 512, 12, &d);
                let b = trace_with_relaxed_silhouette(&f, r, 0.01, 1e-7, 512, 12, &d);
                small.push(a.relaxed.is_some());
                large.push(b.relaxed.is_some());
            }
        }
        for (s, l) in small.iter().zip(large.iter()) {
            assert!(!s || *l, "relaxed-point set not monotone in eps");
        }
        assert!(small.iter().filter(|s| **s).count() > 0);
        assert!(large.iter().filter(|l| **l).count() > small.iter().filter(|s| **s).count());
    }
}
