//! Scene model: camera, emitters, materials, shapes, integrator settings.

use crate::image::Image;
use crate::math::{vec3, Vec3};
use crate::sdf::{GridRgb, ParamSelector, SdfField};
use crate::trace::{DistanceField, Ray, BISECT_ITERS, MAX_STEPS, SURFACE_TOL};

#[derive(Debug, Clone)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_y: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    /// Primary ray through image-plane point (px, py) in pixel units;
    /// (0,0) is the top-left corner of the top-left pixel.
    pub fn primary_ray(&self, px: f64, py: f64) -> Ray {
        let forward = (self.look_at - self.position).normalized();
        let right = forward.cross(self.up).normalized();
        let up = right.cross(forward);
        let tan_half = (self.fov_y.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let u = px / self.width as f64 * 2.0 - 1.0;
        let v = 1.0 - py / self.height as f64 * 2.0;
        let d = forward + right * (u * tan_half * aspect) + up * (v * tan_half);
        Ray::new(self.position, d.normalized())
    }
}

/// One-sided rectangular area light spanned by two edge vectors.
#[derive(Debug, Clone)]
pub struct RectLight {
    pub corner: Vec3,
    pub edge1: Vec3,
    pub edge2: Vec3,
    pub radiance: Vec3,
}

impl RectLight {
    pub fn normal(&self) -> Vec3 {
        self.edge1.cross(self.edge2).normalized()
    }

    pub fn area(&self) -> f64 {
        self.edge1.cross(self.edge2).norm()
    }

    pub fn sample_point(&self, u: f64, v: f64) -> Vec3 {
        self.corner + self.edge1 * u + self.edge2 * v
    }

    /// Ray-rectangle intersection; returns the ray parameter if the ray
    /// crosses the rectangle within (t_min, t_max).
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        let n = self.normal();
        let denom = ray.d.dot(n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.corner - ray.o).dot(n) / denom;
        if t <= ray.t_min || t >= ray.t_max {
            return None;
        }
        let p = ray.point(t) - self.corner;
        let e1 = self.edge1;
        let e2 = self.edge2;
        // Decompose p in the (possibly non-orthogonal) edge basis.
        let d11 = e1.dot(e1);
        let d22 = e2.dot(e2);
        let d12 = e1.dot(e2);
        let det = d11 * d22 - d12 * d12;
        if det.abs() < 1e-18 {
            return None;
        }
        let b1 = p.dot(e1);
        let b2 = p.dot(e2);
        let a = (b1 * d22 - b2 * d12) / det;
        let b = (b2 * d11 - b1 * d12) / det;
        if (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b) {
            Some(t)
        } else {
            None
        }
    }

    /// Radiance emitted toward direction `to_receiver` (unit, from the
    /// light surface to the receiver); zero on the back side.
    pub fn emitted(&self, to_receiver: Vec3) -> Vec3 {
        if to_receiver.dot(self.normal()) > 0.0 {
            self.radiance
        } else {
            Vec3::ZERO
        }
    }
}

#[derive(Debug, Clone)]
pub enum EnvLight {
    Constant(Vec3),
    /// Equirectangular map, nearest-texel lookup, y-up.
    Map(Image),
}

impl EnvLight {
    pub fn radiance(&self, d: Vec3) -> Vec3 {
        match self {
            EnvLight::Constant(c) => *c,
            EnvLight::Map(img) => {
                let u = d.z.atan2(d.x) / (2.0 * std::f64::consts::PI) + 0.5;
                let v = d.y.clamp(-1.0, 1.0).acos() / std::f64::consts::PI;
                let x = ((u * img.w as f64) as usize).min(img.w - 1);
                let y = ((v * img.h as f64) as usize).min(img.h - 1);
                img.pixel(x, y)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Albedo {
    Constant(Vec3),
    Grid(GridRgb),
}

impl Albedo {
    pub fn as_grid(&self) -> Option<&GridRgb> {
        match self {
            Albedo::Grid(g) => Some(g),
            _ => None,
        }
    }

    pub fn as_grid_mut(&mut self) -> Option<&mut GridRgb> {
        match self {
            Albedo::Grid(g) => Some(g),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Material {
    Diffuse { albedo: Albedo },
    Mirror { reflectance: Vec3 },
}

#[derive(Debug, Clone)]
pub struct Shape {
    pub name: String,
    pub field: SdfField,
    pub material: Material,
}

/// Integrator settings shared by rendering and differentiation passes.
#[derive(Debug, Clone)]
pub struct Settings {
    pub spp: usize,
    pub max_depth: u32,
    /// SDF threshold ε for relaxed silhouette detection.
    pub eps: f64,
    pub seed: u64,
    pub surface_tol: f64,
    pub max_steps: u32,
    pub bisect_iters: u32,
    /// Disables the boundary term (ablation / negative control).
    pub boundary: bool,
}

impl Default for Settings {
    fn default() -> Settings {
        Settings {
            spp: 16,
            max_depth: 2,
            eps: 0.002,
            seed: 0,
            surface_tol: SURFACE_TOL,
            max_steps: MAX_STEPS,
            bisect_iters: BISECT_ITERS,
            boundary: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub shapes: Vec<Shape>,
    pub lights: Vec<RectLight>,
    pub env: Option<EnvLight>,
    pub camera: Camera,
    pub settings: Settings,
}

impl Scene {
    /// Number of emitters for uniform light selection.
    pub fn emitter_count(&self) -> usize {
        self.lights.len() + usize::from(self.env.is_some())
    }

    /// Scene SDF value and the index of the closest shape.
    pub fn sdf_min(&self, x: Vec3) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut idx = 0;
        for (i, s) in self.shapes.iter().enumerate() {
            let d = s.field.eval(x);
            if d < best {
                best = d;
                idx = i;
            }
        }
        (best, idx)
    }

    pub fn field(&self) -> SceneField<'_> {
        SceneField { scene: self }
    }

    pub fn shape_by_name(&self, name: &str) -> Option<usize> {
        self.shapes.iter().position(|s| s.name == name)
    }

    /// Nearest rect light hit by the ray, if any.
    pub fn intersect_lights(&self, ray: &Ray) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, l) in self.lights.iter().enumerate() {
            if let Some(t) = l.intersect(ray) {
                if best.map_or(true, |(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best
    }

    pub fn env_radiance(&self, d: Vec3) -> Vec3 {
        self.env.as_ref().map_or(Vec3::ZERO, |e| e.radiance(d))
    }
}

/// Union view of all shape SDFs for tracing.
pub struct SceneField<'a> {
    scene: &'a Scene,
}

impl DistanceField for SceneField<'_> {
    fn value(&self, x: Vec3) -> f64 {
        self.scene.sdf_min(x).0
    }

    fn gradient(&self, x: Vec3) -> Vec3 {
        let (_, idx) = self.scene.sdf_min(x);
        self.scene.shapes[idx].field.grad(x)
    }
}

/// Scalar differentiation parameter bound to a scene entity.
#[derive(Debug, Clone)]
pub enum BoundParam {
    /// Geometric parameter of one shape's SDF.
    Shape { shape: usize, selector: ParamSelector },
    /// One channel of one voxel of a shape's albedo grid.
    AlbedoVoxel { shape: usize, voxel: usize, channel: usize },
}

impl BoundParam {
    pub fn translation(scene: &Scene, shape: &str, axis: Vec3) -> Option<BoundParam> {
        scene.shape_by_name(shape).map(|shape| BoundParam::Shape {
            shape,
            selector: ParamSelector::Translation { axis: axis.normalized() },
        })
    }
}

pub fn default_camera(width: usize, height: usize) -> Camera {
    Camera {
        position: vec3(0.0, 0.0, 3.0),
        look_at: Vec3::ZERO,
        up: vec3(0.0, 1.0, 0.0),
        fov_y: 45.0,
        width,
        height,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_rays_are_unit_and_oriented() {
        let cam = default_camera(64, 64);
        let r = cam.primary_ray(32.0, 32.0);
        assert!((r.d.norm() - 1.0).abs() < 1e-9);
        // Center ray points at the look-at target.
        assert!((r.d - (cam.look_at - cam.position).normalized()).norm() < 1e-9);
        // Top-left ray points up and to the left.
        let tl = cam.primary_ray(0.0, 0.0);
        assert!(tl.d.x < 0.0 && tl.d.y > 0.0);
    }

    #[test]
    fn rect_intersection_and_sidedness() {
        let l = RectLight {
            corner: vec3(-0.5, 1.0, -0.5),
            edge1: vec3(1.0, 0.0, 0.0),
            edge2: vec3(0.0, 0.0, 1.0),
            radiance: Vec3::ONE,
        };
        // Normal points along +y? edge1 x edge2 = (0,-... ) check both sides.
        let hit = l
            .intersect(&Ray::new(vec3(0.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0)).with_range(0.0, 10.0));
        assert!((hit.unwrap() - 1.0).abs() < 1e-12);
        let miss = l
            .intersect(&Ray::new(vec3(2.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0)).with_range(0.0, 10.0));
        assert!(miss.is_none());
        // One-sided emission.
        let n = l.normal();
        assert_eq!(l.emitted(n), Vec3::ONE);
        assert_eq!(l.emitted(-n), Vec3::ZERO);
    }
}
