//! Boundary (silhouette) gradient terms and the two differentiation modes.
//!
//! Every relaxed silhouette point found while shading becomes a
//! [`BoundaryRecord`]. A sink converts records into parameter derivatives:
//! the forward sink multiplies by the scalar normal velocity of one bound
//! parameter, the reverse pass scatters into per-voxel gradient buffers.
//! Interior (visibility-preserving) derivatives ride along as dual numbers
//! in the shading path itself.

use crate::diag::Diagnostics;
use crate::dual::Dv3;
use crate::image::Image;
use crate::math::{vec3, Vec3};
use crate::sampling::sample_rng;
use crate::scene::{Albedo, BoundParam, Material, Scene};
use crate::sdf::{GridRgb, GridSdf, DEGENERATE_GRAD};
use crate::shade::{
    clamp_denom, emit_boundary_record, radiance, shade_vertex, trace_segment, SceneIsect,
    ShadeCtx,
};
use crate::{Error, Result};
use rayon::prelude::*;

/// Which kind of path segment a silhouette point was found on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Camera,
    Bsdf,
    Shadow,
}

/// A relaxed silhouette point with everything needed to turn it into a
/// derivative: the radiance jump across the silhouette, the path throughput
/// up to the segment, and φ's gradient norm at the point.
#[derive(Debug, Clone)]
pub struct BoundaryRecord {
    /// Shape owning the silhouette (argmin of the scene SDF at the point).
    pub shape: usize,
    /// The relaxed silhouette point y*.
    pub point: Vec3,
    /// λ = φ(y*).
    pub lambda: f64,
    /// ‖∇φ(y*)‖ of the owning shape.
    pub grad_norm: f64,
    /// Radiance jump Δf: hit-side shading minus the segment's radiance.
    pub delta_f: Vec3,
    /// Path throughput multiplying the segment's radiance.
    pub throughput: Vec3,
    pub kind: SegmentKind,
}

pub trait BoundarySink {
    /// Inactive sinks let tracing skip silhouette detection entirely.
    fn active(&self) -> bool;
    fn record(&mut self, rec: BoundaryRecord);
}

/// Sink for plain rendering: ignores everything.
pub struct NullSink;

impl BoundarySink for NullSink {
    fn active(&self) -> bool {
        false
    }
    fn record(&mut self, _rec: BoundaryRecord) {}
}

/// Buffers records for later scattering (reverse mode).
#[derive(Default)]
pub struct CollectSink {
    pub records: Vec<BoundaryRecord>,
}

impl BoundarySink for CollectSink {
    fn active(&self) -> bool {
        true
    }
    fn record(&mut self, rec: BoundaryRecord) {
        self.records.push(rec);
    }
}

/// Forward-mode sink: folds every record into the scalar derivative of one
/// bound parameter via its normal velocity, weighted 1/ε.
pub struct ForwardSink<'a> {
    scene: &'a Scene,
    param: &'a BoundParam,
    diag: &'a Diagnostics,
    pub acc: Vec3,
}

impl<'a> ForwardSink<'a> {
    pub fn new(scene: &'a Scene, param: &'a BoundParam, diag: &'a Diagnostics) -> ForwardSink<'a> {
        ForwardSink { scene, param, diag, acc: Vec3::ZERO }
    }
}

impl BoundarySink for ForwardSink<'_> {
    fn active(&self) -> bool {
        true
    }

    fn record(&mut self, rec: BoundaryRecord) {
        let (shape, selector) = match self.param {
            BoundParam::Shape { shape, selector } => (*shape, selector),
            // Albedo parameters never move the geometry.
            BoundParam::AlbedoVoxel { .. } => return,
        };
        if shape != rec.shape {
            return; // silhouette of an unbound shape has zero normal velocity
        }
        let vperp = match self.scene.shapes[shape].field.normal_velocity(selector, rec.point) {
            Ok(v) => v,
            Err(_) => {
                Diagnostics::bump(&self.diag.degenerate_gradients);
                return;
            }
        };
        self.acc += rec.delta_f.mul_elem(rec.throughput) * (vperp / self.scene.settings.eps);
    }
}

/// Forward-mode derivative of the rendered image with respect to one scalar
/// parameter. Same estimator, sampling and determinism contract as
/// [`crate::shade::render`].
pub fn forward_derivative_image(scene: &Scene, param: &BoundParam) -> (Image, Diagnostics) {
    let diag = Diagnostics::new();
    let cam = &scene.camera;
    let s = &scene.settings;
    let (w, h) = (cam.width, cam.height);
    let rows: Vec<Vec<Vec3>> = (0..h)
        .into_par_iter()
        .map(|py| {
            let ctx = ShadeCtx { scene, param: Some(param), diag: &diag };
            let mut row = Vec::with_capacity(w);
            for px in 0..w {
                let idx = (py * w + px) as u64;
                let mut sum = Vec3::ZERO;
                for sample in 0..s.spp {
                    let mut rng = sample_rng(s.seed, idx, sample as u64);
                    let jx: f64 = rand::Rng::gen(&mut rng);
                    let jy: f64 = rand::Rng::gen(&mut rng);
                    let ray = cam.primary_ray(px as f64 + jx, py as f64 + jy);
                    let mut sink = ForwardSink::new(scene, param, &diag);
                    let l = radiance(
                        &ctx,
                        &mut sink,
                        Dv3::constant(ray.o),
                        Dv3::constant(ray.d),
                        s.max_depth,
                        None,
                        Vec3::ONE,
                        SegmentKind::Camera,
                        &mut rng,
                    );
                    let dl = l.deriv() + sink.acc;
                    if dl.is_finite() {
                        sum += dl;
                    } else {
                        Diagnostics::bump(&diag.dropped_samples);
                    }
                }
                row.push(sum / s.spp as f64);
            }
            row
        })
        .collect();
    let mut img = Image::new(w, h);
    for (py, row) in rows.into_iter().enumerate() {
        for (px, p) in row.into_iter().enumerate() {
            *img.pixel_mut(px, py) = p;
        }
    }
    (img, diag)
}

/// Gradients of a scalar loss with respect to every voxel of one shape's
/// SDF grid and (if present) its albedo grid.
#[derive(Debug, Clone)]
pub struct VoxelGradients {
    pub sdf: Vec<f64>,
    pub albedo: Option<Vec<Vec3>>,
}

/// Reverse-mode pass: given the adjoint image ∂loss/∂pixel, re-trace the
/// scene with the same sample streams as [`crate::shade::render`] and
/// accumulate per-voxel gradients. Restricted to direct illumination
/// (`max_depth <= 2`); deeper transport would leak untracked interior
/// derivatives at secondary vertices.
///
/// Deterministic for fixed seed and any worker count: rows are processed in
/// parallel but merged in row order with sequential accumulation.
pub fn backward(
    scene: &Scene,
    shape: usize,
    adjoint: &Image,
) -> Result<(VoxelGradients, Diagnostics)> {
    let s = &scene.settings;
    if s.max_depth > 2 {
        return Err(Error::Config(
            "reverse mode supports max_depth <= 2 (direct illumination)".into(),
        ));
    }
    let grid = scene.shapes[shape]
        .field
        .as_grid()
        .ok_or_else(|| Error::Config("reverse mode needs a grid SDF".into()))?;
    let n_vox = grid.dims.len();
    let alb_grid = match &scene.shapes[shape].material {
        Material::Diffuse { albedo: Albedo::Grid(g) } => Some(g),
        _ => None,
    };
    let cam = &scene.camera;
    let (w, h) = (cam.width, cam.height);
    if adjoint.w != w || adjoint.h != h {
        return Err(Error::DimensionMismatch(format!(
            "adjoint image is {}x{}, camera is {}x{}",
            adjoint.w, adjoint.h, w, h
        )));
    }
    let diag = Diagnostics::new();

    // Per-row sparse contributions, merged in row order below.
    type RowAcc = (Vec<(usize, f64)>, Vec<(usize, usize, f64)>);
    let rows: Vec<RowAcc> = (0..h)
        .into_par_iter()
        .map(|py| {
            let mut sdf_acc = Vec::new();
            let mut alb_acc = Vec::new();
            for px in 0..w {
                let idx = (py * w + px) as u64;
                let adj = adjoint.pixel(px, py);
                if adj == Vec3::ZERO {
                    continue;
                }
                for sample in 0..s.spp {
                    let mut rng = sample_rng(s.seed, idx, sample as u64);
                    let jx: f64 = rand::Rng::gen(&mut rng);
                    let jy: f64 = rand::Rng::gen(&mut rng);
                    let ray = cam.primary_ray(px as f64 + jx, py as f64 + jy);
                    backward_sample(
                        scene,
                        shape,
                        grid,
                        alb_grid,
                        ray.o,
                        ray.d,
                        adj / s.spp as f64,
                        &mut rng,
                        &diag,
                        &mut sdf_acc,
                        &mut alb_acc,
                    );
                }
            }
            (sdf_acc, alb_acc)
        })
        .collect();

    let mut out = VoxelGradients {
        sdf: vec![0.0; n_vox],
        albedo: alb_grid.map(|g| vec![Vec3::ZERO; g.dims.len()]),
    };
    for (sdf_acc, alb_acc) in rows {
        for (v, val) in sdf_acc {
            out.sdf[v] += val;
        }
        if let Some(alb) = out.albedo.as_mut() {
            for (v, ch, val) in alb_acc {
                alb[v][ch] += val;
            }
        }
    }
    Ok((out, diag))
}

/// One camera sample of the reverse pass. The vertex shading is evaluated
/// with seeded dual inputs — one evaluation per independent seed direction
/// (motion along the ray, the three gradient axes, the albedo weight) —
/// and the resulting directional derivatives are scattered to the voxels
/// of the intersected cell. Boundary records collected along the way are
/// scattered through the relaxed silhouette weights.
#[allow(clippy::too_many_arguments)]
fn backward_sample(
    scene: &Scene,
    shape: usize,
    grid: &GridSdf,
    alb_grid: Option<&GridRgb>,
    o: Vec3,
    d: Vec3,
    adj: Vec3,
    rng: &mut crate::sampling::SampleRng,
    diag: &Diagnostics,
    sdf_acc: &mut Vec<(usize, f64)>,
    alb_acc: &mut Vec<(usize, usize, f64)>,
) {
    let s = &scene.settings;
    let ctx = ShadeCtx::plain(scene, diag);
    let mut collect = CollectSink::default();
    let rng_snapshot = rng.clone();
    let (isect, relaxed) = trace_segment(&ctx, o, d, f64::INFINITY, s.boundary);
    let mut l_seg = Vec3::ZERO;
    match isect {
        SceneIsect::Light { light } => {
            l_seg = scene.lights[light].emitted(-d);
        }
        SceneIsect::Miss => {
            l_seg = scene.env_radiance(d);
        }
        SceneIsect::Surface { shape: hit_shape, t } => {
            if s.max_depth >= 2 {
                let x0 = o + d * t;
                let field = &scene.shapes[hit_shape].field;
                let g = field.grad(x0);
                if g.norm() < DEGENERATE_GRAD {
                    Diagnostics::bump(&diag.degenerate_gradients);
                } else if hit_shape != shape {
                    // No interior flow through unbound shapes; still run the
                    // shading once to collect shadow-segment records.
                    l_seg = shade_vertex(
                        &ctx,
                        &mut collect,
                        hit_shape,
                        Dv3::constant(d),
                        Dv3::constant(x0),
                        Dv3::constant(g),
                        None,
                        s.max_depth,
                        Vec3::ONE,
                        rng,
                    )
                    .value();
                } else {
                    let den = clamp_denom(g.dot(d), diag);
                    let hess = field.hessian(x0);
                    let alb = alb_grid.map(|ag| ag.eval_with_jacobian(x0));
                    let eval = |dx: Vec3,
                                    dg: Vec3,
                                    da: Option<Vec3>,
                                    sink: &mut dyn BoundarySink,
                                    rng: &mut crate::sampling::SampleRng| {
                        let a_override = match (&alb, da) {
                            (Some((aval, _)), Some(dav)) => Some(Dv3::new(*aval, dav)),
                            _ => None,
                        };
                        shade_vertex(
                            &ctx,
                            sink,
                            hit_shape,
                            Dv3::constant(d),
                            Dv3::new(x0, dx),
                            Dv3::new(g, dg),
                            a_override,
                            s.max_depth,
                            Vec3::ONE,
                            rng,
                        )
                    };
                    // Motion seed: unit step of the hit point along the ray,
                    // with the induced gradient and albedo motion.
                    let da_motion = alb.as_ref().map(|(_, jac)| {
                        vec3(jac[0].dot(d), jac[1].dot(d), jac[2].dot(d))
                    });
                    let l_motion = eval(d, hess.mul_vec(d), da_motion, &mut collect, &mut rng_snapshot.clone());
                    // Gradient axis seeds.
                    let mut l_axis = [Dv3::ZERO; 3];
                    for (axis, slot) in l_axis.iter_mut().enumerate() {
                        let mut e = Vec3::ZERO;
                        e[axis] = 1.0;
                        *slot = eval(Vec3::ZERO, e, None, &mut NullSink, &mut rng_snapshot.clone());
                    }
                    // Albedo weight seed; this one advances the main stream.
                    let l_alb = eval(Vec3::ZERO, Vec3::ZERO, Some(Vec3::ONE), &mut NullSink, rng);
                    l_seg = l_motion.value();

                    for (v, wv) in grid.voxel_weights(x0) {
                        let sv = -wv / den;
                        let wg = grid.voxel_weight_grad(x0, v);
                        let mut total = 0.0;
                        for ch in 0..3 {
                            let dl = l_motion.deriv()[ch] * sv
                                + l_axis[0].deriv()[ch] * wg.x
                                + l_axis[1].deriv()[ch] * wg.y
                                + l_axis[2].deriv()[ch] * wg.z;
                            total += adj[ch] * dl;
                        }
                        if total != 0.0 && total.is_finite() {
                            sdf_acc.push((v, total));
                        }
                    }
                    if let Some(ag) = alb_grid {
                        for (v, wv) in ag.voxel_weights(x0) {
                            for ch in 0..3 {
                                let val = adj[ch] * l_alb.deriv()[ch] * wv;
                                if val != 0.0 && val.is_finite() {
                                    alb_acc.push((v, ch, val));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some((owner, rel)) = relaxed {
        emit_boundary_record(
            &ctx,
            &mut collect,
            owner,
            &rel,
            d,
            s.max_depth,
            l_seg,
            Vec3::ONE,
            SegmentKind::Camera,
            &rng_snapshot,
        );
    }
    // Scatter boundary records: v⊥ of voxel v at y* is −w_v(y*)/‖∇φ(y*)‖.
    for rec in &collect.records {
        if rec.shape != shape {
            continue;
        }
        for (v, wv) in grid.voxel_weights(rec.point) {
            let coef = -wv / (rec.grad_norm * s.eps);
            let mut total = 0.0;
            for ch in 0..3 {
                total += adj[ch] * coef * rec.delta_f[ch] * rec.throughput[ch];
            }
            if total != 0.0 && total.is_finite() {
                sdf_acc.push((v, total));
            }
        }
    }
}
