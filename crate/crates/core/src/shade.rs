//! Forward rendering and forward-mode differentiated shading.
//!
//! The whole shading path is written over dual scalars: plain rendering runs
//! it with zero derivative parts, forward-mode differentiation seeds the
//! derivative parts at ray-surface intersections (implicit-function rule)
//! and lets the chain rule carry them through MIS direct lighting, BSDF
//! bounces and mirror reflections. Relaxed silhouette points found during
//! tracing are reported to a [`BoundarySink`] together with the ray's
//! radiance jump Δf.

use crate::diag::Diagnostics;
use crate::dual::{dual, Dual, Dv3};
use crate::grad::{BoundaryRecord, BoundarySink, NullSink, SegmentKind};
use crate::image::Image;
use crate::math::Vec3;
use crate::sampling::{
    balance_weight_dual, cosine_hemisphere, local_to_world_dual, sample_rng, uniform_sphere,
    SampleRng, UNIFORM_SPHERE_PDF,
};
use crate::scene::{BoundParam, Material, Scene};
use crate::sdf::{ParamDerivative, DEGENERATE_GRAD};
use crate::trace::{sphere_trace, trace_with_relaxed_silhouette, Ray, RelaxedSilhouette};
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Secondary rays start this many surface tolerances above the surface.
const ORIGIN_OFFSET_FACTOR: f64 = 20.0;

/// Near-tangent intersection denominators |<∇φ, d>| are clamped here.
pub(crate) const MIN_INTERSECT_DENOM: f64 = 1e-4;

#[derive(Clone, Copy)]
pub struct ShadeCtx<'a> {
    pub scene: &'a Scene,
    pub param: Option<&'a BoundParam>,
    pub diag: &'a Diagnostics,
}

impl<'a> ShadeCtx<'a> {
    pub fn plain(scene: &'a Scene, diag: &'a Diagnostics) -> ShadeCtx<'a> {
        ShadeCtx { scene, param: None, diag }
    }

    fn offset(&self) -> f64 {
        ORIGIN_OFFSET_FACTOR * self.scene.settings.surface_tol
    }
}

pub(crate) enum SceneIsect {
    Surface { shape: usize, t: f64 },
    Light { light: usize },
    Miss,
}

/// Trace one segment against lights and the SDF union. Returns the nearest
/// hit and, when requested, the relaxed silhouette point (with its owning
/// shape) found on the valid part of the segment.
pub(crate) fn trace_segment(
    ctx: &ShadeCtx,
    o: Vec3,
    d: Vec3,
    t_max: f64,
    want_relaxed: bool,
) -> (SceneIsect, Option<(usize, RelaxedSilhouette)>) {
    let s = &ctx.scene.settings;
    let ray = Ray::new(o, d).with_range(0.0, t_max);
    let light_hit = ctx.scene.intersect_lights(&ray);
    let sdf_t_max = light_hit.map_or(t_max, |(t, _)| t.min(t_max));
    let sdf_ray = Ray::new(o, d).with_range(0.0, sdf_t_max);
    let field = ctx.scene.field();
    let res = if want_relaxed {
        trace_with_relaxed_silhouette(
            &field,
            sdf_ray,
            s.eps,
            s.surface_tol,
            s.max_steps,
            s.bisect_iters,
            ctx.diag,
        )
    } else {
        sphere_trace(&field, sdf_ray, s.surface_tol, s.max_steps, ctx.diag)
    };
    let relaxed = res
        .relaxed
        .map(|rel| (ctx.scene.sdf_min(rel.point).1, rel));
    let isect = match res.hit() {
        Some((x, t)) => SceneIsect::Surface {
            shape: ctx.scene.sdf_min(x).1,
            t,
        },
        None => match light_hit {
            Some((_t, light)) => SceneIsect::Light { light },
            None => SceneIsect::Miss,
        },
    };
    (isect, relaxed)
}

/// Explicit dφ/dθ of the bound parameter at x (zero when the hit shape is
/// not the bound one).
fn explicit_dphi(ctx: &ShadeCtx, shape: usize, x: Vec3) -> f64 {
    match ctx.param {
        Some(BoundParam::Shape { shape: s, selector }) if *s == shape => {
            match ctx.scene.shapes[shape].field.param_derivative(selector, x) {
                Ok(ParamDerivative::Scalar(v)) => v,
                _ => 0.0,
            }
        }
        _ => 0.0,
    }
}

fn explicit_dgrad(ctx: &ShadeCtx, shape: usize, x: Vec3) -> Vec3 {
    match ctx.param {
        Some(BoundParam::Shape { shape: s, selector }) if *s == shape => {
            ctx.scene.shapes[shape].field.param_grad_derivative(selector, x)
        }
        _ => Vec3::ZERO,
    }
}

/// Clamp the intersection denominator <∇φ, d> away from zero (grazing
/// hits), counting every clamp.
pub(crate) fn clamp_denom(den: f64, diag: &Diagnostics) -> f64 {
    if den.abs() < MIN_INTERSECT_DENOM {
        Diagnostics::bump(&diag.denominator_clamps);
        if den == 0.0 {
            -MIN_INTERSECT_DENOM
        } else {
            MIN_INTERSECT_DENOM * den.signum()
        }
    } else {
        den
    }
}

/// Differentiated hit data: position via the implicit-function rule and the
/// raw SDF gradient with its parameter derivative. `None` when the gradient
/// is degenerate (sample dropped).
pub fn attach_hit(
    ctx: &ShadeCtx,
    shape: usize,
    o: Dv3,
    d: Dv3,
    t: f64,
) -> Option<(Dv3, Dv3)> {
    let x0 = o.value() + d.value() * t;
    let field = &ctx.scene.shapes[shape].field;
    let g = field.grad(x0);
    if g.norm() < DEGENERATE_GRAD {
        Diagnostics::bump(&ctx.diag.degenerate_gradients);
        return None;
    }
    let den = clamp_denom(g.dot(d.value()), ctx.diag);
    let num = explicit_dphi(ctx, shape, x0) + g.dot(o.deriv() + d.deriv() * t);
    let dt = -num / den;
    let x = o + d.scale(dual(t, dt));
    let dg = field.hessian(x0).mul_vec(x.deriv()) + explicit_dgrad(ctx, shape, x0);
    Some((x, Dv3::new(g, dg)))
}

/// Albedo of a diffuse shape at a (dual) point, including the spatial
/// dependence of grid albedos and the explicit albedo-voxel parameter.
fn albedo_at(ctx: &ShadeCtx, shape: usize, x: Dv3) -> Dv3 {
    match &ctx.scene.shapes[shape].material {
        Material::Diffuse { albedo } => match albedo {
            crate::scene::Albedo::Constant(c) => Dv3::constant(*c),
            crate::scene::Albedo::Grid(grid) => {
                let (val, jac) = grid.eval_with_jacobian(x.value());
                let mut d = Vec3::ZERO;
                for ch in 0..3 {
                    d[ch] = jac[ch].dot(x.deriv());
                }
                let mut out = Dv3::new(val, d);
                if let Some(BoundParam::AlbedoVoxel { shape: s, voxel, channel }) = ctx.param {
                    if *s == shape {
                        let w = grid.voxel_weight(x.value(), *voxel);
                        match channel {
                            0 => out.x.d += w,
                            1 => out.y.d += w,
                            _ => out.z.d += w,
                        }
                    }
                }
                out
            }
        },
        Material::Mirror { .. } => Dv3::ZERO,
    }
}

/// Radiance carried back along a ray segment, with derivative, recursing
/// over BSDF bounces. `prev_bsdf_pdf` is the solid-angle pdf the segment
/// direction was sampled with (None for camera rays and delta bounces).
#[allow(clippy::too_many_arguments)]
pub fn radiance(
    ctx: &ShadeCtx,
    sink: &mut dyn BoundarySink,
    o: Dv3,
    d: Dv3,
    depth_left: u32,
    prev_bsdf_pdf: Option<f64>,
    throughput: Vec3,
    kind: SegmentKind,
    rng: &mut SampleRng,
) -> Dv3 {
    if depth_left == 0 {
        return Dv3::ZERO;
    }
    let want_relaxed = sink.active() && ctx.scene.settings.boundary;
    // Snapshot for correlated Δf re-shading at a relaxed silhouette point.
    let rng_snapshot = rng.clone();
    let (isect, relaxed) = trace_segment(ctx, o.value(), d.value(), f64::INFINITY, want_relaxed);
    let l_seg = match isect {
        SceneIsect::Light { light } => {
            let le = ctx.scene.lights[light].emitted(-d.value());
            let w = match prev_bsdf_pdf {
                None => Dual::constant(1.0),
                Some(p) => {
                    let pe = rect_pdf_dual(ctx, light, o, d);
                    balance_weight_dual(Dual::constant(p), pe)
                }
            };
            Dv3::constant(le).scale(w)
        }
        SceneIsect::Miss => {
            let le = ctx.scene.env_radiance(d.value());
            let w = match (prev_bsdf_pdf, &ctx.scene.env) {
                (None, _) => 1.0,
                (Some(_), None) => 1.0,
                (Some(p), Some(_)) => {
                    let pe = UNIFORM_SPHERE_PDF / ctx.scene.emitter_count() as f64;
                    p / (p + pe)
                }
            };
            Dv3::constant(le) * w
        }
        SceneIsect::Surface { shape, t } => {
            if depth_left >= 2 {
                match attach_hit(ctx, shape, o, d, t) {
                    Some((x, g)) => {
                        shade_vertex(ctx, sink, shape, d, x, g, None, depth_left, throughput, rng)
                    }
                    None => Dv3::ZERO, // degenerate gradient, sample dropped
                }
            } else {
                Dv3::ZERO
            }
        }
    };
    if let Some((owner, rel)) = relaxed {
        emit_boundary_record(
            ctx,
            sink,
            owner,
            &rel,
            d.value(),
            depth_left,
            l_seg.value(),
            throughput,
            kind,
            &rng_snapshot,
        );
    }
    l_seg
}

/// Solid-angle pdf of emitter-sampling producing the direction of a ray
/// that hits rect light `light`, as seen from the (dual) ray origin.
fn rect_pdf_dual(ctx: &ShadeCtx, light: usize, o: Dv3, d: Dv3) -> Dual {
    let l = &ctx.scene.lights[light];
    let nl = Dv3::constant(l.normal());
    let den = d.dot(nl);
    if den.v.abs() < 1e-12 {
        return Dual::ZERO;
    }
    let t = (Dv3::constant(l.corner) - o).dot(nl) / den;
    let cos_l = (-d).dot(nl).abs();
    if cos_l.v < 1e-9 {
        return Dual::ZERO;
    }
    let n_emitters = ctx.scene.emitter_count() as f64;
    t * t / (cos_l * (l.area() * n_emitters))
}

/// Build and report a boundary record for a relaxed silhouette point found
/// on a camera/BSDF/shadow segment. Δf is the radiance jump: shading as if
/// the segment hit the λ-level set at y*, minus the segment's actual
/// radiance (for shadow segments the caller passes the lit contribution as
/// `l_actual` and hit-side shading is skipped: that side is occluded).
#[allow(clippy::too_many_arguments)]
pub(crate) fn emit_boundary_record(
    ctx: &ShadeCtx,
    sink: &mut dyn BoundarySink,
    owner: usize,
    rel: &RelaxedSilhouette,
    dir: Vec3,
    depth_left: u32,
    l_actual: Vec3,
    throughput: Vec3,
    kind: SegmentKind,
    rng_snapshot: &SampleRng,
) {
    if !sink.active() {
        return;
    }
    let g = ctx.scene.shapes[owner].field.grad(rel.point);
    let gn = g.norm();
    if gn < DEGENERATE_GRAD {
        Diagnostics::bump(&ctx.diag.degenerate_gradients);
        return;
    }
    let l_hit = match kind {
        SegmentKind::Shadow => Vec3::ZERO,
        _ => {
            let mut rng = rng_snapshot.clone();
            shade_at_relaxed_point(ctx, owner, rel.point, dir, depth_left, &mut rng)
        }
    };
    let delta_f = l_hit - l_actual;
    sink.record(BoundaryRecord {
        shape: owner,
        point: rel.point,
        lambda: rel.lambda,
        grad_norm: gn,
        delta_f,
        throughput,
        kind,
    });
}

/// Primal hit-side shading at a relaxed silhouette point: the point is
/// treated as lying on the λ-level set (normal from ∇φ, material sampled
/// there) and shaded with direct lighting (mirrors trace one bounce).
fn shade_at_relaxed_point(
    ctx: &ShadeCtx,
    owner: usize,
    y: Vec3,
    dir: Vec3,
    depth_left: u32,
    rng: &mut SampleRng,
) -> Vec3 {
    if depth_left < 2 {
        return Vec3::ZERO;
    }
    let plain = ShadeCtx::plain(ctx.scene, ctx.diag);
    let field = &ctx.scene.shapes[owner].field;
    let g = field.grad(y);
    if g.norm() < DEGENERATE_GRAD {
        return Vec3::ZERO;
    }
    shade_vertex(
        &plain,
        &mut NullSink,
        owner,
        Dv3::constant(dir),
        Dv3::constant(y),
        Dv3::constant(g),
        None,
        depth_left,
        Vec3::ZERO,
        rng,
    )
    .value()
}

/// Shading at a surface vertex: MIS direct lighting plus the sampled BSDF
/// continuation. `x` and `g` carry derivatives; all randomness comes from
/// `rng` in a fixed order so replayed evaluations stay aligned.
/// `albedo_override` lets callers seed the albedo derivative directly
/// (reverse mode); when `None` it is evaluated from `x`.
#[allow(clippy::too_many_arguments)]
pub fn shade_vertex(
    ctx: &ShadeCtx,
    sink: &mut dyn BoundarySink,
    shape: usize,
    d: Dv3,
    x: Dv3,
    g: Dv3,
    albedo_override: Option<Dv3>,
    depth_left: u32,
    throughput: Vec3,
    rng: &mut SampleRng,
) -> Dv3 {
    // Face the normal against the incoming direction.
    let mut n = g.normalized();
    if n.value().dot(d.value()) > 0.0 {
        n = -n;
    }
    let offset = ctx.offset();
    match &ctx.scene.shapes[shape].material {
        Material::Mirror { reflectance } => {
            let wr = d.reflect(n);
            let o2 = x + n.scale(Dual::constant(offset));
            let li = radiance(
                ctx,
                sink,
                o2,
                wr,
                depth_left - 1,
                None,
                throughput.mul_elem(*reflectance),
                SegmentKind::Bsdf,
                rng,
            );
            li.mul_elem(Dv3::constant(*reflectance))
        }
        Material::Diffuse { .. } => {
            let a = albedo_override.unwrap_or_else(|| albedo_at(ctx, shape, x));
            let mut l = direct_light(ctx, sink, x, n, a, throughput, rng);
            if depth_left >= 3 {
                let local = cosine_hemisphere(rng);
                let pdf_b = local.z / PI;
                if pdf_b > 0.0 {
                    let wi = local_to_world_dual(n, local);
                    let o2 = x + n.scale(Dual::constant(offset));
                    let li = radiance(
                        ctx,
                        sink,
                        o2,
                        wi,
                        depth_left - 1,
                        Some(pdf_b),
                        throughput.mul_elem(a.value()),
                        SegmentKind::Bsdf,
                        rng,
                    );
                    // f·cos/pdf collapses to the albedo for cosine sampling.
                    l += li.mul_elem(a);
                }
            }
            l
        }
    }
}

/// One-sample MIS direct lighting at a diffuse vertex: a uniformly chosen
/// emitter is sampled, and the BSDF-sampling estimate of the same emitters
/// comes from a cosine-sampled ray gathering emission.
fn direct_light(
    ctx: &ShadeCtx,
    sink: &mut dyn BoundarySink,
    x: Dv3,
    n: Dv3,
    a: Dv3,
    throughput: Vec3,
    rng: &mut SampleRng,
) -> Dv3 {
    let scene = ctx.scene;
    let n_emitters = scene.emitter_count();
    let offset = ctx.offset();
    let mut total = Dv3::ZERO;

    // Emitter-sampling strategy.
    if n_emitters > 0 {
        let pick = rng.gen_range(0..n_emitters);
        if pick < scene.lights.len() {
            let light = &scene.lights[pick];
            let u: f64 = rng.gen();
            let v: f64 = rng.gen();
            let p = light.sample_point(u, v);
            let to_p = Dv3::constant(p) - x;
            let dist = to_p.norm();
            let wi = to_p.normalized();
            let cos_l = (-wi).dot(Dv3::constant(light.normal()));
            let cos_x = wi.dot(n).max0();
            if cos_l.v > 1e-9 && cos_x.v > 0.0 {
                let q_e = dist * dist / (cos_l * (light.area() * n_emitters as f64));
                let pdf_b = cos_x / PI;
                let w = balance_weight_dual(q_e, pdf_b);
                let o2 = (x + n.scale(Dual::constant(offset))).value();
                let (occluded, rel) =
                    shadow_trace(ctx, sink.active(), o2, wi.value(), dist.v - 2.0 * offset);
                if !occluded {
                    let le = Dv3::constant(light.radiance);
                    let c = a
                        .mul_elem(le)
                        .scale(cos_x * w / (q_e * PI));
                    if let Some((owner, r)) = rel {
                        shadow_record(ctx, sink, owner, &r, c.value(), throughput);
                    }
                    total += c;
                }
            }
        } else {
            // Environment emitter, sampled uniformly over the sphere.
            let wi = uniform_sphere(rng);
            let cos_x = Dv3::constant(wi).dot(n).max0();
            if cos_x.v > 0.0 && scene.env.is_some() {
                let q_e = Dual::constant(UNIFORM_SPHERE_PDF / n_emitters as f64);
                let pdf_b = cos_x / PI;
                let w = balance_weight_dual(q_e, pdf_b);
                let o2 = (x + n.scale(Dual::constant(offset))).value();
                let (occluded, rel) = shadow_trace(ctx, sink.active(), o2, wi, f64::INFINITY);
                let blocked_by_light = scene
                    .intersect_lights(&Ray::new(o2, wi).with_range(0.0, f64::INFINITY))
                    .is_some();
                if !occluded && !blocked_by_light {
                    let le = Dv3::constant(scene.env_radiance(wi));
                    let c = a.mul_elem(le).scale(cos_x * w / (q_e * PI));
                    if let Some((owner, r)) = rel {
                        shadow_record(ctx, sink, owner, &r, c.value(), throughput);
                    }
                    total += c;
                }
            }
        }
    }

    total
}

/// Trace a shadow ray against the SDF union only. Returns occlusion and any
/// relaxed silhouette point (with owner) found on the way.
fn shadow_trace(
    ctx: &ShadeCtx,
    want_relaxed: bool,
    o: Vec3,
    d: Vec3,
    t_max: f64,
) -> (bool, Option<(usize, RelaxedSilhouette)>) {
    let s = &ctx.scene.settings;
    let ray = Ray::new(o, d).with_range(0.0, t_max);
    let field = ctx.scene.field();
    let res = if want_relaxed && s.boundary {
        trace_with_relaxed_silhouette(
            &field,
            ray,
            s.eps,
            s.surface_tol,
            s.max_steps,
            s.bisect_iters,
            ctx.diag,
        )
    } else {
        sphere_trace(&field, ray, s.surface_tol, s.max_steps, ctx.diag)
    };
    let occluded = res.hit().is_some();
    let rel = if occluded {
        None
    } else {
        res.relaxed.map(|r| (ctx.scene.sdf_min(r.point).1, r))
    };
    (occluded, rel)
}

/// Shadow-segment boundary record: the occluded side contributes zero, so
/// Δf is minus the lit contribution.
fn shadow_record(
    ctx: &ShadeCtx,
    sink: &mut dyn BoundarySink,
    owner: usize,
    rel: &RelaxedSilhouette,
    lit: Vec3,
    throughput: Vec3,
) {
    if !sink.active() {
        return;
    }
    let g = ctx.scene.shapes[owner].field.grad(rel.point);
    let gn = g.norm();
    if gn < DEGENERATE_GRAD {
        Diagnostics::bump(&ctx.diag.degenerate_gradients);
        return;
    }
    sink.record(BoundaryRecord {
        shape: owner,
        point: rel.point,
        lambda: rel.lambda,
        grad_norm: gn,
        delta_f: -lit,
        throughput,
        kind: SegmentKind::Shadow,
    });
}

/// Monte Carlo render of the scene through its camera. Deterministic for a
/// fixed seed regardless of worker count: every pixel sample owns an RNG
/// stream keyed by (seed, pixel, sample).
pub fn render(scene: &Scene) -> (Image, Diagnostics) {
    let diag = Diagnostics::new();
    let cam = &scene.camera;
    let s = &scene.settings;
    let w = cam.width;
    let h = cam.height;
    let rows: Vec<Vec<Vec3>> = (0..h)
        .into_par_iter()
        .map(|py| {
            let ctx = ShadeCtx::plain(scene, &diag);
            let mut row = Vec::with_capacity(w);
            for px in 0..w {
                let idx = (py * w + px) as u64;
                let mut sum = Vec3::ZERO;
                for sample in 0..s.spp {
                    let mut rng = sample_rng(s.seed, idx, sample as u64);
                    let jx: f64 = rng.gen();
                    let jy: f64 = rng.gen();
                    let ray = cam.primary_ray(px as f64 + jx, py as f64 + jy);
                    let l = radiance(
                        &ctx,
                        &mut NullSink,
                        Dv3::constant(ray.o),
                        Dv3::constant(ray.d),
                        s.max_depth,
                        None,
                        Vec3::ONE,
                        SegmentKind::Camera,
                        &mut rng,
                    )
                    .value();
                    if l.is_finite() {
                        sum += l;
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
