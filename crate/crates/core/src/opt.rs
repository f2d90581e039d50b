//! Inverse rendering: Adam over SDF / albedo grids (or a single rigid
//! translation), L1 image loss, round-robin view batches, coarse-to-fine
//! upscaling and per-iteration redistancing.

use crate::diag::Diagnostics;
use crate::grad::{backward, forward_derivative_image};
use crate::image::Image;
use crate::math::Vec3;
use crate::redistance::{redistance, DEFAULT_PASSES};
use crate::scene::{Albedo, BoundParam, Camera, Material, Scene};
use crate::sdf::{GridDims, GridRgb, GridSdf, ParamSelector, SdfField};
use crate::shade::render;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    /// Iterations spent at each resolution level.
    pub iters_per_level: usize,
    /// Number of resolution levels (1 = no upscaling).
    pub levels: usize,
    pub upscale_factor: usize,
    /// Hard cap on grid resolution per axis.
    pub max_res: usize,
    /// Views per iteration, taken round-robin.
    pub batch_size: usize,
    /// Samples per pixel for optimization renders.
    pub spp: usize,
    /// Silhouette relaxation threshold at the first level.
    pub eps: f64,
    pub halve_eps_on_upscale: bool,
}

impl Default for OptimConfig {
    fn default() -> OptimConfig {
        OptimConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            iters_per_level: 300,
            levels: 1,
            upscale_factor: 2,
            max_res: 256,
            batch_size: 1,
            spp: 4,
            eps: 0.002,
            halve_eps_on_upscale: false,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.upscale_factor < 2 {
            return Err(Error::Config("upscale factor must be >= 2".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Cameras with their reference images.
pub struct ViewSet {
    pub views: Vec<(Camera, Image)>,
}

impl ViewSet {
    pub fn new(views: Vec<(Camera, Image)>) -> Result<ViewSet> {
        if views.is_empty() {
            return Err(Error::Config("need at least one view".into()));
        }
        let (w, h) = (views[0].1.w, views[0].1.h);
        for (cam, img) in &views {
            if img.w != w || img.h != h || cam.width != img.w || cam.height != img.h {
                return Err(Error::DimensionMismatch(
                    "all views must share one resolution".into(),
                ));
            }
        }
        Ok(ViewSet { views })
    }
}

/// Mean absolute difference over pixels and channels, plus the adjoint
/// image ∂loss/∂pixel = sign(rendered − reference)/count.
pub fn l1_loss(rendered: &Image, reference: &Image) -> Result<(f64, Image)> {
    if rendered.w != reference.w || rendered.h != reference.h {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            rendered.w, rendered.h, reference.w, reference.h
        )));
    }
    let count = (rendered.w * rendered.h * 3) as f64;
    let mut adjoint = Image::new(rendered.w, rendered.h);
    let mut sum = 0.0;
    for (out, (a, b)) in adjoint
        .pixels_mut()
        .iter_mut()
        .zip(rendered.pixels().iter().zip(reference.pixels()))
    {
        for ch in 0..3 {
            let diff = a[ch] - b[ch];
            sum += diff.abs();
            out[ch] = if diff > 0.0 {
                1.0 / count
            } else if diff < 0.0 {
                -1.0 / count
            } else {
                0.0
            };
        }
    }
    Ok((sum / count, adjoint))
}

/// Bias-corrected Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> AdamState {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One Adam update in place. Non-finite gradient entries are zeroed; the
/// number of zeroed entries is returned.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &OptimConfig,
) -> Result<usize> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch(format!(
            "params {} / grads {} / state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let b1t = 1.0 - cfg.beta1.powi(state.t as i32);
    let b2t = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut zeroed = 0usize;
    for i in 0..params.len() {
        let mut g = grads[i];
        if !g.is_finite() {
            g = 0.0;
            zeroed += 1;
        }
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
    }
    Ok(zeroed)
}

fn upscaled_dims(dims: GridDims, factor: usize, max_res: usize) -> Result<GridDims> {
    let (nx, ny, nz) = (dims.nx * factor, dims.ny * factor, dims.nz * factor);
    if nx > max_res || ny > max_res || nz > max_res {
        return Err(Error::Config(format!(
            "upscale to {}x{}x{} exceeds the {max_res} cap",
            nx, ny, nz
        )));
    }
    GridDims::new(nx, ny, nz, dims.bmin, dims.bmax)
}

/// Trilinear resampling onto a grid `factor`× finer over the same box.
pub fn upscale_grid(grid: &GridSdf, factor: usize, max_res: usize) -> Result<GridSdf> {
    let dims = upscaled_dims(grid.dims, factor, max_res)?;
    Ok(GridSdf::from_fn(dims, |x| grid.eval(x)))
}

pub fn upscale_rgb(grid: &GridRgb, factor: usize, max_res: usize) -> Result<GridRgb> {
    let dims = upscaled_dims(grid.dims, factor, max_res)?;
    // Fill in index order (x fastest) to match grid storage.
    let mut values = Vec::with_capacity(dims.len());
    for k in 0..dims.nz {
        for j in 0..dims.ny {
            for i in 0..dims.nx {
                values.push(grid.eval(dims.node_pos(i, j, k)));
            }
        }
    }
    GridRgb::new(dims, values)
}

/// What the optimizer is allowed to change.
pub enum OptTarget {
    /// Per-voxel SDF (and albedo grid if the shape carries one).
    Grid { shape: usize },
    /// Single scalar: translation of one shape along a fixed axis.
    Translation { shape: usize, axis: Vec3, init: f64 },
}

#[derive(Debug, Clone)]
pub struct LossRow {
    pub iter: usize,
    pub level: usize,
    pub loss: f64,
}

pub struct OptimResult {
    pub loss_history: Vec<LossRow>,
    /// Per-iteration parameter value in translation mode.
    pub theta_history: Vec<f64>,
    pub diag: Diagnostics,
}

/// Run the optimization loop. The scene is modified in place; the camera is
/// switched to each view's camera while rendering it. `checkpoint` is
/// called after every level (and once on divergence) with the current
/// grids.
pub fn optimize(
    scene: &mut Scene,
    views: &ViewSet,
    target: OptTarget,
    cfg: &OptimConfig,
    mut checkpoint: impl FnMut(usize, &Scene),
) -> Result<OptimResult> {
    cfg.validate()?;
    scene.settings.spp = cfg.spp;
    scene.settings.eps = cfg.eps;
    let diag = Diagnostics::new();
    let mut result = OptimResult {
        loss_history: Vec::new(),
        theta_history: Vec::new(),
        diag,
    };
    match target {
        OptTarget::Translation { shape, axis, init } => {
            optimize_translation(scene, views, shape, axis, init, cfg, &mut result)?;
            checkpoint(0, scene);
        }
        OptTarget::Grid { shape } => {
            optimize_grid(scene, views, shape, cfg, &mut result, &mut checkpoint)?;
        }
    }
    Ok(result)
}

fn batch_indices(iter: usize, batch: usize, n_views: usize) -> Vec<usize> {
    (0..batch.min(n_views))
        .map(|j| (iter * batch + j) % n_views)
        .collect()
}

fn optimize_translation(
    scene: &mut Scene,
    views: &ViewSet,
    shape: usize,
    axis: Vec3,
    init: f64,
    cfg: &OptimConfig,
    result: &mut OptimResult,
) -> Result<()> {
    let axis = axis.normalized();
    let base = match &scene.shapes[shape].field {
        SdfField::Analytic(a) => a.translation,
        SdfField::Grid(_) => {
            return Err(Error::Config(
                "translation mode needs an analytic shape".into(),
            ))
        }
    };
    let mut theta = init;
    let mut state = AdamState::new(1);
    let param = BoundParam::Shape {
        shape,
        selector: ParamSelector::Translation { axis },
    };
    for iter in 0..cfg.iters_per_level {
        if let SdfField::Analytic(a) = &mut scene.shapes[shape].field {
            a.translation = base + axis * theta;
        }
        let mut loss_sum = 0.0;
        let mut grad = 0.0;
        for &vi in &batch_indices(iter, cfg.batch_size, views.views.len()) {
            let (cam, reference) = &views.views[vi];
            scene.camera = cam.clone();
            let (img, d) = render(scene);
            result.diag.merge(&d);
            let (loss, adjoint) = l1_loss(&img, reference)?;
            let (deriv, d2) = forward_derivative_image(scene, &param);
            result.diag.merge(&d2);
            loss_sum += loss;
            for (adj, der) in adjoint.pixels().iter().zip(deriv.pixels()) {
                grad += adj.dot(*der);
            }
        }
        let n = cfg.batch_size.min(views.views.len()) as f64;
        let loss = loss_sum / n;
        if !loss.is_finite() {
            return Err(Error::Other(format!("loss diverged at iteration {iter}")));
        }
        let mut p = [theta];
        adam_step(&mut p, &[grad / n], &mut state, cfg)?;
        theta = p[0];
        result.loss_history.push(LossRow { iter, level: 0, loss });
        result.theta_history.push(theta);
    }
    if let SdfField::Analytic(a) = &mut scene.shapes[shape].field {
        a.translation = base + axis * theta;
    }
    Ok(())
}

fn optimize_grid(
    scene: &mut Scene,
    views: &ViewSet,
    shape: usize,
    cfg: &OptimConfig,
    result: &mut OptimResult,
    checkpoint: &mut impl FnMut(usize, &Scene),
) -> Result<()> {
    if scene.shapes[shape].field.as_grid().is_none() {
        return Err(Error::Config("grid mode needs a grid SDF".into()));
    }
    let mut iter_global = 0usize;
    for level in 0..cfg.levels.max(1) {
        let n_sdf = scene.shapes[shape].field.as_grid().unwrap().dims.len();
        let n_alb = match &scene.shapes[shape].material {
            Material::Diffuse { albedo: Albedo::Grid(g) } => Some(g.dims.len()),
            _ => None,
        };
        let mut sdf_state = AdamState::new(n_sdf);
        let mut alb_state = n_alb.map(|n| AdamState::new(3 * n));
        for _ in 0..cfg.iters_per_level {
            let mut loss_sum = 0.0;
            let mut sdf_grad = vec![0.0; n_sdf];
            let mut alb_grad = n_alb.map(|n| vec![0.0; 3 * n]);
            let idx = batch_indices(iter_global, cfg.batch_size, views.views.len());
            for &vi in &idx {
                let (cam, reference) = &views.views[vi];
                scene.camera = cam.clone();
                let (img, d) = render(scene);
                result.diag.merge(&d);
                let (loss, adjoint) = l1_loss(&img, reference)?;
                loss_sum += loss;
                let (grads, d2) = backward(scene, shape, &adjoint)?;
                result.diag.merge(&d2);
                for (acc, g) in sdf_grad.iter_mut().zip(&grads.sdf) {
                    *acc += g;
                }
                if let (Some(acc), Some(g)) = (alb_grad.as_mut(), grads.albedo.as_ref()) {
                    for (i, gv) in g.iter().enumerate() {
                        for ch in 0..3 {
                            acc[3 * i + ch] += gv[ch];
                        }
                    }
                }
            }
            let n = idx.len() as f64;
            let loss = loss_sum / n;
            if !loss.is_finite() {
                checkpoint(level, scene);
                return Err(Error::Other(format!(
                    "loss diverged at iteration {iter_global}"
                )));
            }
            for g in sdf_grad.iter_mut() {
                *g /= n;
            }
            // Adam on the SDF voxels, then pin the surface back to a
            // distance function.
            {
                let grid = scene.shapes[shape].field.as_grid_mut().unwrap();
                let mut failed = false;
                grid.update_values(|vals| {
                    if adam_step(vals, &sdf_grad, &mut sdf_state, cfg).is_err() {
                        failed = true;
                    }
                });
                if failed {
                    return Err(Error::Other("adam state mismatch".into()));
                }
                redistance(grid, DEFAULT_PASSES)?;
            }
            if let (Some(gbuf), Some(st)) = (alb_grad.as_mut(), alb_state.as_mut()) {
                for g in gbuf.iter_mut() {
                    *g /= n;
                }
                if let Material::Diffuse { albedo: Albedo::Grid(ag) } =
                    &mut scene.shapes[shape].material
                {
                    let mut flat: Vec<f64> = ag
                        .values()
                        .iter()
                        .flat_map(|v| [v.x, v.y, v.z])
                        .collect();
                    adam_step(&mut flat, gbuf, st, cfg)?;
                    ag.update_values(|vals| {
                        for (i, v) in vals.iter_mut().enumerate() {
                            for ch in 0..3 {
                                v[ch] = flat[3 * i + ch].clamp(0.0, 1.0);
                            }
                        }
                    });
                }
            }
            result.loss_history.push(LossRow { iter: iter_global, level, loss });
            iter_global += 1;
        }
        checkpoint(level, scene);
        if level + 1 < cfg.levels {
            let up = {
                let grid = scene.shapes[shape].field.as_grid().unwrap();
                upscale_grid(grid, cfg.upscale_factor, cfg.max_res)?
            };
            scene.shapes[shape].field = SdfField::Grid(up);
            if let Material::Diffuse { albedo } = &mut scene.shapes[shape].material {
                if let Albedo::Grid(g) = albedo {
                    *albedo = Albedo::Grid(upscale_rgb(g, cfg.upscale_factor, cfg.max_res)?);
                }
            }
            if cfg.halve_eps_on_upscale {
                scene.settings.eps *= 0.5;
            }
        }
    }
    Ok(())
}

/// Initial guess for grid reconstruction: a sphere of radius 0.35 centered
/// in the unit cube.
pub fn initial_sphere_grid(n: usize) -> GridSdf {
    let dims = GridDims::new(
        n,
        n,
        n,
        crate::math::vec3(-0.5, -0.5, -0.5),
        crate::math::vec3(0.5, 0.5, 0.5),
    )
    .unwrap();
    GridSdf::from_fn(dims, |x| x.norm() - 0.35)
}
