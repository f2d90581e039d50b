//! Trilinear voxel grids for SDF values and RGB fields.

use crate::math::{vec3, Mat3, Vec3};
use crate::{Error, Result};

/// Node-centered grid layout: `n*` nodes per axis spanning the bounding
/// box inclusively, x-fastest linear ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub bmin: Vec3,
    pub bmax: Vec3,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize, bmin: Vec3, bmax: Vec3) -> Result<GridDims> {
        if nx < 2 || ny < 2 || nz < 2 {
            return Err(Error::Format("grid needs at least 2 nodes per axis".into()));
        }
        if !(bmin.x < bmax.x && bmin.y < bmax.y && bmin.z < bmax.z) {
            return Err(Error::Format("grid bounding box is empty".into()));
        }
        Ok(GridDims { nx, ny, nz, bmin, bmax })
    }

    pub fn cube(n: usize) -> GridDims {
        GridDims::new(n, n, n, Vec3::ZERO, Vec3::ONE).unwrap()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec3 {
        vec3(
            (self.bmax.x - self.bmin.x) / (self.nx - 1) as f64,
            (self.bmax.y - self.bmin.y) / (self.ny - 1) as f64,
            (self.bmax.z - self.bmin.z) / (self.nz - 1) as f64,
        )
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    pub fn node_pos(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.spacing();
        self.bmin + vec3(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z)
    }

    pub fn contains(&self, x: Vec3) -> bool {
        x.x >= self.bmin.x
            && x.y >= self.bmin.y
            && x.z >= self.bmin.z
            && x.x <= self.bmax.x
            && x.y <= self.bmax.y
            && x.z <= self.bmax.z
    }

    /// Distance from an outside point to the bounding box, and its gradient.
    pub fn box_distance(&self, x: Vec3) -> (f64, Vec3) {
        let q = (self.bmin - x).max(x - self.bmax).max(Vec3::ZERO);
        let d = q.norm();
        if d == 0.0 {
            return (0.0, Vec3::ZERO);
        }
        let sign = vec3(
            if x.x > self.bmax.x { 1.0 } else { -1.0 },
            if x.y > self.bmax.y { 1.0 } else { -1.0 },
            if x.z > self.bmax.z { 1.0 } else { -1.0 },
        );
        (d, vec3(sign.x * q.x, sign.y * q.y, sign.z * q.z) / d)
    }

    /// Trilinear interpolation data for an in-box point: the 8 cell corner
    /// indices, their weights, and the spatial gradients of the weights.
    pub fn cell(&self, x: Vec3) -> Option<CellInterp> {
        if !self.contains(x) {
            return None;
        }
        let h = self.spacing();
        let u = vec3(
            (x.x - self.bmin.x) / h.x,
            (x.y - self.bmin.y) / h.y,
            (x.z - self.bmin.z) / h.z,
        );
        let ci = (u.x.floor() as usize).min(self.nx - 2);
        let cj = (u.y.floor() as usize).min(self.ny - 2);
        let ck = (u.z.floor() as usize).min(self.nz - 2);
        let f = vec3(u.x - ci as f64, u.y - cj as f64, u.z - ck as f64);
        let wx = [1.0 - f.x, f.x];
        let wy = [1.0 - f.y, f.y];
        let wz = [1.0 - f.z, f.z];
        // d(weight)/d(coordinate), including grid spacing.
        let dwx = [-1.0 / h.x, 1.0 / h.x];
        let dwy = [-1.0 / h.y, 1.0 / h.y];
        let dwz = [-1.0 / h.z, 1.0 / h.z];
        let mut out = CellInterp {
            corners: [0; 8],
            weights: [0.0; 8],
            wgrads: [Vec3::ZERO; 8],
            cell: (ci, cj, ck),
            frac: f,
        };
        let mut n = 0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    out.corners[n] = self.index(ci + di, cj + dj, ck + dk);
                    out.weights[n] = wx[di] * wy[dj] * wz[dk];
                    out.wgrads[n] = vec3(
                        dwx[di] * wy[dj] * wz[dk],
                        wx[di] * dwy[dj] * wz[dk],
                        wx[di] * wy[dj] * dwz[dk],
                    );
                    n += 1;
                }
            }
        }
        Some(out)
    }
}

#[derive(Debug, Clone)]
pub struct CellInterp {
    pub corners: [usize; 8],
    pub weights: [f64; 8],
    pub wgrads: [Vec3; 8],
    pub cell: (usize, usize, usize),
    pub frac: Vec3,
}

#[derive(Debug, Clone)]
pub struct GridSdf {
    pub dims: GridDims,
    values: Vec<f64>,
    /// min(φ) over the boundary shell, clamped at 0. Restricted to a box
    /// face the interpolant is bilinear, so its minimum sits on a node and
    /// this is the exact minimum over the continuous box surface.
    shell_floor: f64,
}

/// Smallest node value on the outer shell, clamped at 0.
fn shell_floor(dims: &GridDims, values: &[f64]) -> f64 {
    let mut min = f64::INFINITY;
    for k in 0..dims.nz {
        for j in 0..dims.ny {
            for i in 0..dims.nx {
                let on_shell = i == 0
                    || j == 0
                    || k == 0
                    || i == dims.nx - 1
                    || j == dims.ny - 1
                    || k == dims.nz - 1;
                if on_shell {
                    min = min.min(values[dims.index(i, j, k)]);
                }
            }
        }
    }
    min.max(0.0)
}

impl GridSdf {
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<GridSdf> {
        if values.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "grid payload has {} values, dims need {}",
                values.len(),
                dims.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("grid contains non-finite values".into()));
        }
        let floor = shell_floor(&dims, &values);
        Ok(GridSdf { dims, values, shell_floor: floor })
    }

    pub fn from_fn(dims: GridDims, f: impl Fn(Vec3) -> f64) -> GridSdf {
        let mut values = Vec::with_capacity(dims.len());
        for k in 0..dims.nz {
            for j in 0..dims.ny {
                for i in 0..dims.nx {
                    values.push(f(dims.node_pos(i, j, k)));
                }
            }
        }
        GridSdf::new(dims, values).expect("from_fn produced invalid grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutate node values, then re-derive cached data. Single-writer only;
    /// the renderer never calls this mid-pass.
    pub fn update_values(&mut self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.values);
        self.shell_floor = shell_floor(&self.dims, &self.values);
    }

    pub fn eval(&self, x: Vec3) -> f64 {
        match self.dims.cell(x) {
            Some(c) => c
                .corners
                .iter()
                .zip(c.weights.iter())
                .map(|(&i, &w)| self.values[i] * w)
                .sum(),
            // Any zero crossing lives inside the box, at least shell_floor
            // past its surface: a ray reaching a zero point z crosses the
            // surface at some y, and |x-z| = |x-y| + |y-z| ≥ d_box + φ(y).
            // Without the floor, eval would vanish on the box skin and
            // sphere tracing would hit a phantom surface there.
            None => self.dims.box_distance(x).0 + self.shell_floor,
        }
    }

    /// Exact gradient of the trilinear interpolant (piecewise per cell).
    pub fn grad(&self, x: Vec3) -> Vec3 {
        match self.dims.cell(x) {
            Some(c) => {
                let mut g = Vec3::ZERO;
                for n in 0..8 {
                    g += c.wgrads[n] * self.values[c.corners[n]];
                }
                g
            }
            None => self.dims.box_distance(x).1,
        }
    }

    /// Second derivative of the interpolant: zero diagonal, bilinear mixed
    /// terms; zero outside the box.
    pub fn hessian(&self, x: Vec3) -> Mat3 {
        let c = match self.dims.cell(x) {
            Some(c) => c,
            None => return Mat3::ZERO,
        };
        let h = self.dims.spacing();
        let f = c.frac;
        let wx = [1.0 - f.x, f.x];
        let wy = [1.0 - f.y, f.y];
        let wz = [1.0 - f.z, f.z];
        let dw = [-1.0, 1.0];
        let mut hxy = 0.0;
        let mut hxz = 0.0;
        let mut hyz = 0.0;
        let mut n = 0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let v = self.values[c.corners[n]];
                    hxy += v * dw[di] * dw[dj] * wz[dk];
                    hxz += v * dw[di] * wy[dj] * dw[dk];
                    hyz += v * wx[di] * dw[dj] * dw[dk];
                    n += 1;
                }
            }
        }
        hxy /= h.x * h.y;
        hxz /= h.x * h.z;
        hyz /= h.y * h.z;
        Mat3 {
            rows: [
                vec3(0.0, hxy, hxz),
                vec3(hxy, 0.0, hyz),
                vec3(hxz, hyz, 0.0),
            ],
        }
    }

    /// Interpolation weight of one voxel at x (dφ/dθ_v), zero out of box.
    pub fn voxel_weight(&self, x: Vec3, voxel: usize) -> f64 {
        match self.dims.cell(x) {
            Some(c) => c
                .corners
                .iter()
                .position(|&i| i == voxel)
                .map_or(0.0, |n| c.weights[n]),
            None => 0.0,
        }
    }

    /// Spatial gradient of one voxel's weight at x.
    pub fn voxel_weight_grad(&self, x: Vec3, voxel: usize) -> Vec3 {
        match self.dims.cell(x) {
            Some(c) => c
                .corners
                .iter()
                .position(|&i| i == voxel)
                .map_or(Vec3::ZERO, |n| c.wgrads[n]),
            None => Vec3::ZERO,
        }
    }

    /// Nonzero (voxel, weight) pairs at x; at most 8.
    pub fn voxel_weights(&self, x: Vec3) -> Vec<(usize, f64)> {
        match self.dims.cell(x) {
            Some(c) => c
                .corners
                .iter()
                .zip(c.weights.iter())
                .filter(|(_, &w)| w != 0.0)
                .map(|(&i, &w)| (i, w))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn has_sign_change(&self) -> bool {
        let mut pos = false;
        let mut neg = false;
        for &v in &self.values {
            pos |= v > 0.0;
            neg |= v < 0.0;
            if pos && neg {
                return true;
            }
        }
        // A node exactly at zero next to a positive node also defines a
        // surface; treat exact zeros as an interface only with negatives.
        false
    }
}

/// RGB voxel grid (albedo fields), trilinear like the SDF grid but clamped
/// to the nearest in-box point outside the bounding box.
#[derive(Debug, Clone)]
pub struct GridRgb {
    pub dims: GridDims,
    values: Vec<Vec3>,
}

impl GridRgb {
    pub fn new(dims: GridDims, values: Vec<Vec3>) -> Result<GridRgb> {
        if values.len() != dims.len() {
            return Err(Error::DimensionMismatch("rgb grid payload size".into()));
        }
        Ok(GridRgb { dims, values })
    }

    pub fn constant(dims: GridDims, c: Vec3) -> GridRgb {
        let n = dims.len();
        GridRgb { dims, values: vec![c; n] }
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn update_values(&mut self, f: impl FnOnce(&mut [Vec3])) {
        f(&mut self.values);
    }

    fn clamp_in(&self, x: Vec3) -> Vec3 {
        vec3(
            x.x.clamp(self.dims.bmin.x, self.dims.bmax.x),
            x.y.clamp(self.dims.bmin.y, self.dims.bmax.y),
            x.z.clamp(self.dims.bmin.z, self.dims.bmax.z),
        )
    }

    pub fn eval(&self, x: Vec3) -> Vec3 {
        let c = self.dims.cell(self.clamp_in(x)).expect("clamped point in box");
        let mut out = Vec3::ZERO;
        for n in 0..8 {
            out += self.values[c.corners[n]] * c.weights[n];
        }
        out
    }

    /// Value plus spatial Jacobian rows (d color_ch / d x) per channel.
    pub fn eval_with_jacobian(&self, x: Vec3) -> (Vec3, [Vec3; 3]) {
        let inside = self.dims.contains(x);
        let c = self.dims.cell(self.clamp_in(x)).expect("clamped point in box");
        let mut val = Vec3::ZERO;
        let mut jac = [Vec3::ZERO; 3];
        for n in 0..8 {
            let v = self.values[c.corners[n]];
            val += v * c.weights[n];
            if inside {
                for ch in 0..3 {
                    jac[ch] += c.wgrads[n] * v[ch];
                }
            }
        }
        (val, jac)
    }

    pub fn voxel_weight(&self, x: Vec3, voxel: usize) -> f64 {
        match self.dims.cell(self.clamp_in(x)) {
            Some(c) => c
                .corners
                .iter()
                .position(|&i| i == voxel)
                .map_or(0.0, |n| c.weights[n]),
            None => 0.0,
        }
    }

    pub fn voxel_weights(&self, x: Vec3) -> Vec<(usize, f64)> {
        match self.dims.cell(self.clamp_in(x)) {
            Some(c) => c
                .corners
                .iter()
                .zip(c.weights.iter())
                .filter(|(_, &w)| w != 0.0)
                .map(|(&i, &w)| (i, w))
                .collect(),
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_grid(n: usize) -> GridSdf {
        // φ = x sampled on the unit cube.
        GridSdf::from_fn(GridDims::cube(n), |p| p.x)
    }

    #[test]
    fn constant_grid_everywhere() {
        let g = GridSdf::from_fn(GridDims::cube(8), |_| 0.5);
        assert!((g.eval(vec3(0.3, 0.7, 0.11)) - 0.5).abs() < 1e-12);
        assert!((g.eval(vec3(0.999, 0.001, 0.5)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn corner_values_exact() {
        let g = GridSdf::from_fn(GridDims::cube(5), |p| p.x * 2.0 + p.y - p.z * 0.5);
        for k in 0..5 {
            for j in 0..5 {
                for i in 0..5 {
                    let p = g.dims.node_pos(i, j, k);
                    assert_eq!(g.eval(p), g.values()[g.dims.index(i, j, k)]);
                }
            }
        }
    }

    #[test]
    fn trilinear_reproduces_linear_ramp() {
        let g = ramp_grid(8);
        for p in [vec3(0.31, 0.42, 0.87), vec3(0.02, 0.99, 0.5)] {
            assert!((g.eval(p) - p.x).abs() < 1e-12);
            assert!((g.grad(p) - vec3(1.0, 0.0, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn out_of_box_is_conservative() {
        let g = GridSdf::from_fn(GridDims::cube(8), |p| (p - Vec3::splat(0.5)).norm() - 0.3);
        // The sphere sits strictly inside the box, so outside queries must
        // stay well clear of zero (no phantom surface on the box skin) and
        // within interpolation error of the true distance.
        let x = vec3(2.0, 0.5, 0.5);
        let v = g.eval(x);
        let true_dist = 1.5 - 0.3;
        assert!(v > 1.1, "outside eval should clear the box skin, got {v}");
        assert!(v <= true_dist + 0.02, "v={v} overshoots past interpolation error");
        // Approaching the skin the floor keeps eval positive.
        let skin = g.eval(vec3(1.0 + 1e-9, 0.5, 0.5));
        assert!(skin > 0.15, "eval at the box skin = {skin}");
        // Gradient points away from the box.
        assert!((g.grad(x) - vec3(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn voxel_weights_at_corner_and_center() {
        let g = ramp_grid(3);
        // Exact node: one weight of 1.
        let w = g.voxel_weights(g.dims.node_pos(1, 1, 1));
        assert_eq!(w.len(), 1);
        assert_eq!(w[0], (g.dims.index(1, 1, 1), 1.0));
        // Cell center: 8 weights of 1/8 summing to 1.
        let c = g.dims.node_pos(0, 0, 0) + g.dims.spacing() * 0.5;
        let w = g.voxel_weights(c);
        assert_eq!(w.len(), 8);
        for (_, wi) in &w {
            assert!((wi - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_nonneg_sum_to_one() {
        let g = ramp_grid(6);
        let mut rng = 777u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let x = vec3(next(), next(), next());
            let w = g.voxel_weights(x);
            let sum: f64 = w.iter().map(|(_, wi)| wi).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|(_, wi)| *wi >= 0.0));
        }
    }

    #[test]
    fn grid_gradient_matches_fd_inside_cells() {
        let g = GridSdf::from_fn(GridDims::cube(9), |p| {
            (p - Vec3::splat(0.5)).norm() - 0.3
        });
        let h = 1e-6;
        let mut rng = 4242u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1);
            0.05 + 0.9 * ((rng >> 11) as f64 / (1u64 << 53) as f64)
        };
        let mut checked = 0;
        while checked < 300 {
            let x = vec3(next(), next(), next());
            // Stay off cell faces where the interpolant gradient jumps.
            let hsp = g.dims.spacing();
            let u = (x - g.dims.bmin).mul_elem(vec3(1.0 / hsp.x, 1.0 / hsp.y, 1.0 / hsp.z));
            let f = vec3(u.x.fract(), u.y.fract(), u.z.fract());
            if f.x < 0.01 || f.x > 0.99 || f.y < 0.01 || f.y > 0.99 || f.z < 0.01 || f.z > 0.99 {
                continue;
            }
            let mut fd = Vec3::ZERO;
            for a in 0..3 {
                let mut dx = Vec3::ZERO;
                dx[a] = h;
                fd[a] = (g.eval(x + dx) - g.eval(x - dx)) / (2.0 * h);
            }
            let gr = g.grad(x);
            assert!((fd - gr).norm() < 1e-5, "at {x:?}: fd {fd:?} vs {gr:?}");
            checked += 1;
        }
    }

    #[test]
    fn hessian_matches_fd_of_gradient() {
        let g = GridSdf::from_fn(GridDims::cube(7), |p| {
            p.x * p.y + 0.5 * p.y * p.z - p.x * p.z + p.x
        });
        let x = vec3(0.37, 0.55, 0.21);
        let h = 1e-6;
        let hess = g.hessian(x);
        for a in 0..3 {
            let mut dx = Vec3::ZERO;
            dx[a] = h;
            let fd = (g.grad(x + dx) - g.grad(x - dx)) / (2.0 * h);
            assert!((fd - hess.rows[a]).norm() < 1e-5);
        }
    }

    #[test]
    fn rgb_grid_jacobian_matches_fd() {
        let dims = GridDims::cube(5);
        let g = GridRgb::new(
            dims,
            (0..dims.len())
                .map(|i| {
                    let (a, b, c) = dims.coords(i);
                    vec3(a as f64 * 0.1, b as f64 * 0.05, c as f64 * 0.02)
                })
                .collect(),
        )
        .unwrap();
        let x = vec3(0.3, 0.6, 0.4);
        let (_, jac) = g.eval_with_jacobian(x);
        let h = 1e-6;
        for a in 0..3 {
            let mut dx = Vec3::ZERO;
            dx[a] = h;
            let fd = (g.eval(x + dx) - g.eval(x - dx)) / (2.0 * h);
            for ch in 0..3 {
                assert!((fd[ch] - jac[ch][a]).abs() < 1e-6);
            }
        }
    }
}
