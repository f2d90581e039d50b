//! Deterministic RNG streams and sampling routines.
//!
//! Every pixel sample owns an independent ChaCha8 stream keyed by
//! (seed, pixel index, sample index), so images are bit-identical for any
//! worker count or scheduling order.

use crate::dual::{Dual, Dv3};
use crate::math::{vec3, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub type SampleRng = ChaCha8Rng;

/// RNG for pixel sample `sample_idx` of pixel `pixel_idx`.
pub fn sample_rng(seed: u64, pixel_idx: u64, sample_idx: u64) -> SampleRng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&pixel_idx.to_le_bytes());
    key[16..24].copy_from_slice(&sample_idx.to_le_bytes());
    key[24..32].copy_from_slice(&0x5df0_77da_u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Auxiliary stream (e.g. view-batch shuffling) separated from pixel streams.
pub fn aux_rng(seed: u64, tag: u64) -> SampleRng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[24..32].copy_from_slice(&0x0a_u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn uniform_sphere(rng: &mut impl Rng) -> Vec3 {
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    let z = 1.0 - 2.0 * u;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = 2.0 * PI * v;
    vec3(r * phi.cos(), r * phi.sin(), z)
}

pub const UNIFORM_SPHERE_PDF: f64 = 1.0 / (4.0 * PI);

/// Cosine-weighted hemisphere direction in local coordinates (+z up),
/// with pdf = z/π.
pub fn cosine_hemisphere(rng: &mut impl Rng) -> Vec3 {
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    let r = u.sqrt();
    let phi = 2.0 * PI * v;
    let x = r * phi.cos();
    let y = r * phi.sin();
    vec3(x, y, (1.0 - u).max(0.0).sqrt())
}

/// Orthonormal basis around a unit normal (branchless Duff et al. style);
/// written with duals so frame rotation follows normal perturbations.
pub fn onb_dual(n: Dv3) -> (Dv3, Dv3) {
    let sign = if n.z.v >= 0.0 { 1.0 } else { -1.0 };
    let a = (Dual::constant(sign) + n.z).recip() * -1.0;
    let b = n.x * n.y * a;
    let t = Dv3 {
        x: Dual::constant(1.0) + n.x * n.x * a * sign,
        y: b * sign,
        z: -n.x * sign,
    };
    let bt = Dv3 {
        x: b,
        y: Dual::constant(sign) + n.y * n.y * a,
        z: -n.y,
    };
    (t, bt)
}

/// Transform a fixed local direction into the dual frame of `n`.
pub fn local_to_world_dual(n: Dv3, local: Vec3) -> Dv3 {
    let (t, b) = onb_dual(n);
    t.scale(Dual::constant(local.x)) + b.scale(Dual::constant(local.y)) + n.scale(Dual::constant(local.z))
}

/// Primal-only frame transform (zero derivative path).
pub fn local_to_world(n: Vec3, local: Vec3) -> Vec3 {
    local_to_world_dual(Dv3::constant(n), local).value()
}

/// Balance-heuristic MIS weight for strategy a against strategy b.
pub fn balance_weight(pdf_a: f64, pdf_b: f64) -> f64 {
    if pdf_a <= 0.0 {
        0.0
    } else {
        pdf_a / (pdf_a + pdf_b)
    }
}

/// Dual variant: the pdfs may carry derivatives (e.g. cosine pdf with a
/// moving normal).
pub fn balance_weight_dual(pdf_a: Dual, pdf_b: Dual) -> Dual {
    if pdf_a.v <= 0.0 {
        Dual::ZERO
    } else {
        pdf_a / (pdf_a + pdf_b)
    }
}
