//! Box-reconstruction dry run: 16³ -> 32³, 4 views at 64².
use rsdf_core::math::{vec3, Vec3};
use rsdf_core::opt::{initial_sphere_grid, optimize, OptTarget, OptimConfig, ViewSet};
use rsdf_core::scene::*;
use rsdf_core::sdf::{AnalyticSdf, SdfField};
use rsdf_core::shade::render;

fn camera(angle: f64, res: usize) -> Camera {
    let r = 1.7;
    Camera {
        position: vec3(r * angle.cos(), r * angle.sin(), 0.9),
        look_at: Vec3::ZERO,
        up: vec3(0.0, 0.0, 1.0),
        fov_y: 35.0,
        width: res,
        height: res,
    }
}

fn base_scene(field: SdfField, spp: usize) -> Scene {
    Scene {
        shapes: vec![Shape {
            name: "subject".into(),
            field,
            material: Material::Diffuse { albedo: Albedo::Constant(Vec3::splat(0.6)) },
        }],
        lights: vec![RectLight {
            corner: vec3(-0.5, -0.5, 2.2),
            edge1: vec3(0.0, 1.0, 0.0),
            edge2: vec3(1.0, 0.0, 0.0),
            radiance: Vec3::splat(6.0),
        }],
        env: Some(EnvLight::Constant(Vec3::splat(0.25))),
        camera: camera(0.0, 64),
        settings: Settings { spp, eps: 0.01, ..Settings::default() },
    }
}

fn main() {
    let res = 64;
    let spp: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let iters: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(150);
    let t0 = std::time::Instant::now();

    // Ground-truth views of an axis-aligned box.
    let truth = base_scene(
        SdfField::Analytic(AnalyticSdf::box_at(Vec3::ZERO, vec3(0.22, 0.22, 0.22))),
        256,
    );
    let mut views = Vec::new();
    for k in 0..4 {
        let cam = camera(k as f64 * std::f64::consts::FRAC_PI_2 + 0.4, res);
        let mut sc = truth.clone();
        sc.camera = cam.clone();
        let (img, _) = render(&sc);
        views.push((cam, img));
    }
    eprintln!("targets done {:?}", t0.elapsed());

    let mut sc = base_scene(SdfField::Grid(initial_sphere_grid(16)), spp);
    let cfg = OptimConfig {
        iters_per_level: iters,
        levels: 2,
        lr: 5e-3,
        batch_size: 4,
        spp,
        eps: 0.01,
        halve_eps_on_upscale: true,
        ..OptimConfig::default()
    };
    let views = ViewSet::new(views).unwrap();
    let result = optimize(&mut sc, &views, OptTarget::Grid { shape: 0 }, &cfg, |_, _| {}).unwrap();
    eprintln!("optimize done {:?}", t0.elapsed());

    // Final mean L1 across the four views at higher spp.
    let mut final_l1 = 0.0;
    for (cam, reference) in &views.views {
        let mut s2 = sc.clone();
        s2.camera = cam.clone();
        s2.settings.spp = 64;
        let (img, _) = render(&s2);
        let (l, _) = rsdf_core::opt::l1_loss(&img, reference).unwrap();
        final_l1 += l / views.views.len() as f64;
    }
    println!("final mean L1 = {final_l1:.5} (need < 0.02)");

    // Monotone over 20-iteration windows.
    let losses: Vec<f64> = result.loss_history.iter().map(|r| r.loss).collect();
    let windows: Vec<f64> = losses.chunks(20).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let mono = windows.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    println!("windows: {windows:?}");
    println!("monotone={mono} total time {:?}", t0.elapsed());
}
