//! Mirror-bounce derivative dry run: diffuse sphere seen via a mirror,
//! y-translation forward derivative vs central FD at depth 3.
use rsdf_core::grad::forward_derivative_image;
use rsdf_core::math::{vec3, Vec3};
use rsdf_core::scene::*;
use rsdf_core::sdf::{AnalyticSdf, SdfField};
use rsdf_core::shade::render;

fn scene(res: usize, spp: usize, seed: u64) -> Scene {
    let refl: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(0.9);
    Scene {
        shapes: vec![
            // Mirror wall; the camera sees the ball and its shadow only in
            // the reflection.
            Shape {
                name: "mirror".into(),
                field: SdfField::Analytic(AnalyticSdf::plane(vec3(1.0, 0.0, 0.0), -2.0)),
                material: Material::Mirror { reflectance: Vec3::splat(refl) },
            },
            Shape {
                name: "ground".into(),
                field: SdfField::Analytic(AnalyticSdf::plane(vec3(0.0, 0.0, 1.0), 0.0)),
                material: Material::Diffuse { albedo: Albedo::Constant(Vec3::splat(0.8)) },
            },
            Shape {
                name: "ball".into(),
                field: SdfField::Analytic(AnalyticSdf::sphere(vec3(0.0, 0.0, 1.0), 0.3)),
                material: Material::Diffuse { albedo: Albedo::Constant(Vec3::splat(0.5)) },
            },
        ],
        lights: vec![RectLight {
            corner: vec3(-0.03, -0.03, 2.5),
            edge1: vec3(0.0, 0.06, 0.0),
            edge2: vec3(0.06, 0.0, 0.0),
            radiance: Vec3::splat(1300.0),
        }],
        env: None,
        camera: Camera {
            position: vec3(2.5, 0.0, 0.9),
            look_at: vec3(-2.0, 0.0, 0.55),
            up: vec3(0.0, 0.0, 1.0),
            fov_y: 14.0,
            width: res,
            height: res,
        },
        settings: Settings {
            spp,
            max_depth: 3,
            eps: std::env::var("EPS").ok().and_then(|v| v.parse().ok()).unwrap_or(0.005),
            seed,
            ..Settings::default()
        },
    }
}

fn shift(s: &Scene, idx: usize, d: f64) -> Scene {
    let mut s2 = s.clone();
    if let SdfField::Analytic(a) = &mut s2.shapes[idx].field {
        a.translation.y += d;
    }
    s2
}

fn rel_l1(a: &rsdf_core::image::Image, b: &rsdf_core::image::Image, floor: f64) -> f64 {
    let (mut nu, mut de) = (0.0, 0.0);
    for (x, y) in a.pixels().iter().zip(b.pixels()) {
        for c in 0..3 {
            if y[c].abs() > floor {
                nu += (x[c] - y[c]).abs();
                de += y[c].abs();
            }
        }
    }
    nu / de
}

fn max_abs(a: &rsdf_core::image::Image) -> f64 {
    a.pixels().iter().flat_map(|p| [p.x.abs(), p.y.abs(), p.z.abs()]).fold(0.0f64, f64::max)
}

fn main() {
    let virt = std::env::var("VIRT").is_ok();
    let noise = std::env::var("NOISE").is_ok();
    let res: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let spp: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1024);
    let fd_spp: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(16384);
    let h: f64 = std::env::var("H").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-4);
    let t0 = std::time::Instant::now();

    let mut sc = scene(res, spp, 3);
    if virt {
        // Equivalent no-mirror view: camera reflected across the mirror
        // plane x = -2; the image should match the mirror view column-
        // flipped and divided by the 0.9 reflectance.
        sc.shapes.remove(0);
        sc.camera.position = vec3(-6.5, 0.0, 0.9);
        sc.camera.look_at = vec3(-2.0, 0.0, 0.55);
        sc.settings.max_depth = 2;
    }
    let shape_idx = if virt { 1 } else { 2 };
    let param = BoundParam::translation(&sc, "ball", vec3(0.0, 1.0, 0.0)).unwrap();
    let (fwd, _) = forward_derivative_image(&sc, &param);
    eprintln!("fwd {:?}", t0.elapsed());
    if noise {
        let mut sc2 = sc.clone();
        sc2.settings.seed = 11;
        let (fwd2, _) = forward_derivative_image(&sc2, &param);
        eprintln!("fwd2 {:?}", t0.elapsed());
        let fd_a = {
            let mut s = sc.clone();
            s.settings.spp = fd_spp;
            let (ip, _) = render(&shift(&s, shape_idx, h));
            let (im, _) = render(&shift(&s, shape_idx, -h));
            let mut out = rsdf_core::image::Image::new(res, res);
            for (o, (p, m)) in out.pixels_mut().iter_mut().zip(ip.pixels().iter().zip(im.pixels())) {
                *o = (*p - *m) * (1.0 / (2.0 * h));
            }
            out
        };
        eprintln!("fd_a {:?}", t0.elapsed());
        let fd_b = {
            let mut s = sc.clone();
            s.settings.spp = fd_spp;
            s.settings.seed = 11;
            let (ip, _) = render(&shift(&s, shape_idx, h));
            let (im, _) = render(&shift(&s, shape_idx, -h));
            let mut out = rsdf_core::image::Image::new(res, res);
            for (o, (p, m)) in out.pixels_mut().iter_mut().zip(ip.pixels().iter().zip(im.pixels())) {
                *o = (*p - *m) * (1.0 / (2.0 * h));
            }
            out
        };
        eprintln!("fd_b {:?}", t0.elapsed());
        let fl = 0.10 * max_abs(&fd_a);
        println!("fwd self-noise  = {:.4}", rel_l1(&fwd2, &fwd, fl));
        println!("fd self-noise   = {:.4}", rel_l1(&fd_b, &fd_a, fl));
        println!("fwd vs fd_a     = {:.4}", rel_l1(&fwd, &fd_a, fl));
        println!("fwd vs fd_b     = {:.4}", rel_l1(&fwd, &fd_b, fl));
        let mut avg = rsdf_core::image::Image::new(res, res);
        for ((o, a), b) in avg.pixels_mut().iter_mut().zip(fd_a.pixels()).zip(fd_b.pixels()) {
            *o = (*a + *b) * 0.5;
        }
        println!("fwd vs fd_avg   = {:.4}", rel_l1(&fwd, &avg, 0.10 * max_abs(&avg)));
        return;
    }
    let mut fds = sc.clone();
    fds.settings.spp = fd_spp;
    let (ip, _) = render(&shift(&fds, shape_idx, h));
    let (im, _) = render(&shift(&fds, shape_idx, -h));
    eprintln!("fd {:?}", t0.elapsed());

    let mut fdmax: f64 = 0.0;
    for y in 0..res {
        for x in 0..res {
            let fd = (ip.pixel(x, y) - im.pixel(x, y)) * (1.0 / (2.0 * h));
            for c in 0..3 {
                fdmax = fdmax.max(fd[c].abs());
            }
        }
    }
    for frac in [0.05, 0.10] {
        let fl = frac * fdmax;
        let (mut nu, mut de) = (0.0, 0.0);
        let mut nn = 0;
        for y in 0..res {
            for x in 0..res {
                let fd = (ip.pixel(x, y) - im.pixel(x, y)) * (1.0 / (2.0 * h));
                let fw = fwd.pixel(x, y);
                for c in 0..3 {
                    if fd[c].abs() > fl {
                        nu += (fw[c] - fd[c]).abs();
                        de += fd[c].abs();
                        nn += 1;
                    }
                }
            }
        }
        println!("floor={frac:.2} used={nn} relL1={:.4}", nu / de);
    }
    println!("fdmax={fdmax:.3} time={:?}", t0.elapsed());
    let tag = if virt { "virt" } else { "mirr" };
    let mut fdimg = rsdf_core::image::Image::new(res, res);
    for y in 0..res {
        for x in 0..res {
            *fdimg.pixel_mut(x, y) = (ip.pixel(x, y) - im.pixel(x, y)) * (1.0 / (2.0 * h));
        }
    }
    rsdf_core::image::write_pfm(std::path::Path::new(&format!("/tmp/{tag}_fwd.pfm")), &fwd).unwrap();
    rsdf_core::image::write_pfm(std::path::Path::new(&format!("/tmp/{tag}_fd.pfm")), &fdimg).unwrap();
    rsdf_core::image::write_pfm(std::path::Path::new(&format!("/tmp/{tag}_primal.pfm")), &ip).unwrap();
}
