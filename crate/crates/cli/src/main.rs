//! `rsdf` — render, differentiate and optimize SDF scenes.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rsdf_core::grad::forward_derivative_image;
use rsdf_core::image::{psnr, read_pfm, write_pfm, Image};
use rsdf_core::math::{vec3, Vec3};
use rsdf_core::opt::{optimize, OptTarget, OptimResult};
use rsdf_core::scene::{BoundParam, Scene};
use rsdf_core::sceneio::{load_optimize_spec, load_scene, OptMode};
use rsdf_core::sdf::{io::write_grid, SdfField};
use rsdf_core::shade::render;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "rsdf", about = "Differentiable SDF renderer", version)]
struct Cli {
    /// Worker threads (overrides RSDF_THREADS; default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct RenderOverrides {
    /// Samples per pixel.
    #[arg(long)]
    spp: Option<usize>,
    /// Maximum path depth.
    #[arg(long)]
    max_depth: Option<u32>,
    /// Silhouette relaxation threshold ε.
    #[arg(long)]
    eps: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Square output resolution (overrides the scene camera).
    #[arg(long)]
    res: Option<usize>,
}

impl RenderOverrides {
    fn apply(&self, scene: &mut Scene) -> Result<()> {
        if let Some(spp) = self.spp {
            scene.settings.spp = spp;
        }
        if let Some(d) = self.max_depth {
            scene.settings.max_depth = d;
        }
        if let Some(eps) = self.eps {
            if eps <= 0.0 {
                bail!("--eps must be > 0");
            }
            scene.settings.eps = eps;
        }
        if let Some(seed) = self.seed {
            scene.settings.seed = seed;
        }
        if let Some(res) = self.res {
            scene.camera.width = res;
            scene.camera.height = res;
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a scene to a PFM image.
    Render {
        scene: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        overrides: RenderOverrides,
    },
    /// Forward-mode derivative image for one scene parameter.
    Fwdgrad {
        scene: PathBuf,
        /// Parameter: shape=NAME,axis=X|Y|Z (translation).
        #[arg(long)]
        param: String,
        out: PathBuf,
        #[command(flatten)]
        overrides: RenderOverrides,
    },
    /// Compare the forward derivative against central finite differences.
    Fdcheck {
        scene: PathBuf,
        #[arg(long)]
        param: String,
        /// FD step size.
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        /// Optional output prefix for PFM dumps of both images.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[command(flatten)]
        overrides: RenderOverrides,
    },
    /// Run an optimization config.
    Optimize { config: PathBuf },
    /// PSNR / L1 between two PFM images.
    Metrics { a: PathBuf, b: PathBuf },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("RSDF_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    match cli.cmd {
        Cmd::Render { scene, out, overrides } => cmd_render(&scene, &out, &overrides),
        Cmd::Fwdgrad { scene, param, out, overrides } => {
            cmd_fwdgrad(&scene, &param, &out, &overrides)
        }
        Cmd::Fdcheck { scene, param, h, dump, overrides } => {
            cmd_fdcheck(&scene, &param, h, dump.as_deref(), &overrides)
        }
        Cmd::Optimize { config } => cmd_optimize(&config),
        Cmd::Metrics { a, b } => cmd_metrics(&a, &b),
    }
}

fn cmd_render(scene_path: &Path, out: &Path, ov: &RenderOverrides) -> Result<()> {
    let mut scene = load_scene(scene_path)?;
    ov.apply(&mut scene)?;
    let (img, diag) = render(&scene);
    write_pfm(out, &img)?;
    print!("{}", diag.report());
    Ok(())
}

/// Parse "shape=NAME,axis=X" into a bound translation parameter.
fn parse_param(scene: &Scene, spec: &str) -> Result<BoundParam> {
    let mut shape = None;
    let mut axis = None;
    for part in spec.split(',') {
        let (k, v) = part
            .split_once('=')
            .with_context(|| format!("bad param fragment '{part}'"))?;
        match k.trim() {
            "shape" => shape = Some(v.trim().to_string()),
            "axis" => {
                axis = Some(match v.trim().to_ascii_lowercase().as_str() {
                    "x" => vec3(1.0, 0.0, 0.0),
                    "y" => vec3(0.0, 1.0, 0.0),
                    "z" => vec3(0.0, 0.0, 1.0),
                    other => bail!("axis must be x, y or z, got '{other}'"),
                })
            }
            other => bail!("unknown param key '{other}'"),
        }
    }
    let shape = shape.context("param needs shape=NAME")?;
    let axis = axis.context("param needs axis=x|y|z")?;
    BoundParam::translation(scene, &shape, axis)
        .with_context(|| format!("no shape named '{shape}'"))
}

fn cmd_fwdgrad(scene_path: &Path, param: &str, out: &Path, ov: &RenderOverrides) -> Result<()> {
    let mut scene = load_scene(scene_path)?;
    ov.apply(&mut scene)?;
    let bound = parse_param(&scene, param)?;
    let (img, diag) = forward_derivative_image(&scene, &bound);
    write_pfm(out, &img)?;
    print!("{}", diag.report());
    Ok(())
}

/// Central finite difference of the rendered image along a translation,
/// using common random numbers on both sides.
fn fd_image(scene: &Scene, shape: usize, axis: Vec3, h: f64) -> Result<Image> {
    let shifted = |sgn: f64| -> Result<Image> {
        let mut s = scene.clone();
        match &mut s.shapes[shape].field {
            SdfField::Analytic(a) => a.translation += axis * (sgn * h),
            SdfField::Grid(_) => bail!("fdcheck supports analytic shapes"),
        }
        Ok(render(&s).0)
    };
    let plus = shifted(1.0)?;
    let minus = shifted(-1.0)?;
    let mut out = Image::new(plus.w, plus.h);
    for (o, (p, m)) in out
        .pixels_mut()
        .iter_mut()
        .zip(plus.pixels().iter().zip(minus.pixels()))
    {
        *o = (*p - *m) / (2.0 * h);
    }
    Ok(out)
}

/// Relative L1 between two derivative images over entries whose reference
/// magnitude clears a noise floor (5% of the reference max).
fn relative_l1(test: &Image, reference: &Image) -> f64 {
    let floor = reference
        .pixels()
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs(), p.z.abs()])
        .fold(0.0f64, f64::max)
        * 0.05;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, r) in test.pixels().iter().zip(reference.pixels()) {
        for ch in 0..3 {
            if r[ch].abs() > floor {
                num += (t[ch] - r[ch]).abs();
                den += r[ch].abs();
            }
        }
    }
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn cmd_fdcheck(
    scene_path: &Path,
    param: &str,
    h: f64,
    dump: Option<&Path>,
    ov: &RenderOverrides,
) -> Result<()> {
    if h <= 0.0 {
        bail!("--h must be > 0");
    }
    let mut scene = load_scene(scene_path)?;
    ov.apply(&mut scene)?;
    let bound = parse_param(&scene, param)?;
    let (shape, axis) = match &bound {
        BoundParam::Shape { shape, selector } => match selector {
            rsdf_core::sdf::ParamSelector::Translation { axis } => (*shape, *axis),
            _ => bail!("fdcheck supports translation parameters"),
        },
        _ => bail!("fdcheck supports translation parameters"),
    };
    let (fwd, diag) = forward_derivative_image(&scene, &bound);
    let fd = fd_image(&scene, shape, axis, h)?;
    if let Some(prefix) = dump {
        let stem = prefix.to_string_lossy();
        write_pfm(Path::new(&format!("{stem}_fwd.pfm")), &fwd)?;
        write_pfm(Path::new(&format!("{stem}_fd.pfm")), &fd)?;
    }
    let rel = relative_l1(&fwd, &fd);
    let p = psnr(&fwd, &fd)?;
    println!("relative_l1={rel}");
    println!("psnr={p}");
    print!("{}", diag.report());
    Ok(())
}

fn cmd_optimize(config_path: &Path) -> Result<()> {
    let spec = load_optimize_spec(config_path)?;
    let mut scene = load_scene(&spec.scene_path)?;
    std::fs::create_dir_all(&spec.out_dir)
        .with_context(|| format!("creating {}", spec.out_dir.display()))?;
    let mut views = Vec::new();
    for v in &spec.views {
        let img = read_pfm(&v.reference)
            .with_context(|| format!("reading {}", v.reference.display()))?;
        let mut cam = v.camera.clone();
        cam.width = img.w;
        cam.height = img.h;
        views.push((cam, img));
    }
    let views = rsdf_core::opt::ViewSet::new(views)?;
    let target = match &spec.mode {
        OptMode::Translation { shape, axis, init } => {
            let idx = scene
                .shape_by_name(shape)
                .with_context(|| format!("no shape named '{shape}'"))?;
            OptTarget::Translation { shape: idx, axis: *axis, init: *init }
        }
        OptMode::Grid { shape, init_res } => {
            let idx = scene
                .shape_by_name(shape)
                .with_context(|| format!("no shape named '{shape}'"))?;
            // Replace the shape's geometry by the initial sphere grid.
            scene.shapes[idx].field =
                SdfField::Grid(rsdf_core::opt::initial_sphere_grid(*init_res));
            OptTarget::Grid { shape: idx }
        }
    };
    let out_dir = spec.out_dir.clone();
    let grid_shape = match &target {
        OptTarget::Grid { shape } => Some(*shape),
        _ => None,
    };
    let result: OptimResult = optimize(
        &mut scene,
        &views,
        target,
        &spec.config,
        |level, scene| {
            if let Some(si) = grid_shape {
                if let Some(grid) = scene.shapes[si].field.as_grid() {
                    let path = out_dir.join(format!("checkpoint_level{level}.sdfg"));
                    if let Err(e) = write_grid(&path, grid) {
                        eprintln!("checkpoint write failed: {e}");
                    }
                }
            }
        },
    )?;
    let mut csv = String::from("iteration,level,loss\n");
    for row in &result.loss_history {
        println!("iter {} level {} loss {}", row.iter, row.level, row.loss);
        csv.push_str(&format!("{},{},{}\n", row.iter, row.level, row.loss));
    }
    std::fs::write(out_dir.join("loss.csv"), csv)?;
    if let Some(theta) = result.theta_history.last() {
        println!("theta={theta}");
        std::fs::write(out_dir.join("theta.txt"), format!("{theta}\n"))?;
    }
    print!("{}", result.diag.report());
    Ok(())
}

fn cmd_metrics(a: &Path, b: &Path) -> Result<()> {
    let ia = read_pfm(a)?;
    let ib = read_pfm(b)?;
    let p = psnr(&ia, &ib)?;
    let l1 = ia.l1_distance(&ib)?;
    if p.is_finite() {
        println!("psnr={p}");
    } else {
        println!("psnr=inf");
    }
    println!("l1={l1}");
    Ok(())
}
