//! Scene and optimization-config text files.
//!
//! The format is a minimal block dialect:
//!
//! ```text
//! # comment
//! camera {
//!   position 0 1 3
//!   look_at 0 0 0
//!   up 0 1 0
//!   fov 45
//!   resolution 64 64
//! }
//! settings { spp 16  max_depth 2  eps 0.002  seed 0 }
//! env { radiance 1 1 1 }
//! light { corner -0.5 1.5 -0.5  edge1 1 0 0  edge2 0 0 1  radiance 10 10 10 }
//! shape { name ball  sphere 0 0 0 0.5  material diffuse 0.8 0.8 0.8 }
//! ```
//!
//! One `key` with its arguments per line (several pairs may share a line
//! inside `{ ... }` if separated by two spaces — in practice one per line).
//! Unknown keys are rejected with the offending line number. All file paths
//! are resolved relative to the file that mentions them.

use crate::image::read_pfm;
use crate::math::{vec3, Vec3};
use crate::opt::OptimConfig;
use crate::scene::{
    default_camera, Albedo, Camera, EnvLight, Material, RectLight, Scene, Settings, Shape,
};
use crate::sdf::{io::read_grid, AnalyticSdf, SdfField};
use crate::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub args: Vec<String>,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

fn perr(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Append the entries found on one line; runs of two or more spaces
/// separate distinct entries.
fn push_entries(block: &mut Block, line: &str, line_no: usize) {
    for chunk in line.split("  ") {
        let mut tok = chunk.split_whitespace();
        let Some(key) = tok.next() else { continue };
        block.entries.push(Entry {
            key: key.to_string(),
            args: tok.map(str::to_string).collect(),
            line: line_no,
        });
    }
}

/// Split a document into top-level blocks. Blocks do not nest.
pub fn parse_blocks(text: &str, path: &Path) -> Result<Vec<Block>> {
    let mut blocks = Vec::new();
    let mut current: Option<Block> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "}" {
            match current.take() {
                Some(b) => blocks.push(b),
                None => return Err(perr(path, line_no, "unmatched '}'")),
            }
            continue;
        }
        if let Some(open) = line.find('{') {
            if current.is_some() {
                return Err(perr(path, line_no, "blocks do not nest"));
            }
            let name = line[..open].trim();
            if name.is_empty() || name.split_whitespace().count() != 1 {
                return Err(perr(path, line_no, "expected 'name {'"));
            }
            let mut block = Block {
                name: name.to_string(),
                line: line_no,
                entries: Vec::new(),
            };
            let rest = &line[open + 1..];
            if let Some(inner) = rest.strip_suffix('}') {
                // Whole block on one line.
                push_entries(&mut block, inner, line_no);
                blocks.push(block);
            } else {
                if !rest.trim().is_empty() {
                    push_entries(&mut block, rest, line_no);
                }
                current = Some(block);
            }
            continue;
        }
        let block = current
            .as_mut()
            .ok_or_else(|| perr(path, line_no, "key outside of any block"))?;
        push_entries(block, line, line_no);
    }
    if let Some(b) = current {
        return Err(perr(path, b.line, format!("block '{}' never closed", b.name)));
    }
    Ok(blocks)
}

fn parse_f64(path: &Path, e: &Entry, idx: usize) -> Result<f64> {
    let s = e
        .args
        .get(idx)
        .ok_or_else(|| perr(path, e.line, format!("'{}' needs more arguments", e.key)))?;
    s.parse()
        .map_err(|_| perr(path, e.line, format!("'{s}' is not a number")))
}

fn parse_usize(path: &Path, e: &Entry, idx: usize) -> Result<usize> {
    let s = e
        .args
        .get(idx)
        .ok_or_else(|| perr(path, e.line, format!("'{}' needs more arguments", e.key)))?;
    s.parse()
        .map_err(|_| perr(path, e.line, format!("'{s}' is not an integer")))
}

fn parse_vec3(path: &Path, e: &Entry, idx: usize) -> Result<Vec3> {
    Ok(vec3(
        parse_f64(path, e, idx)?,
        parse_f64(path, e, idx + 1)?,
        parse_f64(path, e, idx + 2)?,
    ))
}

fn expect_args(path: &Path, e: &Entry, n: usize) -> Result<()> {
    if e.args.len() != n {
        return Err(perr(
            path,
            e.line,
            format!("'{}' takes {} argument(s), got {}", e.key, n, e.args.len()),
        ));
    }
    Ok(())
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn camera_from_block(path: &Path, b: &Block) -> Result<Camera> {
    let mut cam = default_camera(64, 64);
    for e in &b.entries {
        match e.key.as_str() {
            "position" => {
                expect_args(path, e, 3)?;
                cam.position = parse_vec3(path, e, 0)?;
            }
            "look_at" => {
                expect_args(path, e, 3)?;
                cam.look_at = parse_vec3(path, e, 0)?;
            }
            "up" => {
                expect_args(path, e, 3)?;
                cam.up = parse_vec3(path, e, 0)?;
            }
            "fov" => {
                expect_args(path, e, 1)?;
                cam.fov_y = parse_f64(path, e, 0)?;
            }
            "resolution" => {
                expect_args(path, e, 2)?;
                cam.width = parse_usize(path, e, 0)?;
                cam.height = parse_usize(path, e, 1)?;
            }
            other => return Err(perr(path, e.line, format!("unknown camera key '{other}'"))),
        }
    }
    Ok(cam)
}

fn settings_from_block(path: &Path, b: &Block, s: &mut Settings) -> Result<()> {
    for e in &b.entries {
        match e.key.as_str() {
            "spp" => {
                expect_args(path, e, 1)?;
                s.spp = parse_usize(path, e, 0)?;
            }
            "max_depth" => {
                expect_args(path, e, 1)?;
                s.max_depth = parse_usize(path, e, 0)? as u32;
            }
            "eps" => {
                expect_args(path, e, 1)?;
                s.eps = parse_f64(path, e, 0)?;
            }
            "seed" => {
                expect_args(path, e, 1)?;
                s.seed = parse_usize(path, e, 0)? as u64;
            }
            "boundary" => {
                expect_args(path, e, 1)?;
                s.boundary = match e.args[0].as_str() {
                    "on" => true,
                    "off" => false,
                    v => return Err(perr(path, e.line, format!("boundary must be on/off, got '{v}'"))),
                };
            }
            other => return Err(perr(path, e.line, format!("unknown settings key '{other}'"))),
        }
    }
    Ok(())
}

fn shape_from_block(path: &Path, base: &Path, b: &Block) -> Result<Shape> {
    let mut name = None;
    let mut field = None;
    let mut material = None;
    for e in &b.entries {
        match e.key.as_str() {
            "name" => {
                expect_args(path, e, 1)?;
                name = Some(e.args[0].clone());
            }
            "sphere" => {
                expect_args(path, e, 4)?;
                let c = parse_vec3(path, e, 0)?;
                let r = parse_f64(path, e, 3)?;
                field = Some(SdfField::Analytic(AnalyticSdf::sphere(c, r)));
            }
            "box" => {
                expect_args(path, e, 6)?;
                let c = parse_vec3(path, e, 0)?;
                let half = parse_vec3(path, e, 3)?;
                field = Some(SdfField::Analytic(AnalyticSdf::box_at(c, half)));
            }
            "plane" => {
                expect_args(path, e, 4)?;
                let n = parse_vec3(path, e, 0)?;
                let off = parse_f64(path, e, 3)?;
                field = Some(SdfField::Analytic(AnalyticSdf::plane(n, off)));
            }
            "grid" => {
                expect_args(path, e, 1)?;
                let p = resolve(base, &e.args[0]);
                let g = read_grid(&p)
                    .map_err(|err| perr(path, e.line, format!("{}: {err}", p.display())))?;
                field = Some(SdfField::Grid(g));
            }
            "material" => {
                if e.args.len() != 4 {
                    return Err(perr(path, e.line, "material takes: kind r g b"));
                }
                let c = parse_vec3(path, e, 1)?;
                material = Some(match e.args[0].as_str() {
                    "diffuse" => Material::Diffuse { albedo: Albedo::Constant(c) },
                    "mirror" => Material::Mirror { reflectance: c },
                    other => {
                        return Err(perr(path, e.line, format!("unknown material '{other}'")))
                    }
                });
            }
            other => return Err(perr(path, e.line, format!("unknown shape key '{other}'"))),
        }
    }
    Ok(Shape {
        name: name.ok_or_else(|| perr(path, b.line, "shape needs a name"))?,
        field: field.ok_or_else(|| perr(path, b.line, "shape needs geometry"))?,
        material: material.ok_or_else(|| perr(path, b.line, "shape needs a material"))?,
    })
}

fn light_from_block(path: &Path, b: &Block) -> Result<RectLight> {
    let (mut corner, mut e1, mut e2, mut rad) = (None, None, None, None);
    for e in &b.entries {
        match e.key.as_str() {
            "corner" => {
                expect_args(path, e, 3)?;
                corner = Some(parse_vec3(path, e, 0)?);
            }
            "edge1" => {
                expect_args(path, e, 3)?;
                e1 = Some(parse_vec3(path, e, 0)?);
            }
            "edge2" => {
                expect_args(path, e, 3)?;
                e2 = Some(parse_vec3(path, e, 0)?);
            }
            "radiance" => {
                expect_args(path, e, 3)?;
                rad = Some(parse_vec3(path, e, 0)?);
            }
            other => return Err(perr(path, e.line, format!("unknown light key '{other}'"))),
        }
    }
    let need = |o: Option<Vec3>, what: &str| {
        o.ok_or_else(|| perr(path, b.line, format!("light needs '{what}'")))
    };
    Ok(RectLight {
        corner: need(corner, "corner")?,
        edge1: need(e1, "edge1")?,
        edge2: need(e2, "edge2")?,
        radiance: need(rad, "radiance")?,
    })
}

fn env_from_block(path: &Path, base: &Path, b: &Block) -> Result<EnvLight> {
    let mut env = None;
    for e in &b.entries {
        match e.key.as_str() {
            "radiance" => {
                expect_args(path, e, 3)?;
                env = Some(EnvLight::Constant(parse_vec3(path, e, 0)?));
            }
            "map" => {
                expect_args(path, e, 1)?;
                let p = resolve(base, &e.args[0]);
                let img = read_pfm(&p)
                    .map_err(|err| perr(path, e.line, format!("{}: {err}", p.display())))?;
                env = Some(EnvLight::Map(img));
            }
            other => return Err(perr(path, e.line, format!("unknown env key '{other}'"))),
        }
    }
    env.ok_or_else(|| perr(path, b.line, "env needs 'radiance' or 'map'"))
}

/// Parse a scene document. `path` is used for error messages and as the
/// anchor for relative paths.
pub fn scene_from_str(text: &str, path: &Path) -> Result<Scene> {
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let blocks = parse_blocks(text, path)?;
    let mut camera = None;
    let mut settings = Settings::default();
    let mut shapes = Vec::new();
    let mut lights = Vec::new();
    let mut env = None;
    for b in &blocks {
        match b.name.as_str() {
            "camera" => {
                if camera.is_some() {
                    return Err(perr(path, b.line, "duplicate camera block"));
                }
                camera = Some(camera_from_block(path, b)?);
            }
            "settings" => settings_from_block(path, b, &mut settings)?,
            "shape" => shapes.push(shape_from_block(path, &base, b)?),
            "light" => lights.push(light_from_block(path, b)?),
            "env" => {
                if env.is_some() {
                    return Err(perr(path, b.line, "duplicate env block"));
                }
                env = Some(env_from_block(path, &base, b)?);
            }
            other => return Err(perr(path, b.line, format!("unknown block '{other}'"))),
        }
    }
    if !(settings.eps > 0.0) {
        return Err(perr(path, 0, "settings: eps must be > 0"));
    }
    let mut seen = std::collections::HashSet::new();
    for s in &shapes {
        if !seen.insert(s.name.clone()) {
            return Err(perr(path, 0, format!("duplicate shape name '{}'", s.name)));
        }
    }
    Ok(Scene {
        shapes,
        lights,
        env,
        camera: camera.unwrap_or_else(|| default_camera(64, 64)),
        settings,
    })
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Other(format!("cannot read scene '{}': {e}", path.display()))
    })?;
    scene_from_str(&text, path)
}

/// Optimization driver config: the scene template, the target, the
/// optimizer settings and the views.
#[derive(Debug, Clone)]
pub enum OptMode {
    Translation { shape: String, axis: Vec3, init: f64 },
    Grid { shape: String, init_res: usize },
}

pub struct ViewSpec {
    pub camera: Camera,
    pub reference: PathBuf,
}

pub struct OptimizeSpec {
    pub scene_path: PathBuf,
    pub mode: OptMode,
    pub config: OptimConfig,
    pub views: Vec<ViewSpec>,
    pub out_dir: PathBuf,
}

pub fn load_optimize_spec(path: &Path) -> Result<OptimizeSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Other(format!("cannot read config '{}': {e}", path.display()))
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let blocks = parse_blocks(&text, path)?;
    let mut scene_path = None;
    let mut mode_str = None;
    let mut shape = None;
    let mut axis = vec3(1.0, 0.0, 0.0);
    let mut init = 0.0;
    let mut init_res = 16usize;
    let mut out_dir = base.clone();
    let mut cfg = OptimConfig::default();
    let mut views = Vec::new();
    let mut seen_opt = false;
    for b in &blocks {
        match b.name.as_str() {
            "optimize" => {
                if seen_opt {
                    return Err(perr(path, b.line, "duplicate optimize block"));
                }
                seen_opt = true;
                for e in &b.entries {
                    match e.key.as_str() {
                        "scene" => {
                            expect_args(path, e, 1)?;
                            scene_path = Some(resolve(&base, &e.args[0]));
                        }
                        "mode" => {
                            expect_args(path, e, 1)?;
                            mode_str = Some(e.args[0].clone());
                        }
                        "shape" => {
                            expect_args(path, e, 1)?;
                            shape = Some(e.args[0].clone());
                        }
                        "axis" => {
                            expect_args(path, e, 3)?;
                            axis = parse_vec3(path, e, 0)?;
                        }
                        "init" => {
                            expect_args(path, e, 1)?;
                            init = parse_f64(path, e, 0)?;
                        }
                        "init_res" => {
                            expect_args(path, e, 1)?;
                            init_res = parse_usize(path, e, 0)?;
                        }
                        "lr" => {
                            expect_args(path, e, 1)?;
                            cfg.lr = parse_f64(path, e, 0)?;
                        }
                        "iterations" => {
                            expect_args(path, e, 1)?;
                            cfg.iters_per_level = parse_usize(path, e, 0)?;
                        }
                        "levels" => {
                            expect_args(path, e, 1)?;
                            cfg.levels = parse_usize(path, e, 0)?;
                        }
                        "batch" => {
                            expect_args(path, e, 1)?;
                            cfg.batch_size = parse_usize(path, e, 0)?;
                        }
                        "spp" => {
                            expect_args(path, e, 1)?;
                            cfg.spp = parse_usize(path, e, 0)?;
                        }
                        "eps" => {
                            expect_args(path, e, 1)?;
                            cfg.eps = parse_f64(path, e, 0)?;
                        }
                        "max_res" => {
                            expect_args(path, e, 1)?;
                            cfg.max_res = parse_usize(path, e, 0)?;
                        }
                        "out_dir" => {
                            expect_args(path, e, 1)?;
                            out_dir = resolve(&base, &e.args[0]);
                        }
                        other => {
                            return Err(perr(path, e.line, format!("unknown optimize key '{other}'")))
                        }
                    }
                }
            }
            "view" => {
                let mut cam = default_camera(64, 64);
                let mut reference = None;
                for e in &b.entries {
                    match e.key.as_str() {
                        "reference" => {
                            expect_args(path, e, 1)?;
                            reference = Some(resolve(&base, &e.args[0]));
                        }
                        "position" => {
                            expect_args(path, e, 3)?;
                            cam.position = parse_vec3(path, e, 0)?;
                        }
                        "look_at" => {
                            expect_args(path, e, 3)?;
                            cam.look_at = parse_vec3(path, e, 0)?;
                        }
                        "up" => {
                            expect_args(path, e, 3)?;
                            cam.up = parse_vec3(path, e, 0)?;
                        }
                        "fov" => {
                            expect_args(path, e, 1)?;
                            cam.fov_y = parse_f64(path, e, 0)?;
                        }
                        "resolution" => {
                            expect_args(path, e, 2)?;
                            cam.width = parse_usize(path, e, 0)?;
                            cam.height = parse_usize(path, e, 1)?;
                        }
                        other => {
                            return Err(perr(path, e.line, format!("unknown view key '{other}'")))
                        }
                    }
                }
                views.push(ViewSpec {
                    camera: cam,
                    reference: reference
                        .ok_or_else(|| perr(path, b.line, "view needs 'reference'"))?,
                });
            }
            other => return Err(perr(path, b.line, format!("unknown block '{other}'"))),
        }
    }
    cfg.validate()?;
    let mode = match mode_str.as_deref() {
        Some("translation") => OptMode::Translation {
            shape: shape.clone().ok_or_else(|| perr(path, 0, "optimize needs 'shape'"))?,
            axis,
            init,
        },
        Some("grid") => OptMode::Grid {
            shape: shape.clone().ok_or_else(|| perr(path, 0, "optimize needs 'shape'"))?,
            init_res,
        },
        Some(other) => return Err(perr(path, 0, format!("unknown mode '{other}'"))),
        None => return Err(perr(path, 0, "optimize needs 'mode'")),
    };
    Ok(OptimizeSpec {
        scene_path: scene_path.ok_or_else(|| perr(path, 0, "optimize needs 'scene'"))?,
        mode,
        config: cfg,
        views,
        out_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
camera {
  position 0 1 3
  look_at 0 0 0
  resolution 8 8
}
settings {
  spp 2
}
env {
  radiance 1 1 1
}
shape {
  name ball
  sphere 0 0 0 0.5
  material diffuse 0.8 0.7 0.6
}
";

    #[test]
    fn minimal_scene_parses() {
        let scene = scene_from_str(MINIMAL, Path::new("test.scene")).unwrap();
        assert_eq!(scene.shapes.len(), 1);
        assert_eq!(scene.shapes[0].name, "ball");
        assert_eq!(scene.camera.width, 8);
        assert_eq!(scene.settings.spp, 2);
        assert!(scene.env.is_some());
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let text = "settings {\n  spp 2\n  warp 9\n}\n";
        match scene_from_str(text, Path::new("t.scene")) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("warp"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_camera_rejected() {
        let text = "camera {\n}\ncamera {\n}\n";
        match scene_from_str(text, Path::new("t.scene")) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn zero_eps_rejected() {
        let text = "settings {\n  eps 0\n}\n";
        assert!(scene_from_str(text, Path::new("t.scene")).is_err());
    }

    #[test]
    fn missing_grid_file_names_path() {
        let text = "shape {\n  name g\n  grid nowhere.sdfg\n  material diffuse 1 1 1\n}\n";
        match scene_from_str(text, Path::new("/tmp/t.scene")) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("nowhere.sdfg")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unclosed_block_rejected() {
        assert!(scene_from_str("camera {\n", Path::new("t.scene")).is_err());
    }
}
