//! Black-box tests of the `rsdf` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rsdf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rsdf"))
}

fn write_scene(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scene.txt");
    fs::write(
        &path,
        "\
camera {
  position 0 0 2
  look_at 0 0 0
  up 0 1 0
  fov 40
  resolution 8 8
}
settings {
  spp 4
  seed 3
}
env { radiance 0.2 0.2 0.2 }
light {
  corner -0.5 -0.5 1.8
  edge1 1 0 0
  edge2 0 1 0
  radiance 5 5 5
}
shape {
  name ball
  sphere 0 0 0 0.4
  material diffuse 0.6 0.6 0.6
}
",
    )
    .unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn rsdf")
}

#[test]
fn render_writes_pfm() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let out = dir.path().join("img.pfm");
    let res = run(rsdf().arg("render").arg(&scene).arg(&out));
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let bytes = fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"PF\n8 8\n"), "unexpected header");
}

#[test]
fn render_res_override_takes_effect() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let out = dir.path().join("img.pfm");
    let res = run(rsdf().arg("render").arg(&scene).arg(&out).args(["--res", "5"]));
    assert!(res.status.success());
    assert!(fs::read(&out).unwrap().starts_with(b"PF\n5 5\n"));
}

#[test]
fn metrics_of_identical_images_reports_zero_l1() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let out = dir.path().join("img.pfm");
    assert!(run(rsdf().arg("render").arg(&scene).arg(&out)).status.success());
    let res = run(rsdf().arg("metrics").arg(&out).arg(&out));
    assert!(res.status.success());
    let text = String::from_utf8_lossy(&res.stdout).to_string();
    assert!(text.contains("l1=0"), "metrics output: {text}");
}

#[test]
fn bad_scene_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.txt");
    fs::write(&path, "camera {\n  positron 0 0 2\n}\n").unwrap();
    let out = dir.path().join("img.pfm");
    let res = run(rsdf().arg("render").arg(&path).arg(&out));
    assert!(!res.status.success());
    let err = String::from_utf8_lossy(&res.stderr).to_string();
    assert!(err.contains(":2"), "error should carry the line number: {err}");
}

#[test]
fn fwdgrad_rejects_unknown_shape() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let out = dir.path().join("g.pfm");
    let res = run(rsdf()
        .arg("fwdgrad")
        .arg(&scene)
        .args(["--param", "shape=nope,axis=x"])
        .arg(&out));
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope"));
}

#[test]
fn fwdgrad_rejects_bad_axis() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let out = dir.path().join("g.pfm");
    let res = run(rsdf()
        .arg("fwdgrad")
        .arg(&scene)
        .args(["--param", "shape=ball,axis=w"])
        .arg(&out));
    assert!(!res.status.success());
}

#[test]
fn threads_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_scene(dir.path());
    let a = dir.path().join("a.pfm");
    let b = dir.path().join("b.pfm");
    assert!(run(rsdf().args(["--threads", "1", "render"]).arg(&scene).arg(&a))
        .status
        .success());
    assert!(run(rsdf().args(["--threads", "2", "render"]).arg(&scene).arg(&b))
        .status
        .success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
