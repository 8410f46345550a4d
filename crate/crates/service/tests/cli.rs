use std::path::Path;
use std::process::Command;

use image::{Rgb, RgbImage};

use scenemask::refselect::masked_crop;
use scenemask::render::export::read_masks;

fn scenemask(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_scenemask"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn headless_workflow() {
    let root = tempfile::tempdir().unwrap();
    let bundle = root.path().join("bundle");
    scenemask(&["synth", "--out", s(&bundle), "--kind", "occluder-sweep", "--width", "64", "--height", "48", "--frames", "6"]);
    assert!(bundle.join("object/sphere.ply").exists());

    let summary: serde_json::Value = serde_json::from_str(&scenemask(&["validate", s(&bundle)])).unwrap();
    assert_eq!(summary["frames"], 6);
    assert_eq!(summary["objects"][0][0], "sphere");

    let placement = bundle.join("suggested_placement.json");
    let traj = root.path().join("traj.json");
    scenemask(&["propagate", "--bundle", s(&bundle), "--placement", s(&placement), "--out", s(&traj)]);
    let stepwise = root.path().join("stepwise");
    scenemask(&["render", "--bundle", s(&bundle), "--trajectory", s(&traj), "--out", s(&stepwise)]);
    let piped = root.path().join("piped");
    scenemask(&["pipeline", "--bundle", s(&bundle), "--object", "sphere", "--placement", s(&placement), "--out", s(&piped)]);

    let (_, a) = read_masks(&stepwise).unwrap();
    let (_, b) = read_masks(&piped).unwrap();
    assert_eq!(a, b);
    assert_eq!(std::fs::read(&traj).unwrap(), std::fs::read(piped.join("trajectory.json")).unwrap());
    assert!(a.masks.iter().any(|m| m.area() > 0));

    // The object as seen in frame 0 against two distractors.
    let cands = root.path().join("cands");
    std::fs::create_dir_all(&cands).unwrap();
    let frame0 = image::open(bundle.join("rgb/00000.png")).unwrap().to_rgb8();
    let crop = masked_crop(&frame0, &a.masks[0].to_image()).unwrap().unwrap();
    crop.save(cands.join("b_object.png")).unwrap();
    RgbImage::from_fn(20, 20, |x, y| Rgb([(x * 12) as u8, 0, (y * 12) as u8])).save(cands.join("a_ramp.png")).unwrap();
    image::imageops::rotate180(&crop).save(cands.join("c_turned.png")).unwrap();

    let selection = root.path().join("selection.json");
    scenemask(&[
        "select-ref",
        "--frames",
        s(&bundle.join("rgb")),
        "--masks",
        s(&piped.join("mask")),
        "--candidates",
        s(&cands),
        "--samples",
        "1",
        "--out",
        s(&selection),
    ]);
    let sel: serde_json::Value = serde_json::from_slice(&std::fs::read(&selection).unwrap()).unwrap();
    assert_eq!(sel["provider"], "baseline-gray16");
    assert_eq!(sel["selected"], 1);
    assert_eq!(sel["scores"].as_array().unwrap().len(), 3);
}

#[test]
fn failures_exit_nonzero() {
    let root = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_scenemask"))
        .args(["validate", s(root.path())])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
}
