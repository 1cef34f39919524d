//! The `bn3d` binary end to end: file layout, determinism and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bn3d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bn3d")).args(args).env("BN3D_THREADS", "2").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bn3d(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    bn3d(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir` with its bytes, sorted by relative path.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn small_dataset(dir: &Path, spec: &str) -> PathBuf {
    ok(&["generate", "--spec", spec, "--views", "4", "--image-size", "24", "--out", s(dir)]);
    dir.join("manifest.json")
}

#[test]
fn generate_writes_every_modality_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("data");
    ok(&["generate", "--spec", "skyscraper", "--views", "20", "--image-size", "32", "--out", s(&dir)]);
    let files = tree(&dir);
    for suffix in ["_color.ppm", "_semantic.pgm", "_depth.pfm"] {
        let n = files.iter().filter(|(p, _)| p.to_str().unwrap().ends_with(suffix)).count();
        assert_eq!(n, 20, "{suffix}");
    }
    for name in ["manifest.json", "poses.json", "spec.json", "ground_truth.json"] {
        assert!(dir.join(name).is_file(), "{name}");
    }
    assert!(!dir.join(".bn3d.lock").exists());
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["generate", "--spec", "lshaped", "--views", "3", "--image-size", "24", "--seed", "5", "--out", s(d)]);
    }
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn unwritable_output_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain");
    std::fs::write(&file, b"x").unwrap();
    let under = file.join("data");
    assert_eq!(code(&["generate", "--spec", "unit_cube", "--views", "2", "--image-size", "16", "--out", s(&under)]), 2);
}

#[test]
fn training_is_deterministic_and_logs_each_step() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_dataset(&tmp.path().join("data"), "unit_cube");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let csv = tmp.path().join(format!("{name}.csv"));
        let args = ["train", "--manifest", s(&manifest), "--iterations", "12", "--batch", "32", "--out", s(&out), "--metrics", s(&csv)];
        ok(&args);
        (std::fs::read(&out).unwrap(), std::fs::read_to_string(&csv).unwrap())
    };
    let (a, csv) = run("a.json");
    let (b, _) = run("b.json");
    assert_eq!(a, b);
    // The desk profile logs step 1 and every step it is a multiple of, plus the last.
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    let log_every = bn3d::train::Profile::desk().train.log_every;
    let expected = (1..=12).filter(|&s| s == 1 || s == 12 || s % log_every == 0).count();
    assert_eq!(rows.len(), expected, "{csv}");
    assert!(csv.starts_with(bn3d::train::StepRecord::CSV_HEADER));
}

#[test]
fn missing_and_tampered_manifests_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ck.json");
    assert_eq!(code(&["train", "--manifest", "/nonexistent/manifest.json", "--out", s(&out)]), 2);
    let dir = tmp.path().join("data");
    let manifest = small_dataset(&dir, "unit_cube");
    let view = std::fs::read_dir(dir.join("views")).unwrap().next().unwrap().unwrap().path();
    let mut bytes = std::fs::read(&view).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&view, bytes).unwrap();
    let out = bn3d(&["train", "--manifest", s(&manifest), "--iterations", "2", "--out", s(&out)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"), "{}", String::from_utf8_lossy(&out.stderr));
    let est = tmp.path().join("est");
    assert_eq!(code(&["estimate", "--analytic", "unit_cube", "--manifest", s(&manifest), "--out", s(&est)]), 2);
}

#[test]
fn a_one_cell_grid_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("est");
    assert_eq!(code(&["estimate", "--analytic", "unit_cube", "--grid", "1", "--out", s(&out)]), 2);
}

#[test]
fn the_scaled_baseline_refuses_curved_buildings() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("curved");
    ok(&["generate", "--spec", "curved", "--views", "1", "--image-size", "16", "--facade-views", "ideal", "--facade-size", "64", "--out", s(&dir)]);
    let out = tmp.path().join("b.csv");
    let m = dir.join("manifest.json");
    let res = bn3d(&["baseline", "--manifest", s(&m), "--method", "2d-ss", "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).to_lowercase().contains("curved"));
    // The naive method has no such restriction.
    ok(&["baseline", "--manifest", s(&m), "--method", "2d-s", "--out", s(&out)]);
}

#[test]
fn evaluate_aggregates_three_buildings() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["unit_cube", "cube", "lshaped"] {
        let out = tmp.path().join(name);
        ok(&["estimate", "--analytic", name, "--grid", "48", "--refine", "1", "--out", s(&out)]);
        reports.push(out.join("report.json"));
    }
    let eval_dir = tmp.path().join("eval");
    let mut args = vec!["evaluate", "--out", s(&eval_dir)];
    args.extend(reports.iter().map(|p| s(p)));
    ok(&args);
    let csv = std::fs::read_to_string(eval_dir.join("evaluation.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("BuildNet3D")).unwrap();
    assert!(row.split(',').nth(1) == Some("3"), "{row}");
    assert!(!row.split(',').skip(2).any(|c| c.is_empty()), "{row}");

    // A report whose footprint equals the truth shows an IoU of exactly one.
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&reports[0]).unwrap()).unwrap();
    v["ground_truth"]["footprint_iou"] = serde_json::json!(1.0);
    let perfect = tmp.path().join("perfect.json");
    std::fs::write(&perfect, v.to_string()).unwrap();
    let eval_dir = tmp.path().join("eval1");
    let table = ok(&["evaluate", "--out", s(&eval_dir), s(&perfect)]);
    assert!(table.contains("1.000"), "{table}");
}
