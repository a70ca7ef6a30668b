use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn worldtraj(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_worldtraj"))
        .current_dir(dir)
        .env_remove("WORLDTRAJ_OUTPUT_ROOT")
        .env_remove("WORLDTRAJ_SEED")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = worldtraj(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_deterministic_and_checksummed() {
    let tmp = TempDir::new().unwrap();
    let a = ok(tmp.path(), &["simulate", "--seed", "11", "--frames", "80", "--out", "a"]);
    let b = ok(tmp.path(), &["simulate", "--seed", "11", "--frames", "80", "--out", "b"]);
    let strip = |s: &str| s.lines().skip(1).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    for name in ["gt_human.traj", "joints.jsq", "observations.obs", "vo.traj"] {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(name)).unwrap(),
            std::fs::read(tmp.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    let listing = std::fs::read_to_string(tmp.path().join("a/checksums.sha256")).unwrap();
    assert_eq!(listing.lines().count(), 8);
    let c = ok(tmp.path(), &["simulate", "--seed", "12", "--frames", "80", "--out", "c"]);
    assert_ne!(strip(&a), strip(&c));
}

#[test]
fn seed_comes_from_environment() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--seed", "5", "--frames", "40", "--out", "flag"]);
    let out = Command::new(env!("CARGO_BIN_EXE_worldtraj"))
        .current_dir(tmp.path())
        .env("WORLDTRAJ_SEED", "5")
        .env_remove("WORLDTRAJ_OUTPUT_ROOT")
        .args(["simulate", "--frames", "40", "--out", "env"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(tmp.path().join("flag/gt_human.traj")).unwrap(),
        std::fs::read(tmp.path().join("env/gt_human.traj")).unwrap()
    );
}

#[test]
fn output_root_prefixes_relative_paths() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().join("root");
    let out = Command::new(env!("CARGO_BIN_EXE_worldtraj"))
        .current_dir(tmp.path())
        .env("WORLDTRAJ_OUTPUT_ROOT", &root)
        .args(["simulate", "--frames", "30", "--out", "scene"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(root.join("scene/scene.json").exists());
}

#[test]
fn arc_sweep_gives_five_keyframes() {
    let tmp = TempDir::new().unwrap();
    let out = ok(
        tmp.path(),
        &[
            "simulate", "--motion", "idle", "--shot", "arc", "--phi-range", "0:180", "--dphi", "45", "--frames", "200",
            "--out", "arc",
        ],
    );
    assert!(out.lines().next().unwrap().ends_with("5 keyframes"), "{out}");
}

#[test]
fn arc_flags_need_arc_shot() {
    let tmp = TempDir::new().unwrap();
    let out = worldtraj(tmp.path(), &["simulate", "--shot", "push", "--dphi", "10", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_recovers_vo_scale() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--seed", "3", "--frames", "90", "--vo-scale", "3", "--out", "s"]);
    ok(tmp.path(), &["run", "s"]);
    let diag = json(&tmp.path().join("s/run/diagnostics.json"));
    let scale = diag["alignment"]["scale"].as_f64().unwrap();
    assert!((scale - 3.0).abs() < 1e-6, "scale {scale}");
    assert_eq!(diag["stage_timings"].as_array().unwrap().len(), 10);
    for f in ["human.traj", "camera.traj", "joints_world.jsq", "joints_camera.jsq"] {
        assert!(tmp.path().join("s/run").join(f).exists(), "{f}");
    }
}

#[test]
fn simulated_vo_flags_override_bundle() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--seed", "4", "--frames", "60", "--out", "s"]);
    ok(tmp.path(), &["run", "s", "--vo", "simulate", "--vo-scale", "0.2", "--out", "r"]);
    let scale = json(&tmp.path().join("r/diagnostics.json"))["alignment"]["scale"].as_f64().unwrap();
    assert!((scale - 0.2).abs() < 1e-6, "scale {scale}");
    let bad = worldtraj(tmp.path(), &["run", "s", "--vo-scale", "2", "--out", "r2"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn static_camera_exits_with_mv_only_fallback() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--shot", "static", "--frames", "60", "--out", "st"]);
    let out = worldtraj(tmp.path(), &["run", "st"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(tmp.path().join("st/run/human_mv_only.traj").exists());
    let diag = json(&tmp.path().join("st/run/diagnostics.json"));
    assert_eq!(diag["mv_only_fallback"], true);
    assert!(!diag["warnings"].as_array().unwrap().is_empty());
    assert!(!tmp.path().join("st/run/human.traj").exists());
}

#[test]
fn dummy_focal_scales_depth() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--seed", "8", "--frames", "60", "--out", "s"]);
    ok(tmp.path(), &["run", "s", "--out", "exact"]);
    ok(tmp.path(), &["run", "s", "--intrinsics", "dummy:5000", "--out", "dummy"]);
    let exact = json(&tmp.path().join("exact/diagnostics.json"));
    let dummy = json(&tmp.path().join("dummy/diagnostics.json"));
    let f = exact["root_depth"]["focal_px"].as_f64().unwrap();
    let ratio = dummy["root_depth"]["mean"].as_f64().unwrap() / exact["root_depth"]["mean"].as_f64().unwrap();
    assert!((ratio - 5000.0 / f).abs() < 1e-9, "ratio {ratio}");
    assert_eq!(dummy["root_depth"]["intrinsic_source"], "dummy");
}

#[test]
fn eval_of_ground_truth_is_zero() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--seed", "2", "--frames", "130", "--out", "s"]);
    ok(
        tmp.path(),
        &[
            "eval",
            "--est-human",
            "s/gt_human.traj",
            "--gt-human",
            "s/gt_human.traj",
            "--est-camera",
            "s/gt_camera.traj",
            "--gt-camera",
            "s/gt_camera.traj",
            "--est-joints",
            "s/joints.jsq",
            "--gt-joints",
            "s/joints.jsq",
            "--out",
            "ev",
        ],
    );
    let report = json(&tmp.path().join("ev/report.json"));
    let seq = &report["sequence"];
    assert!(seq["h_ate_mm"].as_f64().unwrap() < 1e-6);
    assert!((seq["h_as"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((seq["c_as"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(seq["w_mpjpe_100_mm"].as_f64().unwrap() < 1e-6);
    let segments = report["segments"].as_array().unwrap();
    assert_eq!(segments.len(), 2);
    assert_eq!(segments[1]["partial"], true);
    let csv = std::fs::read_to_string(tmp.path().join("ev/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn eval_requires_a_pair() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--frames", "30", "--out", "s"]);
    let out = worldtraj(tmp.path(), &["eval", "--est-human", "s/gt_human.traj", "--out", "ev"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_bundle_is_io_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(worldtraj(tmp.path(), &["run", "nowhere"]).status.code(), Some(3));
}

#[test]
fn empty_corpus_fails_training() {
    let tmp = TempDir::new().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    let out = worldtraj(tmp.path(), &["train-mv", "--corpus", "empty", "--out", "m.wtvm"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
    assert!(!tmp.path().join("m.wtvm").exists());
}

#[test]
fn tiny_training_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["make-corpus", "--sequences", "6", "--min-frames", "40", "--max-frames", "50", "--out", "corpus"],
    );
    let args = |out: &'static str| {
        [
            "train-mv", "--corpus", "corpus", "--epochs", "1", "--hidden", "16", "--layers", "1", "--out", out,
        ]
    };
    let a = ok(tmp.path(), &args("a.wtvm"));
    let b = ok(tmp.path(), &args("b.wtvm"));
    let checksum = |s: &str| s.lines().find(|l| l.starts_with("checksum")).unwrap().to_owned();
    assert_eq!(checksum(&a), checksum(&b));
    assert_eq!(
        std::fs::read(tmp.path().join("a.wtvm")).unwrap(),
        std::fs::read(tmp.path().join("b.wtvm")).unwrap()
    );

    ok(tmp.path(), &["simulate", "--seed", "1", "--frames", "60", "--vo-scale", "2", "--out", "s"]);
    ok(tmp.path(), &["run", "s", "--velocimeter", "a.wtvm"]);
    let diag = json(&tmp.path().join("s/run/diagnostics.json"));
    assert!(diag["alignment"]["scale"].as_f64().unwrap().is_finite());
}

#[test]
fn export_import_round_trip() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--seed", "6", "--frames", "50", "--out", "s"]);
    ok(tmp.path(), &["export", "s/gt_camera.traj", "--out", "cam.csv"]);
    ok(tmp.path(), &["import-csv", "cam.csv", "--out", "cam.traj"]);
    ok(tmp.path(), &["export", "cam.traj", "--out", "cam2.csv"]);
    assert_eq!(
        std::fs::read_to_string(tmp.path().join("cam.csv")).unwrap(),
        std::fs::read_to_string(tmp.path().join("cam2.csv")).unwrap()
    );
    ok(
        tmp.path(),
        &["export", "s/gt_human.traj", "s/gt_camera.traj", "--names", "human,camera", "--out", "both.csv"],
    );
    let header = std::fs::read_to_string(tmp.path().join("both.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("human_x"));
}

#[test]
fn batch_simulation_matches_single_runs() {
    let tmp = TempDir::new().unwrap();
    ok(
        tmp.path(),
        &["simulate", "--seed", "20", "--count", "3", "--jobs", "3", "--frames", "40", "--out", "many"],
    );
    ok(tmp.path(), &["simulate", "--seed", "22", "--frames", "40", "--out", "one"]);
    assert_eq!(
        std::fs::read(tmp.path().join("many/seq_0002/gt_human.traj")).unwrap(),
        std::fs::read(tmp.path().join("one/gt_human.traj")).unwrap()
    );
    ok(tmp.path(), &["run", "many/seq_0000", "many/seq_0001", "--jobs", "2", "--out", "runs"]);
    assert!(tmp.path().join("runs/seq_0001/human.traj").exists());
}

#[test]
fn scaled_estimate_reports_injected_factor() {
    use worldtraj_core::formats::{read_trajectory, write_trajectory};
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--seed", "13", "--frames", "60", "--out", "s"]);
    let gt = read_trajectory(&tmp.path().join("s/gt_human.traj")).unwrap();
    write_trajectory(&tmp.path().join("small.traj"), &gt.scaled(1.0 / 3.0, gt.scale_status)).unwrap();
    ok(tmp.path(), &["eval", "--est-human", "small.traj", "--gt-human", "s/gt_human.traj", "--out", "ev"]);
    let h_as = json(&tmp.path().join("ev/report.json"))["sequence"]["h_as"].as_f64().unwrap();
    assert!((h_as - 3.0).abs() < 1e-9, "H-AS {h_as}");
}
