//! Drives the `autolabel` binary through every subcommand on a small scene.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use autolabel::fusion::{box_distance, Source};
use autolabel::io::{load_cloud, load_labels, read_json};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_autolabel"));
    c.env_remove("AUTOLABEL_CONFIG").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "autolabel {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 4-frame scene (one eval frame) pushed through the step-by-step chain.
struct Chain {
    dir: tempfile::TempDir,
}

impl Chain {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

fn chain() -> &'static Chain {
    static C: OnceLock<Chain> = OnceLock::new();
    C.get_or_init(|| {
        let c = Chain {
            dir: tempfile::tempdir().unwrap(),
        };
        let p = |r| c.path(r);
        let manifest = p("data/manifest.json");
        run(&[
            "synth",
            "--frames",
            "4",
            "--eval-frames",
            "1",
            "--seed",
            "5",
            "--out",
            s(&p("data")),
        ]);
        run(&["ppscore", "--manifest", s(&manifest), "--out", s(&p("scored"))]);
        let mut scored: Vec<String> = std::fs::read_dir(p("scored"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .map(|p| p.to_string_lossy().into_owned())
            .collect();
        scored.sort();
        let mut args = vec!["cluster".to_string()];
        args.extend(scored);
        args.extend(["--out".into(), p("lidar.jsonl").to_string_lossy().into_owned()]);
        run(&args.iter().map(String::as_str).collect::<Vec<_>>());
        run(&["lift", "--manifest", s(&manifest), "--out", s(&p("image.jsonl"))]);
        run(&[
            "fuse",
            "--lidar",
            s(&p("lidar.jsonl")),
            "--image",
            s(&p("image.jsonl")),
            "--out",
            s(&p("fused.jsonl")),
        ]);
        run(&[
            "selfpace",
            "--manifest",
            s(&manifest),
            "--labels",
            s(&p("fused.jsonl")),
            "--out",
            s(&p("sp")),
        ]);
        run(&[
            "eval",
            "--pred",
            s(&p("fused.jsonl")),
            "--gt",
            s(&p("data/ground_truth.jsonl")),
            "--out",
            s(&p("metrics.json")),
        ]);
        run(&["run", "--manifest", s(&manifest), "--out", s(&p("run"))]);
        c
    })
}

#[test]
fn chain_writes_every_output() {
    let c = chain();
    for rel in [
        "data/manifest.json",
        "data/scene.toml",
        "scored/f0000.csv",
        "scored/f0000.csv.meta.json",
        "lidar.jsonl.meta.json",
        "fused.jsonl",
        "sp/rounds.jsonl",
        "sp/weights.json",
        "metrics.json",
        "run/labels/fused.jsonl",
        "run/metrics/seed_fused.json",
        "run/selfpace/rounds.jsonl",
        "run/config.toml",
    ] {
        assert!(c.path(rel).is_file(), "missing {rel}");
    }
    assert!(load_cloud(&c.path("scored/f0003.csv")).unwrap().scores.is_some());
    let rounds = std::fs::read_to_string(c.path("sp/rounds.jsonl")).unwrap();
    assert_eq!(rounds.lines().count(), 11);
}

#[test]
fn stepwise_chain_matches_run() {
    let c = chain();
    for name in ["lidar", "image", "fused"] {
        let step = std::fs::read(c.path(&format!("{name}.jsonl"))).unwrap();
        let whole = std::fs::read(c.path(&format!("run/labels/{name}.jsonl"))).unwrap();
        assert_eq!(step, whole, "{name} labels differ between the chain and `run`");
    }
    assert_eq!(
        std::fs::read(c.path("sp/rounds.jsonl")).unwrap(),
        std::fs::read(c.path("run/selfpace/rounds.jsonl")).unwrap()
    );
}

#[test]
fn fused_labels_respect_d_min() {
    let c = chain();
    let image = load_labels(&c.path("image.jsonl")).unwrap();
    let fused = load_labels(&c.path("fused.jsonl")).unwrap();
    assert!(
        image.iter().any(|l| box_distance(&l.bbox) < 10.0),
        "scene has no near image boxes"
    );
    assert!(fused
        .iter()
        .filter(|l| l.source == Source::Image)
        .all(|l| box_distance(&l.bbox) >= 10.0));
    assert_eq!(
        fused.iter().filter(|l| l.source == Source::Lidar).count(),
        load_labels(&c.path("lidar.jsonl")).unwrap().len()
    );
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let c = chain();
    let gt = c.path("data/ground_truth.jsonl");
    let out = c.path("perfect.json");
    run(&["eval", "--pred", s(&gt), "--gt", s(&gt), "--out", s(&out)]);
    let m: serde_json::Value = read_json(&out).unwrap();
    for (bucket, v) in m["per_bucket"].as_object().unwrap() {
        if v["num_gt"].as_u64().unwrap() > 0 {
            assert_eq!(v["ap_bev"].as_f64(), Some(1.0), "bucket {bucket}");
            assert_eq!(v["ap_3d"].as_f64(), Some(1.0), "bucket {bucket}");
        }
    }
    assert_eq!(m["config"]["eval"]["iou_threshold"].as_f64(), Some(0.25));
}

#[test]
fn worker_count_does_not_change_output() {
    let c = chain();
    let manifest = c.path("data/manifest.json");
    let out = c.path("run_w1");
    run(&["run", "--workers", "1", "--manifest", s(&manifest), "--out", s(&out)]);
    for rel in [
        "labels/fused.jsonl",
        "metrics/seed_lidar.json",
        "selfpace/rounds.jsonl",
        "config.toml",
    ] {
        assert_eq!(
            std::fs::read(out.join(rel)).unwrap(),
            std::fs::read(c.path("run").join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn config_file_env_and_flags_layer() {
    let c = chain();
    let cfg = c.path("custom.toml");
    std::fs::write(&cfg, "[fusion]\nd_min = 1000.0\n").unwrap();
    let (lidar, image) = (c.path("lidar.jsonl"), c.path("image.jsonl"));

    let via_env = c.path("fused_env.jsonl");
    let out = bin()
        .env("AUTOLABEL_CONFIG", &cfg)
        .args(["fuse", "--lidar", s(&lidar), "--image", s(&image), "--out", s(&via_env)])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(load_labels(&via_env).unwrap().iter().all(|l| l.source == Source::Lidar));

    // An explicit flag beats the file.
    let via_flag = c.path("fused_flag.jsonl");
    run(&[
        "--config",
        s(&cfg),
        "fuse",
        "--d-min",
        "10",
        "--lidar",
        s(&lidar),
        "--image",
        s(&image),
        "--out",
        s(&via_flag),
    ]);
    assert_eq!(
        std::fs::read(&via_flag).unwrap(),
        std::fs::read(c.path("fused.jsonl")).unwrap()
    );
}

fn error_of(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn failures_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = bin()
        .args([
            "eval",
            "--pred",
            s(&missing),
            "--gt",
            s(&missing),
            "--out",
            s(&dir.path().join("m.json")),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["error"]["kind"], "io");

    let out = bin()
        .args([
            "--set",
            "cluster.alpha=3",
            "eval",
            "--pred",
            "a",
            "--gt",
            "b",
            "--out",
            "c",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["error"]["kind"], "config");

    let bad = dir.path().join("f0001.bin");
    std::fs::write(&bad, [0u8; 13]).unwrap();
    let out = bin()
        .args(["cluster", s(&bad), "--out", s(&dir.path().join("l.jsonl"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let e = error_of(&out);
    assert_eq!(e["error"]["kind"], "parse");
    assert!(e["error"]["message"].as_str().unwrap().contains("byte 12"));
}
