//! Generate a synthetic scene, write it to disk, run the whole chain from
//! the written files and print seed-label quality and self-paced progress.
//!
//! ```text
//! cargo run --release --example end_to_end [OUT_DIR]
//! ```

use std::path::PathBuf;

use autolabel::config::Config;
use autolabel::io::load_dataset;
use autolabel::pipeline::{run_pipeline, write_run};
use autolabel::synth::{generate, write_scene, SceneSpec};

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.3}"))
}

fn main() -> autolabel::Result<()> {
    env_logger::init();
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("autolabel-e2e"));
    let scene = generate(&SceneSpec::default())?;
    let manifest = write_scene(&scene, &out.join("data"))?;
    let dataset = load_dataset(&manifest)?;
    let config = Config::default();
    let run = run_pipeline(&dataset, &config)?;
    write_run(&out.join("run"), &run, &config)?;

    println!("seed labels vs ground truth (BEV recall / AP_BEV per bucket)");
    for (name, report) in [
        ("lidar", &run.seed_metrics.lidar),
        ("image", &run.seed_metrics.image),
        ("fused", &run.seed_metrics.fused),
    ] {
        let cells: Vec<String> = report
            .buckets
            .iter()
            .map(|b| {
                format!(
                    "{} {}/{} (n={})",
                    b.bucket.name(),
                    fmt(b.recall_bev),
                    fmt(b.ap_bev),
                    b.num_pred
                )
            })
            .collect();
        println!("  {name:<6} {}", cells.join("  "));
    }
    println!("self-paced rounds (skills: near-large near-small far-large far-small)");
    for r in &run.selfpace.reports {
        let w: Vec<String> = r.weights.iter().map(|x| format!("{x:.3}")).collect();
        let rr = r.r.map(|r| format!("{:.3}", r[3])).unwrap_or("-".into());
        println!(
            "  round {:>2}  skills [{}]  R(far-small) {rr}  AP_BEV {}  far-small recall {}",
            r.round,
            w.join(" "),
            fmt(r.metrics.ap_bev),
            fmt(r.metrics.group_recall[3]),
        );
    }
    println!("outputs under {}", out.display());
    Ok(())
}
