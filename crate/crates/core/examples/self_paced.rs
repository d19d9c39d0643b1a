//! Self-paced training of the synthetic learner on seed labels that miss
//! most far, small objects, with and without group-balanced resampling.
//!
//! ```text
//! cargo run --release --example self_paced
//! ```

use autolabel::eval::EvalConfig;
use autolabel::fusion::box_distance;
use autolabel::geometry::{OrientedBox, Point3};
use autolabel::rng::keyed_uniform;
use autolabel::selfpace::{run_self_paced, GroupThresholds, LatentFrame, RoundConfig, SelfPacedData, SyntheticLearner};

fn frame(id: u32) -> autolabel::Result<LatentFrame> {
    let mut objects = Vec::new();
    // 6 near-large, 6 near-small, 6 far-large, 2 far-small.
    for k in 0..20u64 {
        let u = |salt| keyed_uniform(&[id as u64, k, salt]);
        let far = k >= 12;
        let small = (6..12).contains(&k) || k >= 18;
        let d = if far { 35.0 + 40.0 * u(0) } else { 6.0 + 20.0 * u(0) };
        let phi = (u(1) - 0.5) * 1.2;
        let (l, w) = if small { (0.7, 0.6) } else { (4.4, 1.8) };
        objects.push(OrientedBox::new(
            Point3::new(d * phi.cos(), d * phi.sin(), -0.9),
            l,
            w,
            1.6,
            u(2) * 3.0,
        )?);
    }
    Ok(LatentFrame { id, objects })
}

fn main() -> autolabel::Result<()> {
    let train: Vec<LatentFrame> = (0..15).map(frame).collect::<autolabel::Result<_>>()?;
    let eval: Vec<LatentFrame> = (15..45).map(frame).collect::<autolabel::Result<_>>()?;
    // Seed labels: everything near, and only the closest far objects.
    let seed_labels = train
        .iter()
        .flat_map(|f| f.ground_truth())
        .filter(|l| box_distance(&l.bbox) < 45.0)
        .collect();
    let data = SelfPacedData {
        seed_labels,
        train_frames: train,
        eval_frames: eval,
    };
    let learner = SyntheticLearner::default();
    for adaptive in [true, false] {
        let config = RoundConfig {
            adaptive_sampling: adaptive,
            ..RoundConfig::default()
        };
        let run = run_self_paced(
            &data,
            &learner,
            &config,
            &GroupThresholds::default(),
            &EvalConfig::default(),
            7,
        )?;
        println!("adaptive sampling {}", if adaptive { "on" } else { "off" });
        for r in &run.reports {
            let skills: Vec<String> = r.weights.iter().map(|s| format!("{s:.3}")).collect();
            let recall = r.metrics.group_recall[3].map_or("-".into(), |v| format!("{v:.2}"));
            let rate = r.r.map_or("-".into(), |r| format!("{:.3}", r[3]));
            println!(
                "  round {:>2}  skills [{}]  R(far-small) {rate}  far-small recall {recall}",
                r.round,
                skills.join(" ")
            );
        }
    }
    Ok(())
}
