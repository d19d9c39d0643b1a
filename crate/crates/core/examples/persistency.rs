//! Score one synthetic frame against its other traversals and compare the
//! mean persistency of each surface kind.
//!
//! ```text
//! cargo run --release --example persistency
//! ```

use std::collections::BTreeMap;

use autolabel::persistency::PersistencyParams;
use autolabel::pipeline::score_frame;
use autolabel::synth::{generate, SceneSpec, Surface};

fn main() -> autolabel::Result<()> {
    let spec = SceneSpec {
        frames: 1,
        eval_frames: 0,
        ..SceneSpec::default()
    };
    let frame = &generate(&spec)?.frames[0];
    let scored = score_frame(&frame.frame_data(), &PersistencyParams::default())?;
    let scores = scored.scores.as_deref().unwrap_or_default();

    let mut by_kind: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (tau, surface) in scores.iter().zip(&frame.scans[0].surfaces) {
        let kind = match surface {
            Surface::Ground => "ground",
            Surface::Wall => "wall",
            Surface::Pillar => "pillar",
            Surface::Object(_) => "object",
        };
        let e = by_kind.entry(kind).or_default();
        e.0 += tau;
        e.1 += 1;
    }
    println!("{} points, {} traversals", scored.len(), frame.scans.len());
    for (kind, (sum, n)) in by_kind {
        println!("  {kind:<7} mean τ {:.3} over {n} points", sum / n as f64);
    }
    Ok(())
}
