//! Cluster a scored synthetic frame, drop static clusters and fit a box to
//! each remaining one.
//!
//! ```text
//! cargo run --release --example clustering
//! ```

use autolabel::boxfit::FitParams;
use autolabel::clustering::{build_graph, clusters_from_labels, foreground_clusters, graph_dbscan, ClusterParams};
use autolabel::eval::bev_iou;
use autolabel::persistency::PersistencyParams;
use autolabel::pipeline::{lidar_labels, score_frame};
use autolabel::synth::{generate, SceneSpec};

fn main() -> autolabel::Result<()> {
    let spec = SceneSpec {
        frames: 1,
        eval_frames: 0,
        ..SceneSpec::default()
    };
    let frame = &generate(&spec)?.frames[0];
    let scored = score_frame(&frame.frame_data(), &PersistencyParams::default())?;
    let params = ClusterParams::default();

    let graph = build_graph(&scored, params.r_t)?;
    let all = clusters_from_labels(&graph_dbscan(&graph, params.score_eps, params.min_pts));
    let foreground = foreground_clusters(&scored, &params)?;
    println!(
        "{} points, {} edges, {} clusters, {} after static filtering",
        scored.len(),
        graph.edge_count(),
        all.len(),
        foreground.len()
    );

    let gt = frame.ground_truth();
    for label in lidar_labels(&scored, &params, &FitParams::default(), frame.id)? {
        let b = label.bbox;
        let best = gt.iter().map(|g| bev_iou(&b, g)).fold(0.0, f64::max);
        println!(
            "  box at ({:6.1}, {:6.1})  {:.2} x {:.2} x {:.2}  best BEV IoU with truth {best:.2}",
            b.center.x, b.center.y, b.length, b.width, b.height
        );
    }
    Ok(())
}
