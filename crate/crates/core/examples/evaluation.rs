//! Score noisy predictions against ground truth with rotated IoU and
//! 40-point interpolated AP per distance bucket.
//!
//! ```text
//! cargo run --release --example evaluation
//! ```

use autolabel::eval::{evaluate, EvalConfig};
use autolabel::fusion::{Label, Source};
use autolabel::geometry::{OrientedBox, Point3};

fn main() -> autolabel::Result<()> {
    let mut gt = Vec::new();
    let mut preds = Vec::new();
    for i in 0..24 {
        let d = 5.0 + 3.0 * i as f64;
        let bearing = (i as f64 * 0.7).sin() * 0.5;
        let b = OrientedBox::new(
            Point3::new(d * bearing.cos(), d * bearing.sin(), -0.9),
            4.4,
            1.8,
            1.5,
            bearing,
        )?;
        gt.push(Label::new(b, Source::Truth, 1.0, 0)?);
        // Predictions drift further from the truth with distance.
        let err = 0.03 * d;
        let p = OrientedBox::new(
            Point3::new(b.center.x + err, b.center.y - err, b.center.z),
            b.length * (1.0 + err / 10.0),
            b.width,
            b.height,
            b.yaw + err / 5.0,
        )?;
        preds.push(Label::new(p, Source::Model, 1.0 - d / 100.0, 0)?);
    }
    let report = evaluate(&preds, &gt, &EvalConfig::default())?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    println!(
        "{:<10} {:>4} {:>7} {:>7} {:>7}",
        "bucket", "gt", "AP_BEV", "AP_3D", "recall"
    );
    for b in &report.buckets {
        println!(
            "{:<10} {:>4} {:>7} {:>7} {:>7}",
            b.bucket.name(),
            b.num_gt,
            fmt(b.ap_bev),
            fmt(b.ap_3d),
            fmt(b.recall_bev)
        );
    }
    Ok(())
}
