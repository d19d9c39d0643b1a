//! Merge LiDAR and image labels: LiDAR boxes are kept, image boxes only
//! beyond `d_min`.
//!
//! ```text
//! cargo run --release --example fusion
//! ```

use autolabel::fusion::{box_distance, fuse_labels, FusionParams, Label, Source};
use autolabel::geometry::{OrientedBox, Point3};

fn label(x: f64, y: f64, source: Source) -> autolabel::Result<Label> {
    Label::new(
        OrientedBox::new(Point3::new(x, y, -0.9), 4.4, 1.8, 1.5, 0.1)?,
        source,
        1.0,
        0,
    )
}

fn main() -> autolabel::Result<()> {
    let lidar = vec![label(7.0, 2.0, Source::Lidar)?, label(18.0, -3.0, Source::Lidar)?];
    let image = vec![
        label(7.2, 2.1, Source::Image)?,
        label(12.0, 5.0, Source::Image)?,
        label(55.0, -8.0, Source::Image)?,
    ];
    for d_min in [0.0, 10.0, 60.0] {
        let fused = fuse_labels(
            &lidar,
            &image,
            &FusionParams {
                d_min,
                ..FusionParams::default()
            },
        )?;
        let parts: Vec<String> = fused
            .iter()
            .map(|l| format!("{:?}@{:.1}m", l.source, box_distance(&l.bbox)))
            .collect();
        println!("d_min {d_min:>4}: {}", parts.join(", "));
    }
    Ok(())
}
