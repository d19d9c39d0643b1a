//! Fit an oriented box to the two visible faces of a car-sized rectangle.
//!
//! ```text
//! cargo run --release --example box_fit
//! ```

use autolabel::boxfit::{fit_box, Criterion, FitParams};
use autolabel::geometry::{Point3, PointCloud};

fn main() -> autolabel::Result<()> {
    let (length, width, yaw) = (4.5f64, 1.8f64, 30f64.to_radians());
    let (s, c) = yaw.sin_cos();
    // Rear and left faces only, as a sensor behind-right of the car sees them.
    let mut local = Vec::new();
    for i in 0..=40 {
        let t = i as f64 / 40.0;
        local.push((-length / 2.0, (t - 0.5) * width));
        local.push(((t - 0.5) * length, width / 2.0));
    }
    let points: Vec<Point3> = local
        .iter()
        .flat_map(|&(u, v)| [0.2, 0.8, 1.4].map(|z| Point3::new(15.0 + c * u - s * v, 4.0 + s * u + c * v, z)))
        .collect();
    let cloud = PointCloud::new(points);

    println!("truth: {length:.2} x {width:.2}, yaw {:.2}°", yaw.to_degrees());
    for criterion in [Criterion::Closeness, Criterion::Area, Criterion::Variance] {
        let params = FitParams {
            criterion,
            ..FitParams::default()
        };
        let b = fit_box(&cloud, &params)?.bbox.canonical();
        println!(
            "{criterion:?}: {:.2} x {:.2} x {:.2}, yaw {:.2}°, center ({:.2}, {:.2})",
            b.length,
            b.width,
            b.height,
            b.yaw.to_degrees(),
            b.center.x,
            b.center.y
        );
    }
    Ok(())
}
