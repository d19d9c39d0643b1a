//! Lift each instance mask of a synthetic frame into a 3D box and compare
//! it with the object the mask came from.
//!
//! ```text
//! cargo run --release --example image_lift
//! ```

use autolabel::boxfit::FitParams;
use autolabel::eval::bev_iou;
use autolabel::fusion::box_distance;
use autolabel::lift::{lift_mask_to_box, LiftParams};
use autolabel::synth::{generate, SceneSpec};

fn main() -> autolabel::Result<()> {
    let spec = SceneSpec {
        frames: 1,
        eval_frames: 0,
        ..SceneSpec::default()
    };
    let frame = &generate(&spec)?.frames[0];
    let cloud = &frame.scans[0].cloud;
    let gt = frame.ground_truth();
    println!("{} masks, {} objects in view", frame.masks.len(), gt.len());
    for (i, mask) in frame.masks.iter().enumerate() {
        let lifted = lift_mask_to_box(
            cloud,
            &frame.camera,
            mask,
            &LiftParams::default(),
            &FitParams::default(),
        )?;
        match lifted {
            Some(l) => {
                let b = l.bbox;
                let best = gt.iter().map(|g| bev_iou(&b, g)).fold(0.0, f64::max);
                println!(
                    "  mask {i:>2} ({:>5} px, {}): {:>4} points, box at {:5.1} m, {:.2} x {:.2}, best BEV IoU {best:.2}",
                    mask.area(),
                    mask.label.as_deref().unwrap_or("?"),
                    l.support.len(),
                    box_distance(&b),
                    b.length,
                    b.width
                );
            }
            None => println!("  mask {i:>2}: too few points in the frustum"),
        }
    }
    Ok(())
}
