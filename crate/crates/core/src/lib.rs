//! 3D auto-labeling from repeated LiDAR traversals and 2D instance masks,
//! followed by self-paced detector training.
//!
//! Runnable walkthroughs live in `examples/`:
//! `persistency`, `clustering`, `box_fit`, `image_lift`, `fusion`,
//! `self_paced`, `evaluation` and `end_to_end`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boxfit;
pub mod clustering;
pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod lift;
pub mod persistency;
pub mod pipeline;
pub mod rng;
pub mod selfpace;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
