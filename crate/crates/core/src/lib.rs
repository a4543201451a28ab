//! Stroke-patch stylization.
//!
//! Procedurally generated stroke patches ([`patchgen`]) are corrupted with
//! noise and blur ([`imageops`]) and a U-Net ([`unet`]) is trained to map
//! them back to the clean patches ([`train`]). Applied to a photograph, the
//! trained network redraws continuous-tone regions as strokes of the
//! training style.

pub mod error;
pub mod imageops;
pub mod io;
pub mod patchgen;
pub mod rng;
pub mod train;
pub mod unet;

pub use error::{CheckpointError, Error, Result};
pub use imageops::{Dims, ImageTensor, NoiseKind, NoiseSpec};
