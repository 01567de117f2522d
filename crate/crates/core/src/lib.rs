//! Distractor-robust visual planning with a linear latent world model.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and threading live in the companion `reoi` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod composite;
pub mod data;
pub mod distractor;
pub mod error;
pub mod eval;
pub mod frame;
pub mod linalg;
pub mod metrics;
pub mod mpc;
pub mod rng;
pub mod sim;
pub mod trustregion;
pub mod wm;

pub use error::Error;
pub use frame::{Frame, Mask, Rect, Rgb};
