//! Posture-based intention prediction and assistive force control for
//! collaborative pushing and pulling of heavy objects, on synthetic data and
//! a simulated one-axis plant.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod dgnn;
pub mod error;
pub mod eval;
pub mod physics;
pub mod skeleton;
pub mod synth;
pub mod trial;

pub use error::{Error, Result};
