//! Experiment harness: synthetic slice stacks, augmentation, training,
//! evaluation and the three-preset ablation.

pub mod ablation;
pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod synth;
pub mod train;

pub use error::{HarnessError, Result};
