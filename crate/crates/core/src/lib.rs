//! Scribble-supervised segmentation.
//!
//! A small U-shaped FCN ([`backbone`]) optionally carries a spatial
//! self-attention module ([`attention`]) whose scores are turned into a pixel
//! affinity matrix. Training combines partial cross-entropy on scribbled
//! pixels with two pairwise regularisers on the unlabeled ones ([`losses`]).
//! [`scribblesim`] derives synthetic scribbles from dense masks and
//! [`metrics`] scores predicted volumes.

pub mod attention;
pub mod backbone;
mod error;
pub mod losses;
pub mod masks;
pub mod metrics;
pub mod params;
pub mod scribblesim;

pub use error::{CoreError, Result};
