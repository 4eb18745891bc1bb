//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Tensors are immutable values. Operations on tensors that require a gradient
//! record a node pointing at their inputs; [`Tensor::backward`] walks those
//! nodes in reverse topological order from a scalar and fills the gradient
//! buffer of every reachable tensor that requires one.
//!
//! ```
//! use scribble_autodiff::Tensor;
//!
//! let x = Tensor::param(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
//! let loss = x.mul(&x).unwrap().sum();
//! loss.backward().unwrap();
//! assert_eq!(x.grad_vec().unwrap(), vec![2.0, -4.0, 6.0, 1.0]);
//! ```
//!
//! The graph is built from `Rc` handles, so a graph lives on one thread.
//! Independent graphs may be built on independent threads.

mod error;
mod ops;
pub mod serialize;
mod tensor;

pub use error::{IoError, Result, TensorError};
pub use ops::pairwise::PairWindow;
pub use tensor::Tensor;

/// Numerically stable logistic function on a plain value.
pub fn sigmoid(v: f64) -> f64 {
    ops::sigmoid(v)
}
