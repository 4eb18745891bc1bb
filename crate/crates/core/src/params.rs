//! Named trainable parameters.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use scribble_autodiff::Tensor;

use crate::error::{CoreError, Result};

/// Ordered map from parameter id to a gradient-tracking leaf tensor.
///
/// Iteration order is the lexicographic order of the ids, which makes
/// checkpoints and optimiser updates deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts (or replaces) a parameter. The stored tensor is a fresh leaf
    /// that requires a gradient.
    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Result<()> {
        let t = Tensor::param(shape, data)?;
        self.entries.insert(name.into(), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| CoreError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&self) {
        self.entries.values().for_each(Tensor::zero_grad);
    }

    /// Merges `other` into `self`; ids in `other` win.
    pub fn extend(&mut self, other: ParamSet) {
        self.entries.extend(other.entries);
    }

    /// Concatenation of all values in id order.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries.values().flat_map(|t| t.to_vec()).collect()
    }

    /// Inverse of [`ParamSet::flatten`]: same ids and shapes, new values.
    pub fn with_flat(&self, values: &[f64]) -> Result<ParamSet> {
        if values.len() != self.num_scalars() {
            return Err(CoreError::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_scalars()
            )));
        }
        let mut out = ParamSet::new();
        let mut off = 0;
        for (name, t) in &self.entries {
            let n = t.numel();
            out.insert(name.clone(), t.shape(), values[off..off + n].to_vec())?;
            off += n;
        }
        Ok(out)
    }

    /// Gradients in id order; parameters that received none contribute zeros.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.entries
            .values()
            .flat_map(|t| t.grad_vec().unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect()
    }
}

/// He-normal initialisation: `N(0, 2 / fan_in)`.
pub(crate) fn he_normal(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    normal(rng, n, (2.0 / fan_in.max(1) as f64).sqrt())
}

/// Glorot-uniform initialisation.
pub(crate) fn glorot_uniform(rng: &mut impl Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

pub(crate) fn normal(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    let d = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| d.sample(rng)).collect()
}
