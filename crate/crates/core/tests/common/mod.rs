#![allow(dead_code)]

use scribble_autodiff::Tensor;
use scribble_core::params::ParamSet;
use scribble_testkit::{fd, rng, sample_indices, uniform_vec};

pub const STEP: f64 = 1e-5;

/// Finite-difference check of `loss` with respect to every tensor in `ps`.
/// `per_tensor` limits the coordinates sampled from each tensor. The absolute
/// floor of the relative error scales with the loss value, which bounds the
/// round-off in the differences.
pub fn check_params(ps: &ParamSet, per_tensor: Option<usize>, loss: impl Fn(&ParamSet) -> Tensor) -> fd::GradReport {
    ps.zero_grads();
    let l = loss(ps);
    let floor = 1e-5 * l.item().unwrap().abs().max(1.0);
    l.backward().unwrap();
    let analytic = ps.flat_grads();
    let x = ps.flatten();
    let mut coords = Vec::new();
    let mut off = 0;
    for (i, (_, t)) in ps.iter().enumerate() {
        let n = t.numel();
        let picks = match per_tensor {
            Some(k) => sample_indices(&mut rng(1000 + i as u64), n, k),
            None => (0..n).collect(),
        };
        coords.extend(picks.into_iter().map(|j| off + j));
        off += n;
    }
    let eval = |v: &[f64]| loss(&ps.with_flat(v).unwrap()).item().unwrap();
    fd::check(eval, &x, &analytic, &coords, STEP, floor)
}

/// Replaces every bias (`*.b`) with small random values. Zero biases put
/// pre-activations exactly on the ReLU kink wherever the input is dead, where
/// finite differences are one-sided.
pub fn jitter_biases(ps: &mut ParamSet, seed: u64) {
    let biases: Vec<(String, Vec<usize>)> = ps
        .iter()
        .filter(|(n, _)| n.ends_with(".b"))
        .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
        .collect();
    for (i, (name, shape)) in biases.into_iter().enumerate() {
        let n = shape.iter().product();
        ps.insert(name, &shape, uniform_vec(&mut rng(seed + i as u64), n, -0.1, 0.1)).unwrap();
    }
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "{what}[{i}]: {x} vs {y}");
    }
}
