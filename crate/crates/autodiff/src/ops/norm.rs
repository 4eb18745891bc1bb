use crate::error::Result;
use crate::tensor::{check_axis, split_axis, Tensor};

/// Calls `f(offset, stride, len)` for every 1-D lane along `axis`.
fn for_lanes(shape: &[usize], axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    let (outer, n, inner) = split_axis(shape, axis);
    for o in 0..outer {
        for i in 0..inner {
            f(o * n * inner + i, inner, n);
        }
    }
}

impl Tensor {
    /// Softmax along `axis` (max-shifted for stability).
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis("softmax", self, axis)?;
        let shape = self.shape().to_vec();
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for_lanes(&shape, axis, |off, st, n| {
            let m = (0..n)
                .map(|j| x[off + j * st])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..n {
                let e = (x[off + j * st] - m).exp();
                out[off + j * st] = e;
                z += e;
            }
            for j in 0..n {
                out[off + j * st] /= z;
            }
        });
        let bshape = shape.clone();
        Ok(Tensor::from_op("softmax", shape, out, &[self], move |g, y| {
            let mut gx = vec![0.0; y.len()];
            for_lanes(&bshape, axis, |off, st, n| {
                let d: f64 = (0..n).map(|j| g[off + j * st] * y[off + j * st]).sum();
                for j in 0..n {
                    let i = off + j * st;
                    gx[i] = y[i] * (g[i] - d);
                }
            });
            vec![Some(gx)]
        }))
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        check_axis("log_softmax", self, axis)?;
        let shape = self.shape().to_vec();
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for_lanes(&shape, axis, |off, st, n| {
            let m = (0..n)
                .map(|j| x[off + j * st])
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = m + (0..n).map(|j| (x[off + j * st] - m).exp()).sum::<f64>().ln();
            for j in 0..n {
                out[off + j * st] = x[off + j * st] - lse;
            }
        });
        let bshape = shape.clone();
        Ok(Tensor::from_op(
            "log_softmax",
            shape,
            out,
            &[self],
            move |g, y| {
                let mut gx = vec![0.0; y.len()];
                for_lanes(&bshape, axis, |off, st, n| {
                    let gs: f64 = (0..n).map(|j| g[off + j * st]).sum();
                    for j in 0..n {
                        let i = off + j * st;
                        gx[i] = g[i] - y[i].exp() * gs;
                    }
                });
                vec![Some(gx)]
            },
        ))
    }

    /// Normalises every lane along `axis` to zero mean and unit (biased)
    /// variance. No affine part; compose with `mul_along`/`add_along`.
    pub fn layer_norm(&self, axis: usize, eps: f64) -> Result<Tensor> {
        check_axis("layer_norm", self, axis)?;
        let shape = self.shape().to_vec();
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut inv_std = Vec::with_capacity(outer * inner);
        for_lanes(&shape, axis, |off, st, n| {
            let nf = n as f64;
            let mean = (0..n).map(|j| x[off + j * st]).sum::<f64>() / nf;
            let var = (0..n)
                .map(|j| (x[off + j * st] - mean).powi(2))
                .sum::<f64>()
                / nf;
            let is = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                out[off + j * st] = (x[off + j * st] - mean) * is;
            }
            inv_std.push(is);
        });
        let bshape = shape.clone();
        Ok(Tensor::from_op(
            "layer_norm",
            shape,
            out,
            &[self],
            move |g, y| {
                let mut gx = vec![0.0; y.len()];
                let mut lane = 0;
                for_lanes(&bshape, axis, |off, st, n| {
                    let nf = n as f64;
                    let mg = (0..n).map(|j| g[off + j * st]).sum::<f64>() / nf;
                    let mgy = (0..n)
                        .map(|j| g[off + j * st] * y[off + j * st])
                        .sum::<f64>()
                        / nf;
                    let is = inv_std[lane];
                    for j in 0..n {
                        let i = off + j * st;
                        gx[i] = is * (g[i] - mg - y[i] * mgy);
                    }
                    lane += 1;
                });
                vec![Some(gx)]
            },
        ))
    }
}
