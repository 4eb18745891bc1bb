use crate::error::{arg_err, shape_err, Result, TensorError};
use crate::tensor::{check_axis, split_axis, strides, Tensor};

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(shape_err(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape()),
            ));
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            &[self],
            |g, _| vec![Some(g.to_vec())],
        ))
    }

    /// Permutes axes: output axis `i` is input axis `axes[i]`.
    pub fn transpose(&self, axes: &[usize]) -> Result<Tensor> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank
            || axes
                .iter()
                .any(|&a| a >= rank || std::mem::replace(&mut seen[a], true))
        {
            return Err(arg_err(
                "transpose",
                format!("{axes:?} is not a permutation of {rank} axes"),
            ));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
        let in_strides = strides(&in_shape);
        // input stride for each output axis
        let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let perm = permutation_map(&out_shape, &src_strides);
        let data = perm.iter().map(|&i| self.data()[i]).collect();
        let n = self.numel();
        Ok(Tensor::from_op(
            "transpose",
            out_shape,
            data,
            &[self],
            move |g, _| {
                let mut gx = vec![0.0; n];
                for (o, &i) in perm.iter().enumerate() {
                    gx[i] = g[o];
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Concatenates tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| arg_err("concat", "no tensors given"))?;
        check_axis("concat", first, axis)?;
        for p in &parts[1..] {
            let compatible = p.rank() == first.rank()
                && p
                    .shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err(
                    "concat",
                    format!(
                        "{:?} vs {:?} disagree off axis {axis}",
                        first.shape(),
                        p.shape()
                    ),
                ));
            }
        }
        let (outer, _, inner) = split_axis(first.shape(), axis);
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total;

        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&lens) {
                let chunk = len * inner;
                data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        Ok(Tensor::from_op("concat", shape, data, parts, move |g, _| {
            let mut grads: Vec<Vec<f64>> = lens
                .iter()
                .map(|&l| Vec::with_capacity(outer * l * inner))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &len) in grads.iter_mut().zip(&lens) {
                    let chunk = len * inner;
                    gp.extend_from_slice(&g[off..off + chunk]);
                    off += chunk;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        check_axis("slice", self, axis)?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        if start > end || end > n {
            return Err(TensorError::InvalidArgument {
                op: "slice",
                detail: format!("range {start}..{end} invalid for axis {axis} of length {n}"),
            });
        }
        let len = end - start;
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&self.data()[base..base + len * inner]);
        }
        let total = self.numel();
        Ok(Tensor::from_op("slice", shape, data, &[self], move |g, _| {
            let mut gx = vec![0.0; total];
            for o in 0..outer {
                let base = (o * n + start) * inner;
                gx[base..base + len * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }
}

/// For each output element (row-major over `out_shape`), the flat source index.
fn permutation_map(out_shape: &[usize], src_strides: &[usize]) -> Vec<usize> {
    let n: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(n);
    if n == 0 {
        return map;
    }
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..n {
        map.push(src);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    map
}
