use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

impl Tensor {
    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let s = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op("sum", Vec::new(), vec![s], &[self], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1);
        self.sum().mul_scalar(1.0 / n as f64)
    }

    /// Sum over the elements where `mask` is true. The mask is a constant.
    pub fn masked_sum(&self, mask: &[bool]) -> Result<Tensor> {
        if mask.len() != self.numel() {
            return Err(shape_err(
                "masked_sum",
                format!("mask has {} entries, tensor {:?}", mask.len(), self.shape()),
            ));
        }
        let s = self
            .data()
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| v)
            .sum();
        let mask = mask.to_vec();
        Ok(Tensor::from_op(
            "masked_sum",
            Vec::new(),
            vec![s],
            &[self],
            move |g, _| {
                let gx = mask
                    .iter()
                    .map(|&m| if m { g[0] } else { 0.0 })
                    .collect();
                vec![Some(gx)]
            },
        ))
    }

    /// Picks elements by flat (row-major) index into a 1-D tensor.
    pub fn gather(&self, indices: &[usize]) -> Result<Tensor> {
        let n = self.numel();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(arg_err(
                "gather",
                format!("index {bad} out of bounds for {n} elements"),
            ));
        }
        let data = indices.iter().map(|&i| self.data()[i]).collect();
        let idx = indices.to_vec();
        Ok(Tensor::from_op(
            "gather",
            vec![indices.len()],
            data,
            &[self],
            move |g, _| {
                let mut gx = vec![0.0; n];
                for (&i, gi) in idx.iter().zip(g) {
                    gx[i] += gi;
                }
                vec![Some(gx)]
            },
        ))
    }
}
