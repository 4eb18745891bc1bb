use crate::error::{shape_err, Result};
use crate::tensor::{check_axis, split_axis, Tensor};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(
            op,
            format!("lhs {:?} vs rhs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn unary(
    op: &'static str,
    x: &Tensor,
    f: impl Fn(f64) -> f64,
    // derivative from (input, output)
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Tensor {
    let data: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    let xc = x.clone();
    Tensor::from_op(op, x.shape().to_vec(), data, &[x], move |g, out| {
        let gx = g
            .iter()
            .zip(xc.data())
            .zip(out)
            .map(|((g, &xi), &yi)| g * df(xi, yi))
            .collect();
        vec![Some(gx)]
    })
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            "add",
            self.shape().to_vec(),
            data,
            &[self, other],
            |g, _| vec![Some(g.to_vec()), Some(g.to_vec())],
        ))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor::from_op(
            "sub",
            self.shape().to_vec(),
            data,
            &[self, other],
            |g, _| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
        ))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a * b)
            .collect();
        let (a, b) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            "mul",
            self.shape().to_vec(),
            data,
            &[self, other],
            move |g, _| {
                let ga = a
                    .requires_grad()
                    .then(|| g.iter().zip(b.data()).map(|(g, b)| g * b).collect());
                let gb = b
                    .requires_grad()
                    .then(|| g.iter().zip(a.data()).map(|(g, a)| g * a).collect());
                vec![ga, gb]
            },
        ))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        unary("add_scalar", self, move |v| v + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Tensor {
        unary("mul_scalar", self, move |v| v * c, move |_, _| c)
    }

    pub fn neg(&self) -> Tensor {
        self.mul_scalar(-1.0)
    }

    pub fn exp(&self) -> Tensor {
        unary("exp", self, f64::exp, |_, y| y)
    }

    pub fn log(&self) -> Tensor {
        unary("log", self, f64::ln, |x, _| 1.0 / x)
    }

    pub fn sigmoid(&self) -> Tensor {
        unary("sigmoid", self, sigmoid, |_, y| y * (1.0 - y))
    }

    /// NaN inputs stay NaN.
    pub fn relu(&self) -> Tensor {
        unary(
            "relu",
            self,
            |v| if v <= 0.0 { 0.0 } else { v },
            |x, _| if x > 0.0 { 1.0 } else { 0.0 },
        )
    }

    /// Adds a 1-D `bias` along `axis` (broadcast over every other axis).
    pub fn add_along(&self, bias: &Tensor, axis: usize) -> Result<Tensor> {
        check_axis("add_along", self, axis)?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        if bias.shape() != [n] {
            return Err(shape_err(
                "add_along",
                format!(
                    "bias {:?} does not match axis {axis} of {:?}",
                    bias.shape(),
                    self.shape()
                ),
            ));
        }
        let mut data = self.to_vec();
        let b = bias.data();
        for o in 0..outer {
            for (k, bk) in b.iter().enumerate() {
                let base = (o * n + k) * inner;
                data[base..base + inner].iter_mut().for_each(|v| *v += bk);
            }
        }
        Ok(Tensor::from_op(
            "add_along",
            self.shape().to_vec(),
            data,
            &[self, bias],
            move |g, _| {
                let mut gb = vec![0.0; n];
                for o in 0..outer {
                    for (k, gbk) in gb.iter_mut().enumerate() {
                        let base = (o * n + k) * inner;
                        *gbk += g[base..base + inner].iter().sum::<f64>();
                    }
                }
                vec![Some(g.to_vec()), Some(gb)]
            },
        ))
    }

    /// Multiplies by a 1-D `scale` along `axis` (broadcast over every other axis).
    pub fn mul_along(&self, scale: &Tensor, axis: usize) -> Result<Tensor> {
        check_axis("mul_along", self, axis)?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        if scale.shape() != [n] {
            return Err(shape_err(
                "mul_along",
                format!(
                    "scale {:?} does not match axis {axis} of {:?}",
                    scale.shape(),
                    self.shape()
                ),
            ));
        }
        let mut data = self.to_vec();
        let s = scale.data();
        for o in 0..outer {
            for (k, sk) in s.iter().enumerate() {
                let base = (o * n + k) * inner;
                data[base..base + inner].iter_mut().for_each(|v| *v *= sk);
            }
        }
        let (x, sc) = (self.clone(), scale.clone());
        Ok(Tensor::from_op(
            "mul_along",
            self.shape().to_vec(),
            data,
            &[self, scale],
            move |g, _| {
                let s = sc.data();
                let xd = x.data();
                let mut gx = g.to_vec();
                let mut gs = vec![0.0; n];
                for o in 0..outer {
                    for k in 0..n {
                        let base = (o * n + k) * inner;
                        let mut acc = 0.0;
                        for i in base..base + inner {
                            acc += g[i] * xd[i];
                            gx[i] *= s[k];
                        }
                        gs[k] += acc;
                    }
                }
                vec![Some(gx), Some(gs)]
            },
        ))
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
