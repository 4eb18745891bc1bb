use crate::error::{arg_err, shape_err, Result};
use crate::ops::linalg::{gemm, gemm_nt, gemm_tn};
use crate::tensor::Tensor;

/// Sliding-window geometry shared by convolution and its transpose.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Visits every (column-matrix index, image index) pair that lies inside the
    /// image; padded positions are skipped (they read as zero).
    #[inline]
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let n = self.cols();
        for c in 0..self.channels {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let img_row = (c * self.height + iy as usize) * self.width;
                        let col_row = row * n + oy * self.out_w;
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.width as isize {
                                continue;
                            }
                            f(col_row + ox, img_row + ix as usize);
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, img: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.rows() * self.cols()];
        self.for_each(|ci, ii| cols[ci] = img[ii]);
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let mut img = vec![0.0; self.channels * self.height * self.width];
        self.for_each(|ci, ii| img[ii] += cols[ci]);
        img
    }
}

fn out_extent(op: &'static str, len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(arg_err(op, "stride must be positive"));
    }
    let padded = len + 2 * pad;
    if padded < k {
        return Err(shape_err(
            op,
            format!("kernel {k} larger than padded extent {padded}"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

fn check_bias(op: &'static str, bias: Option<&Tensor>, channels: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [channels] => Err(shape_err(
            op,
            format!("bias {:?} for {channels} output channels", b.shape()),
        )),
        _ => Ok(()),
    }
}

fn add_bias(out: &mut [f64], bias: Option<&Tensor>, plane: usize) {
    if let Some(b) = bias {
        for (chunk, bv) in out.chunks_mut(plane).zip(b.data()) {
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn bias_grad(g: &[f64], plane: usize) -> Vec<f64> {
    g.chunks(plane).map(|c| c.iter().sum()).collect()
}

impl Tensor {
    /// 2-D cross-correlation of a `(C_in, H, W)` input with `(C_out, C_in, kh, kw)`
    /// weights, zero padding `pad` on every side.
    pub fn conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor> {
        if self.rank() != 3 || weight.rank() != 4 || weight.shape()[1] != self.shape()[0] {
            return Err(shape_err(
                "conv2d",
                format!(
                    "input {:?} with weight {:?}: need (C_in,H,W) and (C_out,C_in,kh,kw)",
                    self.shape(),
                    weight.shape()
                ),
            ));
        }
        let (cin, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (cout, kh, kw) = (weight.shape()[0], weight.shape()[2], weight.shape()[3]);
        check_bias("conv2d", bias, cout)?;
        let geo = Geometry {
            channels: cin,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            pad,
            out_h: out_extent("conv2d", h, kh, stride, pad)?,
            out_w: out_extent("conv2d", w, kw, stride, pad)?,
        };
        let (k, n) = (geo.rows(), geo.cols());
        let cols = geo.im2col(self.data());
        let mut out = vec![0.0; cout * n];
        gemm(weight.data(), &cols, &mut out, cout, k, n);
        add_bias(&mut out, bias, n);

        let (x, wt) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        Ok(Tensor::from_op(
            "conv2d",
            vec![cout, geo.out_h, geo.out_w],
            out,
            &inputs,
            move |g, _| {
                let gx = x.requires_grad().then(|| {
                    let mut dcols = vec![0.0; k * n];
                    gemm_tn(wt.data(), g, &mut dcols, k, cout, n);
                    geo.col2im(&dcols)
                });
                let gw = wt.requires_grad().then(|| {
                    let cols = geo.im2col(x.data());
                    let mut gw = vec![0.0; cout * k];
                    gemm_nt(g, &cols, &mut gw, cout, n, k);
                    gw
                });
                let mut grads = vec![gx, gw];
                if has_bias {
                    grads.push(Some(bias_grad(g, n)));
                }
                grads
            },
        ))
    }

    /// Transposed convolution (the adjoint of [`Tensor::conv2d`] with the same
    /// geometry). Weights are `(C_in, C_out, kh, kw)`; the output extent is
    /// `(H - 1) * stride - 2 * pad + kh`.
    pub fn transposed_conv2d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor> {
        if self.rank() != 3 || weight.rank() != 4 || weight.shape()[0] != self.shape()[0] {
            return Err(shape_err(
                "transposed_conv2d",
                format!(
                    "input {:?} with weight {:?}: need (C_in,H,W) and (C_in,C_out,kh,kw)",
                    self.shape(),
                    weight.shape()
                ),
            ));
        }
        if stride == 0 {
            return Err(arg_err("transposed_conv2d", "stride must be positive"));
        }
        let (cin, h, w) = (self.shape()[0], self.shape()[1], self.shape()[2]);
        let (cout, kh, kw) = (weight.shape()[1], weight.shape()[2], weight.shape()[3]);
        check_bias("transposed_conv2d", bias, cout)?;
        let full_h = (h - 1) * stride + kh;
        let full_w = (w - 1) * stride + kw;
        if full_h <= 2 * pad || full_w <= 2 * pad {
            return Err(shape_err(
                "transposed_conv2d",
                format!("padding {pad} consumes the whole output"),
            ));
        }
        // Geometry of the forward convolution whose adjoint this is: it maps the
        // output image back onto the (h, w) input grid.
        let geo = Geometry {
            channels: cout,
            height: full_h - 2 * pad,
            width: full_w - 2 * pad,
            kh,
            kw,
            stride,
            pad,
            out_h: h,
            out_w: w,
        };
        let (k, n) = (geo.rows(), geo.cols());
        let mut cols = vec![0.0; k * n];
        gemm_tn(weight.data(), self.data(), &mut cols, k, cin, n);
        let mut out = geo.col2im(&cols);
        let plane = geo.height * geo.width;
        add_bias(&mut out, bias, plane);

        let (x, wt) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        Ok(Tensor::from_op(
            "transposed_conv2d",
            vec![cout, geo.height, geo.width],
            out,
            &inputs,
            move |g, _| {
                let dcols = geo.im2col(g);
                let gx = x.requires_grad().then(|| {
                    let mut gx = vec![0.0; cin * n];
                    gemm(wt.data(), &dcols, &mut gx, cin, k, n);
                    gx
                });
                let gw = wt.requires_grad().then(|| {
                    let mut gw = vec![0.0; cin * k];
                    gemm_nt(x.data(), &dcols, &mut gw, cin, n, k);
                    gw
                });
                let mut grads = vec![gx, gw];
                if has_bias {
                    grads.push(Some(bias_grad(g, plane)));
                }
                grads
            },
        ))
    }
}
