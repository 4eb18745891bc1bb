use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

fn chw(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(shape_err(
            op,
            format!("expected (C,H,W), got {:?}", t.shape()),
        )),
    }
}

/// Source taps for one output coordinate of a half-pixel bilinear resize.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(src_len: usize, dst_len: usize) -> Vec<Tap> {
    let scale = src_len as f64 / dst_len as f64;
    (0..dst_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (s.floor() as usize).min(src_len - 1);
            let hi = (lo + 1).min(src_len - 1);
            Tap {
                lo,
                hi,
                frac: s - lo as f64,
            }
        })
        .collect()
}

impl Tensor {
    /// Max pooling over `kernel`×`kernel` windows of a `(C,H,W)` tensor. Ties
    /// send the gradient to the first maximal element in row-major window order.
    pub fn max_pool2d(&self, kernel: usize, stride: usize) -> Result<Tensor> {
        let (c, h, w) = chw("max_pool2d", self)?;
        if kernel == 0 || stride == 0 || kernel > h || kernel > w {
            return Err(arg_err(
                "max_pool2d",
                format!("kernel {kernel}, stride {stride} invalid for {h}x{w}"),
            ));
        }
        let (oh, ow) = ((h - kernel) / stride + 1, (w - kernel) / stride + 1);
        let x = self.data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for ky in 0..kernel {
                        let row = (ch * h + oy * stride + ky) * w + ox * stride;
                        for i in row..row + kernel {
                            if x[i] > best || best_i == usize::MAX {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
        let n = self.numel();
        Ok(Tensor::from_op(
            "max_pool2d",
            vec![c, oh, ow],
            out,
            &[self],
            move |g, _| {
                let mut gx = vec![0.0; n];
                for (&i, gv) in argmax.iter().zip(g) {
                    gx[i] += gv;
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Bilinear resize of a `(C,H,W)` tensor to `(C,target_h,target_w)` using
    /// half-pixel centres (`align_corners = false`), clamped at the borders.
    /// Resizing to the same extent is the identity.
    pub fn bilinear_interpolate(&self, target_h: usize, target_w: usize) -> Result<Tensor> {
        let (c, h, w) = chw("bilinear_interpolate", self)?;
        if target_h == 0 || target_w == 0 || h == 0 || w == 0 {
            return Err(arg_err(
                "bilinear_interpolate",
                format!("cannot resize {h}x{w} to {target_h}x{target_w}"),
            ));
        }
        let ty = taps(h, target_h);
        let tx = taps(w, target_w);
        let x = self.data();
        let mut out = Vec::with_capacity(c * target_h * target_w);
        for ch in 0..c {
            let plane = &x[ch * h * w..(ch + 1) * h * w];
            for yt in &ty {
                for xt in &tx {
                    let top = plane[yt.lo * w + xt.lo] * (1.0 - xt.frac)
                        + plane[yt.lo * w + xt.hi] * xt.frac;
                    let bottom = plane[yt.hi * w + xt.lo] * (1.0 - xt.frac)
                        + plane[yt.hi * w + xt.hi] * xt.frac;
                    out.push(top * (1.0 - yt.frac) + bottom * yt.frac);
                }
            }
        }
        let n = self.numel();
        Ok(Tensor::from_op(
            "bilinear_interpolate",
            vec![c, target_h, target_w],
            out,
            &[self],
            move |g, _| {
                let mut gx = vec![0.0; n];
                let mut gi = g.iter();
                for ch in 0..c {
                    let plane = &mut gx[ch * h * w..(ch + 1) * h * w];
                    for yt in &ty {
                        for xt in &tx {
                            let gv = *gi.next().unwrap();
                            let (gt, gb) = (gv * (1.0 - yt.frac), gv * yt.frac);
                            plane[yt.lo * w + xt.lo] += gt * (1.0 - xt.frac);
                            plane[yt.lo * w + xt.hi] += gt * xt.frac;
                            plane[yt.hi * w + xt.lo] += gb * (1.0 - xt.frac);
                            plane[yt.hi * w + xt.hi] += gb * xt.frac;
                        }
                    }
                }
                vec![Some(gx)]
            },
        ))
    }
}
