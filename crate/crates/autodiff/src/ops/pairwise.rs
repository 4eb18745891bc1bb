use std::rc::Rc;

use crate::error::{arg_err, shape_err, Result};
use crate::tensor::Tensor;

/// Constant structure of a windowed pairwise sum on an `h`×`w` grid.
///
/// Holds every ordered pair `(p, q)` of valid pixels with
/// `0 < ‖q − p‖∞ < radius`, together with a constant weight `c(p, q)`.
/// Pairs are stored grouped by `p` in raster order, and within a group in
/// raster order of `q`.
#[derive(Debug, Clone)]
pub struct PairWindow {
    height: usize,
    width: usize,
    radius: usize,
    num_valid: usize,
    // CSR layout: pairs of pixel p live in targets[starts[p]..starts[p + 1]]
    starts: Rc<[usize]>,
    targets: Rc<[(u32, f64)]>,
}

impl PairWindow {
    pub fn new(
        height: usize,
        width: usize,
        radius: usize,
        valid: &[bool],
        mut weight: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        if valid.len() != height * width {
            return Err(shape_err(
                "pair_window",
                format!("validity mask has {} entries for {height}x{width}", valid.len()),
            ));
        }
        if radius == 0 {
            return Err(arg_err("pair_window", "radius must be at least 1"));
        }
        let reach = radius as isize - 1;
        let mut starts = Vec::with_capacity(height * width + 1);
        let mut targets = Vec::new();
        starts.push(0);
        for py in 0..height as isize {
            for px in 0..width as isize {
                let p = (py * width as isize + px) as usize;
                if valid[p] {
                    for qy in (py - reach).max(0)..=(py + reach).min(height as isize - 1) {
                        for qx in (px - reach).max(0)..=(px + reach).min(width as isize - 1) {
                            let q = (qy * width as isize + qx) as usize;
                            if q != p && valid[q] {
                                targets.push((q as u32, weight(p, q)));
                            }
                        }
                    }
                }
                starts.push(targets.len());
            }
        }
        Ok(Self {
            height,
            width,
            radius,
            num_valid: valid.iter().filter(|&&v| v).count(),
            starts: starts.into(),
            targets: targets.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Number of valid pixels (the usual normaliser).
    pub fn num_valid(&self) -> usize {
        self.num_valid
    }

    pub fn num_pairs(&self) -> usize {
        self.targets.len()
    }

    /// Ordered pairs `(p, q, c(p, q))`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.height * self.width).flat_map(move |p| {
            self.targets[self.starts[p]..self.starts[p + 1]]
                .iter()
                .map(move |&(q, c)| (p, q as usize, c))
        })
    }
}

impl Tensor {
    /// Windowed label-disagreement sum over a `(C, h, w)` probability map:
    ///
    /// `Σ_p Σ_q c(p,q) · a(p,q) · (1 − Σ_i P[i,p] P[i,q])`
    ///
    /// where `(p, q, c)` ranges over the pairs of `window` and `a` is an
    /// optional `(hw, hw)` learned affinity (1 when absent). Gradients flow to
    /// the probabilities and to `a`; `c` is constant.
    pub fn pairwise_disagreement(
        &self,
        window: &PairWindow,
        affinity: Option<&Tensor>,
    ) -> Result<Tensor> {
        let (c, h, w) = match *self.shape() {
            [c, h, w] => (c, h, w),
            _ => {
                return Err(shape_err(
                    "pairwise_disagreement",
                    format!("expected (C,h,w) probabilities, got {:?}", self.shape()),
                ))
            }
        };
        if (h, w) != (window.height, window.width) {
            return Err(shape_err(
                "pairwise_disagreement",
                format!(
                    "probability grid {h}x{w} vs window grid {}x{}",
                    window.height, window.width
                ),
            ));
        }
        let hw = h * w;
        if let Some(a) = affinity {
            if a.shape() != [hw, hw] {
                return Err(shape_err(
                    "pairwise_disagreement",
                    format!("affinity {:?} for a {hw}-pixel grid", a.shape()),
                ));
            }
        }
        let prob = self.data();
        let aff = affinity.map(|a| a.data());
        let disagreement = |p: usize, q: usize| {
            let mut d = 0.0;
            for i in 0..c {
                d += prob[i * hw + p] * prob[i * hw + q];
            }
            1.0 - d
        };
        let mut total = 0.0;
        for p in 0..hw {
            let mut acc = 0.0;
            for &(q, cw) in &window.targets[window.starts[p]..window.starts[p + 1]] {
                let q = q as usize;
                let a = aff.map_or(1.0, |a| a[p * hw + q]);
                acc += cw * a * disagreement(p, q);
            }
            total += acc;
        }

        let probs = self.clone();
        let aff_t = affinity.cloned();
        let win = window.clone();
        let mut inputs = vec![self];
        inputs.extend(affinity);
        Ok(Tensor::from_op(
            "pairwise_disagreement",
            Vec::new(),
            vec![total],
            &inputs,
            move |g, _| {
                let g = g[0];
                let prob = probs.data();
                let aff = aff_t.as_ref().map(|a| a.data());
                let want_p = probs.requires_grad();
                let want_a = aff_t.as_ref().is_some_and(|a| a.requires_grad());
                let mut gp = vec![0.0; if want_p { prob.len() } else { 0 }];
                let mut ga = vec![0.0; if want_a { hw * hw } else { 0 }];
                for p in 0..hw {
                    for &(q, cw) in &win.targets[win.starts[p]..win.starts[p + 1]] {
                        let q = q as usize;
                        let a = aff.map_or(1.0, |a| a[p * hw + q]);
                        if want_a {
                            let mut d = 0.0;
                            for i in 0..c {
                                d += prob[i * hw + p] * prob[i * hw + q];
                            }
                            ga[p * hw + q] += g * cw * (1.0 - d);
                        }
                        if want_p {
                            let k = g * cw * a;
                            for i in 0..c {
                                gp[i * hw + p] -= k * prob[i * hw + q];
                                gp[i * hw + q] -= k * prob[i * hw + p];
                            }
                        }
                    }
                }
                let mut grads = vec![want_p.then_some(gp)];
                if aff_t.is_some() {
                    grads.push(want_a.then_some(ga));
                }
                grads
            },
        ))
    }
}
