//! Training objectives.
//!
//! * [`pce_loss`]: cross-entropy averaged over scribble-labeled pixels only.
//! * [`masked_crf_loss`]: windowed pairwise CRF relaxation over the gated
//!   unlabeled pixels, with a hand-crafted Gaussian kernel on intensity and
//!   normalised location.
//! * [`attentive_similarity_loss`]: the same pairwise form on the attention
//!   grid, weighted by the learned affinity `S` and the distance decay `M`.
//! * [`total_loss`]: `pce + λ_mcrf · mcrf + λ_atn · atn`.
//!
//! The pairwise terms use `Σ_{i≠j} P_p^i P_q^j = 1 − ⟨P_p, P_q⟩`. Any loss whose
//! averaging set is empty evaluates to zero.

use scribble_autodiff::{PairWindow, Tensor};

use crate::attention::{AffinityMatrix, DistanceDecayMap};
use crate::backbone::Prediction;
use crate::error::{config_err, shape_err, CoreError, Result};
use crate::masks::{BinaryMask, GateMask, ScribbleMask};

/// Which pixel features a Gaussian kernel compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFeatures {
    /// `[I_p, x_p, y_p]`
    IntensityLocation,
    Intensity,
    Location,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub weight: f64,
    pub sigma: f64,
    pub features: KernelFeatures,
}

/// Weighted sum of Gaussian kernels. Intensities are expected in `[0, 1]` and
/// locations are normalised to `[0, 1]` per axis, so bandwidths are unitless.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    kernels: Vec<GaussianKernel>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kernels: vec![GaussianKernel {
                weight: 1.0,
                sigma: 0.1,
                features: KernelFeatures::IntensityLocation,
            }],
        }
    }
}

impl KernelSpec {
    pub fn new(kernels: Vec<GaussianKernel>) -> Result<Self> {
        for k in &kernels {
            if !(k.sigma > 0.0) || !k.sigma.is_finite() {
                return Err(config_err(format!("kernel bandwidth must be > 0, got {}", k.sigma)));
            }
            if !(k.weight >= 0.0) || !k.weight.is_finite() {
                return Err(config_err(format!("kernel weight must be >= 0, got {}", k.weight)));
            }
        }
        Ok(Self { kernels })
    }

    pub fn single(sigma: f64, features: KernelFeatures) -> Result<Self> {
        Self::new(vec![GaussianKernel {
            weight: 1.0,
            sigma,
            features,
        }])
    }

    pub fn kernels(&self) -> &[GaussianKernel] {
        &self.kernels
    }
}

/// Features of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatures {
    pub intensity: Vec<f64>,
    pub x: f64,
    pub y: f64,
}

pub fn gaussian_kernel_similarity(fp: &PixelFeatures, fq: &PixelFeatures, spec: &KernelSpec) -> f64 {
    let di: f64 = fp
        .intensity
        .iter()
        .zip(&fq.intensity)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let dl = (fp.x - fq.x) * (fp.x - fq.x) + (fp.y - fq.y) * (fp.y - fq.y);
    spec.kernels
        .iter()
        .map(|k| {
            let d2 = match k.features {
                KernelFeatures::IntensityLocation => di + dl,
                KernelFeatures::Intensity => di,
                KernelFeatures::Location => dl,
            };
            k.weight * (-d2 / (2.0 * k.sigma * k.sigma)).exp()
        })
        .sum()
}

/// Chebyshev neighbourhood: pairs with `0 < ‖q − p‖∞ < radius` interact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub radius: usize,
}

impl WindowSpec {
    pub fn new(radius: usize) -> Result<Self> {
        if radius < 1 {
            return Err(config_err("window radius must be at least 1"));
        }
        Ok(Self { radius })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_mcrf: f64,
    pub lambda_atn: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_mcrf: 0.1,
            lambda_atn: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_mcrf >= 0.0) || !(self.lambda_atn >= 0.0) {
            return Err(config_err("loss weights must be non-negative"));
        }
        Ok(())
    }
}

fn check_grid(pred: &Prediction, h: usize, w: usize, what: &str) -> Result<()> {
    if (pred.height(), pred.width()) != (h, w) {
        return Err(shape_err(format!(
            "prediction is {}x{}, {what} is {h}x{w}",
            pred.height(),
            pred.width()
        )));
    }
    Ok(())
}

/// Partial cross-entropy: `−(1/|Ω_L|) Σ_{p∈Ω_L} ln P_p^{y_p}`; zero when Ω_L is empty.
pub fn pce_loss(pred: &Prediction, scribbles: &ScribbleMask) -> Result<Tensor> {
    check_grid(pred, scribbles.height(), scribbles.width(), "scribble mask")?;
    let (c, hw) = (pred.num_classes(), scribbles.height() * scribbles.width());
    let mut idx = Vec::new();
    for p in 0..hw {
        if let Some(l) = scribbles.label(p) {
            if l as usize >= c {
                return Err(CoreError::Label {
                    label: l,
                    pixel: p,
                    num_classes: c,
                });
            }
            idx.push(l as usize * hw + p);
        }
    }
    if idx.is_empty() {
        return Ok(Tensor::scalar(0.0));
    }
    let n = idx.len() as f64;
    Ok(pred.probs.gather(&idx)?.log().sum().mul_scalar(-1.0 / n))
}

/// Features `[I_p, x_p / (W−1), y_p / (H−1)]` of every pixel of a `(C, H, W)` image.
fn pixel_features(image: &Tensor) -> Result<Vec<PixelFeatures>> {
    let (ch, h, w) = match *image.shape() {
        [c, h, w] => (c, h, w),
        _ => return Err(shape_err(format!("image must be (C, H, W), got {:?}", image.shape()))),
    };
    let hw = h * w;
    let nx = if w > 1 { (w - 1) as f64 } else { 1.0 };
    let ny = if h > 1 { (h - 1) as f64 } else { 1.0 };
    let data = image.data();
    Ok((0..hw)
        .map(|p| PixelFeatures {
            intensity: (0..ch).map(|c| data[c * hw + p]).collect(),
            x: (p % w) as f64 / nx,
            y: (p / w) as f64 / ny,
        })
        .collect())
}

fn mean_over(sum: Tensor, count: usize, what: &str) -> Tensor {
    if count == 0 {
        log::warn!("{what}: averaging set is empty, loss set to 0");
        return Tensor::scalar(0.0);
    }
    sum.mul_scalar(1.0 / count as f64)
}

/// Masked CRF loss over the gated pixels of a full-resolution prediction.
/// The kernel values are constants; gradients reach the prediction only.
pub fn masked_crf_loss(
    pred: &Prediction,
    image: &Tensor,
    gate: &GateMask,
    spec: &KernelSpec,
    window: WindowSpec,
) -> Result<Tensor> {
    let valid = gate.valid();
    let (h, w) = (valid.height(), valid.width());
    check_grid(pred, h, w, "gate mask")?;
    if image.rank() != 3 || image.shape()[1..] != [h, w] {
        return Err(shape_err(format!("image {:?} vs gate {h}x{w}", image.shape())));
    }
    WindowSpec::new(window.radius)?;
    let feats = pixel_features(image)?;
    let pairs = PairWindow::new(h, w, window.radius, valid.bits(), |p, q| {
        gaussian_kernel_similarity(&feats[p], &feats[q], spec)
    })?;
    let sum = pred.probs.pairwise_disagreement(&pairs, None)?;
    Ok(mean_over(sum, pairs.num_valid(), "masked CRF"))
}

/// Projects Ω_U onto a coarse `grid`: a cell is kept only when every
/// full-resolution pixel it covers is unlabeled.
pub fn coarse_unlabeled(scribbles: &ScribbleMask, grid: (usize, usize)) -> Result<BinaryMask> {
    let (h, w) = (scribbles.height(), scribbles.width());
    let (gh, gw) = grid;
    if gh == 0 || gw == 0 || h % gh != 0 || w % gw != 0 {
        return Err(shape_err(format!(
            "coarse grid {gh}x{gw} does not evenly divide {h}x{w}"
        )));
    }
    let (fy, fx) = (h / gh, w / gw);
    let unl = scribbles.unlabeled_mask();
    Ok(BinaryMask::from_fn(gh, gw, |cy, cx| {
        (cy * fy..(cy + 1) * fy).all(|y| (cx * fx..(cx + 1) * fx).all(|x| unl.get(y, x)))
    }))
}

/// Attentive similarity loss on the attention grid. The prediction is
/// bilinearly down-sampled to `grid`; gradients reach both the prediction and
/// the affinity `S`.
pub fn attentive_similarity_loss(
    pred: &Prediction,
    affinity: &AffinityMatrix,
    decay: &DistanceDecayMap,
    scribbles: &ScribbleMask,
    window: WindowSpec,
    grid: (usize, usize),
) -> Result<Tensor> {
    let (gh, gw) = grid;
    let hw = gh * gw;
    if affinity.num_pixels() != hw || (decay.height(), decay.width()) != grid {
        return Err(shape_err(format!(
            "grid {gh}x{gw}: affinity covers {} pixels, decay map is {}x{}",
            affinity.num_pixels(),
            decay.height(),
            decay.width()
        )));
    }
    check_grid(pred, scribbles.height(), scribbles.width(), "scribble mask")?;
    WindowSpec::new(window.radius)?;
    let valid = coarse_unlabeled(scribbles, grid)?;
    let coarse = pred.probs.bilinear_interpolate(gh, gw)?;
    let pairs = PairWindow::new(gh, gw, window.radius, valid.bits(), |p, q| decay.get(p, q))?;
    let sum = coarse.pairwise_disagreement(&pairs, Some(affinity.tensor()))?;
    Ok(mean_over(sum, pairs.num_valid(), "attentive similarity"))
}

/// Kernel and window settings for [`total_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpecs {
    pub kernel: KernelSpec,
    pub crf_window: WindowSpec,
    pub atn_window: WindowSpec,
}

impl Default for LossSpecs {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            crf_window: WindowSpec { radius: 5 },
            atn_window: WindowSpec { radius: 5 },
        }
    }
}

/// Inputs of the attentive term.
#[derive(Debug, Clone, Copy)]
pub struct AffinityInputs<'a> {
    pub affinity: &'a AffinityMatrix,
    pub decay: &'a DistanceDecayMap,
    pub grid: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: Tensor,
    pub pce: Tensor,
    /// Computed only when its weight is positive.
    pub mcrf: Option<Tensor>,
    pub atn: Option<Tensor>,
}

/// `pce + λ_mcrf · mcrf + λ_atn · atn`. Components with zero weight are skipped.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    pred: &Prediction,
    image: &Tensor,
    scribbles: &ScribbleMask,
    gate: &GateMask,
    affinity: Option<AffinityInputs<'_>>,
    weights: LossWeights,
    specs: &LossSpecs,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let pce = pce_loss(pred, scribbles)?;
    let mut total = pce.clone();
    let mut mcrf = None;
    let mut atn = None;
    if weights.lambda_mcrf > 0.0 {
        let l = masked_crf_loss(pred, image, gate, &specs.kernel, specs.crf_window)?;
        total = total.add(&l.mul_scalar(weights.lambda_mcrf))?;
        mcrf = Some(l);
    }
    if weights.lambda_atn > 0.0 {
        let a = affinity.ok_or_else(|| config_err("attentive loss weighted but no affinity given"))?;
        let l = attentive_similarity_loss(pred, a.affinity, a.decay, scribbles, specs.atn_window, a.grid)?;
        total = total.add(&l.mul_scalar(weights.lambda_atn))?;
        atn = Some(l);
    }
    Ok(LossBreakdown {
        total,
        pce,
        mcrf,
        atn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::{ClassMap, UNKNOWN};

    fn uniform(c: usize, h: usize, w: usize) -> Prediction {
        Prediction::from_probs(Tensor::from_vec(&[c, h, w], vec![1.0 / c as f64; c * h * w]).unwrap()).unwrap()
    }

    #[test]
    fn pce_of_a_single_half_probability_pixel_is_ln2() {
        let logits = Tensor::from_vec(&[2, 1, 2], vec![0.0, 3.0, 0.0, -1.0]).unwrap();
        let pred = Prediction::from_logits(logits).unwrap();
        let s = ScribbleMask::new(ClassMap::from_vec(1, 2, vec![1, UNKNOWN]).unwrap(), 2).unwrap();
        let l = pce_loss(&pred, &s).unwrap().item().unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn pce_without_labels_is_zero() {
        let s = ScribbleMask::unlabeled(2, 2, 3);
        assert_eq!(pce_loss(&uniform(3, 2, 2), &s).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn pce_rejects_labels_beyond_prediction_classes() {
        let s = ScribbleMask::new(ClassMap::from_vec(1, 2, vec![3, UNKNOWN]).unwrap(), 4).unwrap();
        assert!(matches!(pce_loss(&uniform(3, 1, 2), &s), Err(CoreError::Label { .. })));
    }

    #[test]
    fn gaussian_similarity_closed_forms() {
        let f = |i: f64, x: f64, y: f64| PixelFeatures { intensity: vec![i], x, y };
        let spec = KernelSpec::new(vec![
            GaussianKernel { weight: 0.3, sigma: 0.5, features: KernelFeatures::Intensity },
            GaussianKernel { weight: 1.2, sigma: 2.0, features: KernelFeatures::Location },
        ])
        .unwrap();
        assert!((gaussian_kernel_similarity(&f(0.2, 1.0, 3.0), &f(0.2, 1.0, 3.0), &spec) - 1.5).abs() < 1e-15);
        let one = KernelSpec::single(1.0, KernelFeatures::IntensityLocation).unwrap();
        // ‖Δf‖² = 1 + 1 = 2
        let s = gaussian_kernel_similarity(&f(0.0, 0.0, 0.0), &f(1.0, 1.0, 0.0), &one);
        assert!((s - (-1.0f64).exp()).abs() < 1e-15);
        assert!((s - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn kernel_spec_validation() {
        assert!(KernelSpec::single(0.0, KernelFeatures::Intensity).is_err());
        assert!(KernelSpec::new(vec![GaussianKernel { weight: -1.0, sigma: 1.0, features: KernelFeatures::Location }]).is_err());
        assert!(WindowSpec::new(0).is_err());
    }

    #[test]
    fn two_valid_pixels_with_uniform_prediction() {
        // only pixels 0 and 1 are valid; same intensity so s = 1
        let pred = uniform(4, 1, 3);
        let image = Tensor::from_vec(&[1, 1, 3], vec![0.5, 0.5, 0.9]).unwrap();
        let map = ClassMap::from_vec(1, 3, vec![UNKNOWN, UNKNOWN, 2]).unwrap();
        let gate = GateMask::from_scribbles(&ScribbleMask::new(map, 4).unwrap());
        let spec = KernelSpec::single(1.0, KernelFeatures::Intensity).unwrap();
        let l = masked_crf_loss(&pred, &image, &gate, &spec, WindowSpec { radius: 2 }).unwrap();
        assert!((l.item().unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn empty_gate_gives_zero() {
        let pred = uniform(2, 2, 2);
        let image = Tensor::zeros(&[1, 2, 2]);
        let map = ClassMap::from_vec(2, 2, vec![0, 1, 1, 0]).unwrap();
        let gate = GateMask::from_scribbles(&ScribbleMask::new(map, 2).unwrap());
        let l = masked_crf_loss(&pred, &image, &gate, &KernelSpec::default(), WindowSpec { radius: 3 }).unwrap();
        assert_eq!(l.item().unwrap(), 0.0);
    }

    #[test]
    fn coarse_projection_is_conservative() {
        let mut labels = vec![UNKNOWN; 16];
        labels[5] = 1; // (1,1) lies in coarse cell (0,0)
        let s = ScribbleMask::new(ClassMap::from_vec(4, 4, labels).unwrap(), 2).unwrap();
        let c = coarse_unlabeled(&s, (2, 2)).unwrap();
        assert_eq!(c.bits(), &[false, true, true, true]);
        assert!(coarse_unlabeled(&s, (3, 3)).is_err());
    }
}
