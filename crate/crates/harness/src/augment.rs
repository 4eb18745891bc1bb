//! Rotation/flip augmentation with margin tracking, and resizing.

use rand::Rng;
use scribble_core::masks::{BinaryMask, ClassMap, ScribbleMask, UNKNOWN};

use crate::error::Result;

/// Slack when deciding whether an inverse-mapped coordinate left the image.
const EDGE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Rotation angle is drawn uniformly from `[-max, max]` degrees.
    pub max_rotation_deg: f64,
    /// Horizontal flips with probability 1/2. Off by default because left and
    /// right structures can be confused once mirrored.
    pub flip: bool,
    /// Square side every slice is resized to before training; `None` keeps
    /// the stored size.
    pub resize: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 15.0,
            flip: false,
            resize: None,
        }
    }
}

/// What was done to one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentRecord {
    /// Radians, counter-clockwise in image coordinates.
    pub angle: f64,
    pub flip: bool,
    /// Pixels with no preimage inside the original field of view.
    pub margin: BinaryMask,
}

/// Inverse rotation about the image centre: output `(y, x)` to source `(sy, sx)`.
fn source_coords(y: usize, x: usize, h: usize, w: usize, sin: f64, cos: f64) -> (f64, f64) {
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
    (-sin * dx + cos * dy + cy, cos * dx + sin * dy + cx)
}

fn outside(sy: f64, sx: f64, h: usize, w: usize) -> bool {
    sx < -EDGE_EPS || sy < -EDGE_EPS || sx > w as f64 - 1.0 + EDGE_EPS || sy > h as f64 - 1.0 + EDGE_EPS
}

/// Bilinear sample with edge clamping.
fn sample(img: &[f64], h: usize, w: usize, sy: f64, sx: f64) -> f64 {
    let sy = sy.clamp(0.0, h as f64 - 1.0);
    let sx = sx.clamp(0.0, w as f64 - 1.0);
    let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
    let at = |y: usize, x: usize| img[y * w + x];
    (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1.0 - fx) * at(y1, x0) + fx * at(y1, x1))
}

fn flip_row_major<T: Copy>(v: &[T], h: usize, w: usize) -> Vec<T> {
    (0..h).flat_map(|y| (0..w).rev().map(move |x| v[y * w + x])).collect()
}

/// Flip (if requested) then rotate by `angle` radians. The image is
/// bilinearly resampled with edge extrapolation; scribbles use nearest
/// neighbour and margin pixels become UNKNOWN.
pub fn apply(
    image: &[f64],
    scribbles: &ScribbleMask,
    angle: f64,
    flip: bool,
) -> Result<(Vec<f64>, ScribbleMask, AugmentRecord)> {
    let (h, w) = (scribbles.height(), scribbles.width());
    let (img, labels) = if flip {
        (flip_row_major(image, h, w), flip_row_major(scribbles.labels(), h, w))
    } else {
        (image.to_vec(), scribbles.labels().to_vec())
    };
    let (sin, cos) = angle.sin_cos();
    let mut out_img = vec![0.0; h * w];
    let mut out_lab = vec![UNKNOWN; h * w];
    let mut margin = BinaryMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = source_coords(y, x, h, w, sin, cos);
            out_img[y * w + x] = sample(&img, h, w, sy, sx);
            if outside(sy, sx, h, w) {
                margin.set(y, x, true);
            } else {
                let ny = (sy.round().max(0.0) as usize).min(h - 1);
                let nx = (sx.round().max(0.0) as usize).min(w - 1);
                out_lab[y * w + x] = labels[ny * w + nx];
            }
        }
    }
    let scr = ScribbleMask::new(ClassMap::from_vec(h, w, out_lab)?, scribbles.num_classes())?;
    Ok((out_img, scr, AugmentRecord { angle, flip, margin }))
}

/// Draws a transform from `cfg` and applies it.
pub fn augment(
    image: &[f64],
    scribbles: &ScribbleMask,
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, ScribbleMask, AugmentRecord)> {
    let max = cfg.max_rotation_deg.abs();
    let deg = if max > 0.0 { rng.random_range(-max..=max) } else { 0.0 };
    let flip = cfg.flip && rng.random_bool(0.5);
    apply(image, scribbles, deg.to_radians(), flip)
}

/// Half-pixel-centred bilinear resize.
pub fn resize_bilinear(img: &[f64], h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    let (ry, rx) = (h as f64 / th as f64, w as f64 / tw as f64);
    (0..th)
        .flat_map(|y| (0..tw).map(move |x| (y, x)))
        .map(|(y, x)| sample(img, h, w, (y as f64 + 0.5) * ry - 0.5, (x as f64 + 0.5) * rx - 0.5))
        .collect()
}

/// Nearest-neighbour resize of a label map.
pub fn resize_nearest(map: &ClassMap, th: usize, tw: usize) -> Result<ClassMap> {
    let (h, w) = (map.height(), map.width());
    let labels = (0..th)
        .flat_map(|y| (0..tw).map(move |x| (y, x)))
        .map(|(y, x)| map.get((y * h) / th, (x * w) / tw))
        .collect();
    Ok(ClassMap::from_vec(th, tw, labels)?)
}
