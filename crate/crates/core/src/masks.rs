//! Per-pixel label containers.

use crate::error::{shape_err, CoreError, Result};

/// Marker for pixels without a label.
pub const UNKNOWN: u8 = 255;

/// Boolean `(H, W)` mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(shape_err(format!(
                "{} mask bits for a {height}x{width} grid",
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect();
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Out-of-bounds reads as background.
    pub fn get_signed(&self, y: isize, x: isize) -> bool {
        y >= 0
            && x >= 0
            && (y as usize) < self.height
            && (x as usize) < self.width
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
        debug_assert_eq!((self.height, self.width), (other.height, other.width));
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Coordinates `(y, x)` of set pixels in raster order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / self.width, i % self.width))
    }
}

/// Dense `(H, W)` class-index map (ground truth or argmax prediction).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ClassMap {
    pub fn from_vec(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(shape_err(format!(
                "{} labels for a {height}x{width} grid",
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.labels[y * self.width + x] = v;
    }

    pub fn class_mask(&self, class: u8) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.labels.iter().map(|&l| l == class).collect(),
        }
    }

    /// Largest label present, ignoring [`UNKNOWN`].
    pub fn max_label(&self) -> Option<u8> {
        self.labels.iter().copied().filter(|&l| l != UNKNOWN).max()
    }
}

/// Scribble annotation: each pixel holds a class in `0..num_classes` or
/// [`UNKNOWN`]. Labeled pixels form Ω_L, the rest Ω_U.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScribbleMask {
    map: ClassMap,
    num_classes: usize,
}

impl ScribbleMask {
    /// Fails if any label other than [`UNKNOWN`] is `>= num_classes`.
    pub fn new(map: ClassMap, num_classes: usize) -> Result<Self> {
        if let Some((pixel, &label)) = map
            .labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l != UNKNOWN && l as usize >= num_classes)
        {
            return Err(CoreError::Label {
                label,
                pixel,
                num_classes,
            });
        }
        Ok(Self { map, num_classes })
    }

    pub fn unlabeled(height: usize, width: usize, num_classes: usize) -> Self {
        Self {
            map: ClassMap::filled(height, width, UNKNOWN),
            num_classes,
        }
    }

    pub fn height(&self) -> usize {
        self.map.height
    }

    pub fn width(&self) -> usize {
        self.map.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn map(&self) -> &ClassMap {
        &self.map
    }

    pub fn labels(&self) -> &[u8] {
        &self.map.labels
    }

    pub fn label(&self, pixel: usize) -> Option<u8> {
        match self.map.labels[pixel] {
            UNKNOWN => None,
            l => Some(l),
        }
    }

    /// Ω_L as a mask.
    pub fn labeled(&self) -> BinaryMask {
        BinaryMask {
            height: self.map.height,
            width: self.map.width,
            bits: self.map.labels.iter().map(|&l| l != UNKNOWN).collect(),
        }
    }

    /// Ω_U as a mask.
    pub fn unlabeled_mask(&self) -> BinaryMask {
        BinaryMask {
            height: self.map.height,
            width: self.map.width,
            bits: self.map.labels.iter().map(|&l| l == UNKNOWN).collect(),
        }
    }

    pub fn num_labeled(&self) -> usize {
        self.map.labels.iter().filter(|&&l| l != UNKNOWN).count()
    }

    pub fn labeled_fraction(&self) -> f64 {
        self.num_labeled() as f64 / self.map.labels.len().max(1) as f64
    }
}

/// Pixels taking part in the pairwise regularisers.
///
/// Always a subset of Ω_U. Pixels created by rotation augmentation stay
/// valid (they are unlabeled); only labeled pixels and pixels explicitly
/// marked invalid are removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateMask {
    valid: BinaryMask,
}

impl GateMask {
    pub fn from_scribbles(scribbles: &ScribbleMask) -> Self {
        Self {
            valid: scribbles.unlabeled_mask(),
        }
    }

    /// Additionally removes every pixel set in `invalid`.
    pub fn excluding(&self, invalid: &BinaryMask) -> Result<Self> {
        if (invalid.height, invalid.width) != (self.valid.height, self.valid.width) {
            return Err(shape_err("gate exclusion mask has a different grid"));
        }
        Ok(Self {
            valid: self.valid.difference(invalid),
        })
    }

    pub fn valid(&self) -> &BinaryMask {
        &self.valid
    }

    pub fn num_valid(&self) -> usize {
        self.valid.count()
    }
}
