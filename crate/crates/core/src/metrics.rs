//! Volume overlap and surface distance metrics.
//!
//! Volumes are stacks of 2D class maps, indexed `(z, y, x)`. Surface voxels
//! are foreground voxels with at least one 6-neighbour outside the object
//! (voxels beyond the volume count as outside). HD95 uses the nearest-rank
//! 95th percentile of each directed distance set and takes the larger one.
//!
//! # Report format
//!
//! [`MetricsReport::to_lines`] writes one whitespace-separated record per
//! case and class:
//!
//! ```text
//! case=<id> class=<k> dice=<value> hd95_mm=<value|undefined>
//! ```
//!
//! followed by `mean dice=<value> hd95_mm=<value|undefined>`, where the mean
//! HD95 covers classes with a defined value only.

use std::fmt;

use crate::error::{config_err, shape_err, Result};
use crate::masks::ClassMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeMeta {
    pub spacing_x: f64,
    pub spacing_y: f64,
    pub thickness_z: f64,
}

impl VolumeMeta {
    pub fn new(spacing_x: f64, spacing_y: f64, thickness_z: f64) -> Result<Self> {
        let m = Self {
            spacing_x,
            spacing_y,
            thickness_z,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !(ok(self.spacing_x) && ok(self.spacing_y) && ok(self.thickness_z)) {
            return Err(config_err(format!("voxel spacing must be positive, got {self:?}")));
        }
        Ok(())
    }
}

impl Default for VolumeMeta {
    fn default() -> Self {
        Self {
            spacing_x: 1.0,
            spacing_y: 1.0,
            thickness_z: 1.0,
        }
    }
}

/// Class labels of a `(depth, height, width)` volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVolume {
    depth: usize,
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ClassVolume {
    pub fn new(depth: usize, height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != depth * height * width {
            return Err(shape_err(format!(
                "{} labels for a {depth}x{height}x{width} volume",
                labels.len()
            )));
        }
        Ok(Self {
            depth,
            height,
            width,
            labels,
        })
    }

    /// Stacks equally sized slices along z.
    pub fn from_slices(slices: &[ClassMap]) -> Result<Self> {
        let (h, w) = slices.first().map_or((0, 0), |s| (s.height(), s.width()));
        if slices.iter().any(|s| (s.height(), s.width()) != (h, w)) {
            return Err(shape_err("slices of a volume must share their size"));
        }
        let labels = slices.iter().flat_map(|s| s.labels().iter().copied()).collect();
        Self::new(slices.len(), h, w, labels)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.depth, self.height, self.width)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    fn is(&self, class: u8, z: isize, y: isize, x: isize) -> bool {
        z >= 0
            && y >= 0
            && x >= 0
            && (z as usize) < self.depth
            && (y as usize) < self.height
            && (x as usize) < self.width
            && self.labels[(z as usize * self.height + y as usize) * self.width + x as usize] == class
    }

    /// Surface voxels of `class` as `(z, y, x)`.
    pub fn surface(&self, class: u8) -> Vec<(usize, usize, usize)> {
        const N6: [(isize, isize, isize); 6] = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
        let mut out = Vec::new();
        for z in 0..self.depth {
            for y in 0..self.height {
                for x in 0..self.width {
                    let (zi, yi, xi) = (z as isize, y as isize, x as isize);
                    if self.is(class, zi, yi, xi)
                        && N6.iter().any(|&(dz, dy, dx)| !self.is(class, zi + dz, yi + dy, xi + dx))
                    {
                        out.push((z, y, x));
                    }
                }
            }
        }
        out
    }
}

fn check_same(a: &ClassVolume, b: &ClassVolume) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(format!(
            "volume shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `2|A∩B| / (|A| + |B|)`; 1 when both are empty.
pub fn dice3d(pred: &ClassVolume, gt: &ClassVolume, class: u8) -> Result<f64> {
    check_same(pred, gt)?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        let (ip, ig) = (p == class, g == class);
        a += ip as usize;
        b += ig as usize;
        both += (ip && ig) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (a + b) as f64)
}

/// Surface distance that may be undefined because a surface is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hd95 {
    Mm(f64),
    Undefined,
}

impl Hd95 {
    pub fn value(self) -> Option<f64> {
        match self {
            Hd95::Mm(v) => Some(v),
            Hd95::Undefined => None,
        }
    }
}

impl fmt::Display for Hd95 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hd95::Mm(v) => write!(f, "{v}"),
            Hd95::Undefined => f.write_str("undefined"),
        }
    }
}

/// Nearest-rank percentile `q ∈ (0, 1]` of unsorted values.
pub fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[rank - 1]
}

fn directed_p95(from: &[(usize, usize, usize)], to: &[(usize, usize, usize)], meta: &VolumeMeta) -> f64 {
    let mut d: Vec<f64> = from
        .iter()
        .map(|&(z, y, x)| {
            to.iter()
                .map(|&(z2, y2, x2)| {
                    let dz = (z as f64 - z2 as f64) * meta.thickness_z;
                    let dy = (y as f64 - y2 as f64) * meta.spacing_y;
                    let dx = (x as f64 - x2 as f64) * meta.spacing_x;
                    dz * dz + dy * dy + dx * dx
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nearest_rank(&mut d, 0.95).sqrt()
}

pub fn hd95(pred: &ClassVolume, gt: &ClassVolume, class: u8, meta: &VolumeMeta) -> Result<Hd95> {
    check_same(pred, gt)?;
    meta.validate()?;
    let (sp, sg) = (pred.surface(class), gt.surface(class));
    if sp.is_empty() || sg.is_empty() {
        return Ok(Hd95::Undefined);
    }
    Ok(Hd95::Mm(directed_p95(&sp, &sg, meta).max(directed_p95(&sg, &sp, meta))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub case_id: String,
    pub class: u8,
    pub dice: f64,
    pub hd95: Hd95,
}

/// Per-case, per-class scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub records: Vec<ClassScore>,
}

impl MetricsReport {
    /// Scores foreground classes `1..num_classes` of one case.
    pub fn add_case(
        &mut self,
        case_id: &str,
        pred: &ClassVolume,
        gt: &ClassVolume,
        num_classes: usize,
        meta: &VolumeMeta,
    ) -> Result<()> {
        for class in 1..num_classes as u8 {
            self.records.push(ClassScore {
                case_id: case_id.to_string(),
                class,
                dice: dice3d(pred, gt, class)?,
                hd95: hd95(pred, gt, class, meta)?,
            });
        }
        Ok(())
    }

    pub fn mean_dice(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.records.iter().map(|r| r.dice).sum::<f64>() / self.records.len() as f64
    }

    /// Mean over defined HD95 values.
    pub fn mean_hd95(&self) -> Hd95 {
        let v: Vec<f64> = self.records.iter().filter_map(|r| r.hd95.value()).collect();
        if v.is_empty() {
            return Hd95::Undefined;
        }
        Hd95::Mm(v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn per_class_mean_dice(&self, class: u8) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter(|r| r.class == class).map(|r| r.dice).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s += &format!("case={} class={} dice={} hd95_mm={}\n", r.case_id, r.class, r.dice, r.hd95);
        }
        s += &format!("mean dice={} hd95_mm={}\n", self.mean_dice(), self.mean_hd95());
        s
    }

    /// Parses the per-record lines written by [`MetricsReport::to_lines`].
    pub fn parse_lines(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for line in text.lines().filter(|l| l.starts_with("case=")) {
            let field = |key: &str| {
                line.split_whitespace()
                    .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                    .ok_or_else(|| config_err(format!("report line lacks `{key}`: {line}")))
            };
            let bad = |what: &str| config_err(format!("bad {what} in report line: {line}"));
            let hd = field("hd95_mm")?;
            records.push(ClassScore {
                case_id: field("case")?.to_string(),
                class: field("class")?.parse().map_err(|_| bad("class"))?,
                dice: field("dice")?.parse().map_err(|_| bad("dice"))?,
                hd95: if hd == "undefined" {
                    Hd95::Undefined
                } else {
                    Hd95::Mm(hd.parse().map_err(|_| bad("hd95_mm"))?)
                },
            });
        }
        Ok(Self { records })
    }
}
