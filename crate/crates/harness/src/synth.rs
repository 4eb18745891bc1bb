//! Synthetic slice stacks of ellipsoidal organs inside a textured body.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use scribble_core::masks::{ClassMap, ScribbleMask};
use scribble_core::metrics::VolumeMeta;
use scribble_core::scribblesim::{simulate_scribbles, ScribbleSimConfig};

use crate::config::KeyValues;
use crate::error::{config_err, Result};

const PLACEMENT_ATTEMPTS: usize = 100;
const LAYOUT_RESTARTS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub num_cases: usize,
    pub slices_per_case: usize,
    /// Foreground classes are `1..num_classes`.
    pub num_classes: usize,
    pub min_organs: usize,
    pub max_organs: usize,
    /// Elliptical lobes per organ. Erosion of a convex organ ends in a small
    /// core, while a waist between lobes stops it early and the skeleton then
    /// runs through every lobe.
    pub lobes: usize,
    /// Lobe semi-axis range in pixels at the widest slice.
    pub lobe_min: f64,
    pub lobe_max: f64,
    /// Standard deviation of the additive Gaussian noise, before normalisation.
    pub noise: f64,
    /// Amplitude of the smooth background texture.
    pub texture: f64,
    pub hull_expand_px: usize,
    pub spacing_mm: f64,
    pub thickness_mm: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            num_cases: 40,
            slices_per_case: 5,
            num_classes: 4,
            min_organs: 1,
            max_organs: 3,
            lobes: 2,
            lobe_min: 4.0,
            lobe_max: 8.0,
            noise: 0.08,
            texture: 0.08,
            hull_expand_px: 5,
            spacing_mm: 1.5,
            thickness_mm: 5.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 {
            return Err(config_err("synthetic images must be at least 16x16"));
        }
        if self.num_cases == 0 || self.slices_per_case == 0 {
            return Err(config_err("need at least one case and one slice"));
        }
        if !(2..=255).contains(&self.num_classes) {
            return Err(config_err("num_classes must be in 2..=255"));
        }
        if self.min_organs == 0 || self.min_organs > self.max_organs || self.max_organs > self.num_classes - 1 {
            return Err(config_err("organ count range must lie in 1..num_classes"));
        }
        if !(self.lobes >= 1 && self.lobe_min >= 1.0 && self.lobe_min <= self.lobe_max) {
            return Err(config_err("need lobes >= 1 and 1 <= lobe_min <= lobe_max"));
        }
        if 2.0 * self.lobe_max * self.lobes as f64 + 4.0 > self.height.min(self.width) as f64 * 0.8 {
            return Err(config_err("organs do not fit inside the body"));
        }
        if !(self.noise >= 0.0 && self.texture >= 0.0) {
            return Err(config_err("noise and texture must be non-negative"));
        }
        VolumeMeta::new(self.spacing_mm, self.spacing_mm, self.thickness_mm)?;
        Ok(())
    }

    pub fn meta(&self) -> VolumeMeta {
        VolumeMeta {
            spacing_x: self.spacing_mm,
            spacing_y: self.spacing_mm,
            thickness_z: self.thickness_mm,
        }
    }

    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let d = Self::default();
        let s = Self {
            height: kv.take("height", d.height)?,
            width: kv.take("width", d.width)?,
            num_cases: kv.take("num_cases", d.num_cases)?,
            slices_per_case: kv.take("slices_per_case", d.slices_per_case)?,
            num_classes: kv.take("num_classes", d.num_classes)?,
            min_organs: kv.take("min_organs", d.min_organs)?,
            max_organs: kv.take("max_organs", d.max_organs)?,
            lobes: kv.take("lobes", d.lobes)?,
            lobe_min: kv.take("lobe_min", d.lobe_min)?,
            lobe_max: kv.take("lobe_max", d.lobe_max)?,
            noise: kv.take("noise", d.noise)?,
            texture: kv.take("texture", d.texture)?,
            hull_expand_px: kv.take("hull_expand_px", d.hull_expand_px)?,
            spacing_mm: kv.take("spacing_mm", d.spacing_mm)?,
            thickness_mm: kv.take("thickness_mm", d.thickness_mm)?,
            seed: kv.take("seed", d.seed)?,
        };
        kv.finish()?;
        s.validate()?;
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(KeyValues::parse(text)?)
    }

    pub fn to_text(&self) -> String {
        let mut kv = KeyValues::default();
        kv.set("height", self.height);
        kv.set("width", self.width);
        kv.set("num_cases", self.num_cases);
        kv.set("slices_per_case", self.slices_per_case);
        kv.set("num_classes", self.num_classes);
        kv.set("min_organs", self.min_organs);
        kv.set("max_organs", self.max_organs);
        kv.set("lobes", self.lobes);
        kv.set("lobe_min", self.lobe_min);
        kv.set("lobe_max", self.lobe_max);
        kv.set("noise", self.noise);
        kv.set("texture", self.texture);
        kv.set("hull_expand_px", self.hull_expand_px);
        kv.set("spacing_mm", self.spacing_mm);
        kv.set("thickness_mm", self.thickness_mm);
        kv.set("seed", self.seed);
        kv.to_text()
    }
}

/// One 2D slice. `image` is `(H, W)` row-major in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub image: Vec<f64>,
    pub mask: ClassMap,
    pub scribbles: ScribbleMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub id: String,
    pub meta: VolumeMeta,
    pub slices: Vec<Slice>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    pub cases: Vec<Case>,
}

impl Dataset {
    pub fn num_slices(&self) -> usize {
        self.cases.iter().map(|c| c.slices.len()).sum()
    }

    /// `(case index, slice index)` of every slice, in storage order.
    pub fn slice_indices(&self) -> Vec<(usize, usize)> {
        self.cases
            .iter()
            .enumerate()
            .flat_map(|(c, case)| (0..case.slices.len()).map(move |s| (c, s)))
            .collect()
    }
}

/// Elliptical lobe in the widest section.
#[derive(Debug, Clone, Copy)]
struct Lobe {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    theta: f64,
}

impl Lobe {
    fn contains(&self, y: f64, x: f64, scale: f64, pad: f64) -> bool {
        let (sin, cos) = self.theta.sin_cos();
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = (cos * dx + sin * dy) / (self.rx * scale + pad);
        let v = (-sin * dx + cos * dy) / (self.ry * scale + pad);
        u * u + v * v <= 1.0
    }
}

/// Union of overlapping lobes, extruded across slices with a section that
/// shrinks away from the centre slice (about its own centroid).
#[derive(Debug, Clone)]
struct Organ {
    class: u8,
    lobes: Vec<Lobe>,
    cy: f64,
    cx: f64,
    /// Centre slice (fractional) and half-extent in slices.
    cz: f64,
    rz: f64,
    intensity: f64,
}

impl Organ {
    fn scale(&self, z: usize) -> f64 {
        let t = (z as f64 - self.cz) / self.rz;
        (1.0 - t * t).max(0.0).sqrt()
    }

    fn contains_scaled(&self, y: f64, x: f64, s: f64, pad: f64) -> bool {
        if s <= 0.0 {
            return false;
        }
        // shrink the lobe layout towards the centroid along with the lobes
        let (yy, xx) = (self.cy + (y - self.cy) / s, self.cx + (x - self.cx) / s);
        self.lobes.iter().any(|l| l.contains(yy, xx, 1.0, pad / s))
    }

    fn contains(&self, y: f64, x: f64, z: usize) -> bool {
        self.contains_scaled(y, x, self.scale(z), 0.0)
    }

    /// Pixels of the widest section, dilated by `pad`.
    fn footprint(&self, h: usize, w: usize, pad: f64) -> Vec<(usize, usize)> {
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .filter(|&(y, x)| self.contains_scaled(y as f64, x as f64, 1.0, pad))
            .collect()
    }
}

/// Smooth texture: a few random plane waves.
struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl Texture {
    fn new(rng: &mut impl Rng, amplitude: f64) -> Self {
        let waves = (0..4)
            .map(|_| {
                let f = rng.random_range(0.05..0.25);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                (f * a.cos(), f * a.sin(), rng.random_range(0.0..std::f64::consts::TAU), amplitude / 4.0)
            })
            .collect();
        Self { waves }
    }

    fn at(&self, y: f64, x: f64) -> f64 {
        self.waves.iter().map(|&(fy, fx, ph, a)| a * (fy * y + fx * x + ph).sin()).sum()
    }
}

fn place_organs(spec: &SyntheticSpec, rng: &mut impl Rng, body: (f64, f64, f64, f64)) -> Result<Vec<Organ>> {
    let n = rng.random_range(spec.min_organs..=spec.max_organs);
    let mut classes: Vec<u8> = (1..spec.num_classes as u8).collect();
    for i in (1..classes.len()).rev() {
        classes.swap(i, rng.random_range(0..=i));
    }
    for _ in 0..LAYOUT_RESTARTS {
        if let Some(organs) = try_layout(spec, rng, body, &classes[..n]) {
            return Ok(organs);
        }
    }
    Err(config_err("could not place non-overlapping organs; reduce radii or organ count"))
}

fn random_organ(spec: &SyntheticSpec, rng: &mut impl Rng, class: u8, centre: (f64, f64)) -> Organ {
    let mut lobes: Vec<Lobe> = Vec::with_capacity(spec.lobes);
    let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
    let (mut cy, mut cx) = centre;
    for i in 0..spec.lobes {
        let a = rng.random_range(spec.lobe_min..=spec.lobe_max);
        let b = rng.random_range(spec.lobe_min..=spec.lobe_max);
        let (ry, rx) = (a.min(b), a.max(b));
        if let Some(prev) = lobes.last() {
            // long axes roughly follow the chain, so a gap just below the sum
            // of major radii joins the lobes through a narrow waist
            let step = (prev.rx + rx) * rng.random_range(0.88..0.96);
            if i > 1 {
                heading += rng.random_range(-0.8..0.8);
            }
            cy += step * heading.sin();
            cx += step * heading.cos();
        }
        // long axis roughly along the chain
        let theta = heading + rng.random_range(-0.5..0.5);
        lobes.push(Lobe { cy, cx, ry, rx, theta });
    }
    let n = lobes.len() as f64;
    let (gy, gx) = lobes.iter().fold((0.0, 0.0), |(y, x), l| (y + l.cy / n, x + l.cx / n));
    Organ {
        class,
        lobes,
        cy: gy,
        cx: gx,
        cz: 0.0,
        rz: 1.0,
        intensity: 0.0,
    }
}

fn try_layout(spec: &SyntheticSpec, rng: &mut impl Rng, body: (f64, f64, f64, f64), classes: &[u8]) -> Option<Vec<Organ>> {
    const GAP: f64 = 1.5;
    let (by, bx, bry, brx) = body;
    let (h, w) = (spec.height, spec.width);
    let depth = spec.slices_per_case as f64;
    let inside_body = |y: usize, x: usize| {
        ((y as f64 - by) / (bry - 2.0)).powi(2) + ((x as f64 - bx) / (brx - 2.0)).powi(2) <= 1.0
    };
    let mut taken = vec![false; h * w];
    let mut organs: Vec<Organ> = Vec::with_capacity(classes.len());
    for &class in classes {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let k = rng.random_range(0.0f64..1.0).sqrt() * 0.6;
            let mut o = random_organ(spec, rng, class, (by + k * bry * t.sin(), bx + k * brx * t.cos()));
            o.cz = (depth - 1.0) / 2.0 + rng.random_range(-0.5..=0.5);
            o.rz = depth / 2.0 + rng.random_range(0.5..2.0);
            let fp = o.footprint(h, w, GAP);
            if fp.iter().all(|&(y, x)| inside_body(y, x) && !taken[y * w + x]) {
                fp.iter().for_each(|&(y, x)| taken[y * w + x] = true);
                organs.push(o);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(organs)
}

/// Mean intensity of class `c` organs. Spread over `[0.55, 0.95]` so every
/// class differs from the body (0.35) and from each other.
fn class_intensity(class: u8, num_classes: usize) -> f64 {
    let k = (num_classes - 1).max(1) as f64;
    0.55 + 0.4 * (class as f64 - 1.0) / (k - 1.0).max(1.0)
}

fn generate_case(spec: &SyntheticSpec, index: usize, rng: &mut ChaCha8Rng) -> Result<Case> {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let body = (
        (h - 1.0) / 2.0 + rng.random_range(-2.0..2.0),
        (w - 1.0) / 2.0 + rng.random_range(-2.0..2.0),
        h * rng.random_range(0.38..0.45),
        w * rng.random_range(0.38..0.45),
    );
    let mut organs = place_organs(spec, rng, body)?;
    for o in &mut organs {
        o.intensity = class_intensity(o.class, spec.num_classes) + rng.random_range(-0.04..0.04);
    }
    let texture = Texture::new(rng, spec.texture);
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).map_err(|e| config_err(e.to_string()))?;
    let sim = ScribbleSimConfig {
        hull_expand_px: spec.hull_expand_px,
        seed: spec.seed ^ index as u64,
    };

    let mut slices = Vec::with_capacity(spec.slices_per_case);
    for z in 0..spec.slices_per_case {
        let mut mask = ClassMap::filled(spec.height, spec.width, 0);
        let mut raw = vec![0.0; spec.height * spec.width];
        for y in 0..spec.height {
            for x in 0..spec.width {
                let (fy, fx) = (y as f64, x as f64);
                let in_body = ((fy - body.0) / body.2).powi(2) + ((fx - body.1) / body.3).powi(2) <= 1.0;
                let mut v = if in_body { 0.35 + texture.at(fy, fx) } else { 0.05 };
                if let Some(o) = organs.iter().find(|o| o.contains(fy, fx, z)) {
                    mask.set(y, x, o.class);
                    v = o.intensity + 0.5 * texture.at(fy, fx);
                }
                let n = if spec.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                raw[y * spec.width + x] = v + n;
            }
        }
        let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let image = raw.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect();
        let scribbles = simulate_scribbles(&mask, spec.num_classes, &sim)?;
        slices.push(Slice { image, mask, scribbles });
    }
    Ok(Case {
        id: format!("case{index:03}"),
        meta: spec.meta(),
        slices,
    })
}

/// Deterministic in `spec` (including its seed).
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cases = (0..spec.num_cases)
        .map(|i| generate_case(spec, i, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        height: spec.height,
        width: spec.width,
        num_classes: spec.num_classes,
        cases,
    })
}
