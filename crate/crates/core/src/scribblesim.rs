//! Synthetic scribbles from dense masks.
//!
//! Each foreground organ is eroded until one more erosion would split or
//! delete it, then thinned to a skeleton. The background scribble is the
//! outline of the convex hull of all foreground pixels grown by a few pixels.
//! Connectivity is 8-neighbourhood throughout.

use crate::error::{config_err, Result};
use crate::masks::{BinaryMask, ClassMap, ScribbleMask, UNKNOWN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScribbleSimConfig {
    /// Radius of the disc used to grow the convex hull.
    pub hull_expand_px: usize,
    /// Accepted for interface stability; the pipeline has no random steps.
    pub seed: u64,
}

impl Default for ScribbleSimConfig {
    fn default() -> Self {
        Self {
            hull_expand_px: 5,
            seed: 0,
        }
    }
}

const NEIGHBOURS8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// 8-connected components, ordered by their first pixel in raster order.
pub fn connected_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for start in 0..h * w {
        if !mask.bits()[start] || seen[start] {
            continue;
        }
        let mut comp = BinaryMask::new(h, w);
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            comp.set(y, x, true);
            for (dy, dx) in NEIGHBOURS8 {
                let (ny, nx) = (y as isize + dy, x as isize + dx);
                if mask.get_signed(ny, nx) {
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

pub fn count_components(mask: &BinaryMask) -> usize {
    connected_components(mask).len()
}

/// Erosion by a 3×3 square; pixels outside the grid count as background.
pub fn erode(mask: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(mask.height(), mask.width(), |y, x| {
        mask.get(y, x)
            && NEIGHBOURS8
                .iter()
                .all(|&(dy, dx)| mask.get_signed(y as isize + dy, x as isize + dx))
    })
}

/// Erodes each component until the next erosion would empty it or split it,
/// and returns the union of the last surviving states.
pub fn erode_until_disconnect(mask: &BinaryMask) -> BinaryMask {
    let mut out = BinaryMask::new(mask.height(), mask.width());
    for comp in connected_components(mask) {
        let mut cur = comp;
        loop {
            let next = erode(&cur);
            if next.is_empty() || count_components(&next) > 1 {
                break;
            }
            cur = next;
        }
        out = out.union(&cur);
    }
    out
}

/// `[P2, …, P9]`: N, NE, E, SE, S, SW, W, NW.
fn ring(mask: &BinaryMask, y: usize, x: usize) -> [bool; 8] {
    const ORDER: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];
    ORDER.map(|(dy, dx)| mask.get_signed(y as isize + dy, x as isize + dx))
}

fn deletable(mask: &BinaryMask, y: usize, x: usize, first: bool) -> bool {
    let n = ring(mask, y, x);
    let b = n.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = n;
    if first {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Zhang–Suen thinning.
///
/// Candidates of each subiteration are collected in parallel as usual, but
/// deleted one at a time with the test repeated on the current image. Plain
/// parallel deletion erases 2×2 blocks outright; the sequential re-check
/// keeps every component alive and connected.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut cur = mask.clone();
    loop {
        let mut changed = false;
        for first in [true, false] {
            let candidates: Vec<_> = cur.points().filter(|&(y, x)| deletable(&cur, y, x, first)).collect();
            for (y, x) in candidates {
                if deletable(&cur, y, x, first) {
                    cur.set(y, x, false);
                    changed = true;
                }
            }
        }
        if !changed {
            return cur;
        }
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain convex hull of lattice points `(x, y)`, counter-clockwise
/// without collinear vertices.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside_hull(hull: &[(i64, i64)], p: (i64, i64)) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0
                && (a.0.min(b.0)..=a.0.max(b.0)).contains(&p.0)
                && (a.1.min(b.1)..=a.1.max(b.1)).contains(&p.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Pixels whose centres lie in the convex hull of `mask`.
pub fn filled_hull(mask: &BinaryMask) -> BinaryMask {
    let pts: Vec<(i64, i64)> = mask.points().map(|(y, x)| (x as i64, y as i64)).collect();
    let hull = convex_hull(&pts);
    BinaryMask::from_fn(mask.height(), mask.width(), |y, x| inside_hull(&hull, (x as i64, y as i64)))
}

/// Dilation by a Euclidean disc of the given radius.
pub fn dilate_disc(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|&(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect();
    let (h, w) = (mask.height() as isize, mask.width() as isize);
    let mut out = BinaryMask::new(mask.height(), mask.width());
    for (y, x) in mask.points() {
        for &(dy, dx) in &offsets {
            let (ny, nx) = (y as isize + dy, x as isize + dx);
            if ny >= 0 && nx >= 0 && ny < h && nx < w {
                out.set(ny as usize, nx as usize, true);
            }
        }
    }
    out
}

/// Set pixels with a 4-neighbour that is unset or off the grid.
pub fn inner_boundary(mask: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(mask.height(), mask.width(), |y, x| {
        mask.get(y, x)
            && [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|&(dy, dx)| !mask.get_signed(y as isize + dy, x as isize + dx))
    })
}

/// Scribble for one foreground region: erosion then thinning, per component.
pub fn foreground_scribble(region: &BinaryMask) -> BinaryMask {
    connected_components(region)
        .iter()
        .map(|c| skeletonize(&erode_until_disconnect(c)))
        .fold(BinaryMask::new(region.height(), region.width()), |acc, s| acc.union(&s))
}

/// Scribble annotation for a dense class map with background class 0.
pub fn simulate_scribbles(
    full_mask: &ClassMap,
    num_classes: usize,
    config: &ScribbleSimConfig,
) -> Result<ScribbleMask> {
    let (h, w) = (full_mask.height(), full_mask.width());
    if let Some(bad) = full_mask.labels().iter().find(|&&l| l as usize >= num_classes) {
        return Err(config_err(format!(
            "dense mask holds label {bad}, expected classes below {num_classes}"
        )));
    }
    let mut out = ClassMap::filled(h, w, UNKNOWN);
    let foreground = BinaryMask::from_fn(h, w, |y, x| full_mask.get(y, x) != 0);
    if foreground.is_empty() {
        return ScribbleMask::new(out, num_classes);
    }
    for class in 1..num_classes {
        let region = full_mask.class_mask(class as u8);
        for (y, x) in foreground_scribble(&region).points() {
            out.set(y, x, class as u8);
        }
    }
    let grown = dilate_disc(&filled_hull(&foreground), config.hull_expand_px);
    for (y, x) in inner_boundary(&grown).difference(&foreground).points() {
        out.set(y, x, 0);
    }
    ScribbleMask::new(out, num_classes)
}
