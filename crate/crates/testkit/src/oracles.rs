//! Brute-force reference implementations.
//!
//! Tensors are plain row-major slices: class probabilities are `(c, h, w)`,
//! images `(ch, h, w)`, volumes `(d, h, w)`.

pub const UNKNOWN: u8 = 255;

/// Partial cross-entropy, one pixel at a time.
pub fn pce(probs: &[f64], c: usize, labels: &[u8]) -> f64 {
    let hw = labels.len();
    assert_eq!(probs.len(), c * hw);
    let mut total = 0.0;
    let mut n = 0usize;
    for p in 0..hw {
        if labels[p] == UNKNOWN {
            continue;
        }
        total -= probs[labels[p] as usize * hw + p].ln();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// One Gaussian term of a kernel mixture.
#[derive(Debug, Clone, Copy)]
pub struct Kernel {
    pub weight: f64,
    pub sigma: f64,
    pub intensity: bool,
    pub location: bool,
}

/// `Σ_k w_k exp(−‖f_p − f_q‖² / 2σ_k²)` with features intensity and
/// `(x / (w−1), y / (h−1))`.
pub fn crf_kernel(image: &[f64], ch: usize, h: usize, w: usize, p: usize, q: usize, kernels: &[Kernel]) -> f64 {
    let hw = h * w;
    let mut di = 0.0;
    for k in 0..ch {
        let d = image[k * hw + p] - image[k * hw + q];
        di += d * d;
    }
    let sx = if w > 1 { 1.0 / (w - 1) as f64 } else { 1.0 };
    let sy = if h > 1 { 1.0 / (h - 1) as f64 } else { 1.0 };
    let dx = ((p % w) as f64 - (q % w) as f64) * sx;
    let dy = ((p / w) as f64 - (q / w) as f64) * sy;
    let dl = dx * dx + dy * dy;
    let mut s = 0.0;
    for k in kernels {
        let mut d2 = 0.0;
        if k.intensity {
            d2 += di;
        }
        if k.location {
            d2 += dl;
        }
        s += k.weight * (-d2 / (2.0 * k.sigma * k.sigma)).exp();
    }
    s
}

/// `Σ_{i≠j} P_p^i P_q^j`, summed over both indices.
fn disagreement(probs: &[f64], c: usize, hw: usize, p: usize, q: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..c {
        for j in 0..c {
            if i != j {
                s += probs[i * hw + p] * probs[j * hw + q];
            }
        }
    }
    s
}

/// Windowed pairwise loss:
/// `(1/|V|) Σ_{p∈V} Σ_{q∈V, 0<‖q−p‖∞<r} weight(p, q) Σ_{i≠j} P_p^i P_q^j`.
pub fn windowed_pairwise(
    probs: &[f64],
    c: usize,
    h: usize,
    w: usize,
    valid: &[bool],
    r: usize,
    weight: &dyn Fn(usize, usize) -> f64,
) -> f64 {
    let hw = h * w;
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for py in 0..h {
        for px in 0..w {
            for qy in 0..h {
                for qx in 0..w {
                    let (p, q) = (py * w + px, qy * w + qx);
                    let cheb = py.abs_diff(qy).max(px.abs_diff(qx));
                    if !valid[p] || !valid[q] || cheb == 0 || cheb >= r {
                        continue;
                    }
                    total += weight(p, q) * disagreement(probs, c, hw, p, q);
                }
            }
        }
    }
    total / n as f64
}

/// Same sum over every ordered pair of distinct valid pixels.
pub fn all_pairs(probs: &[f64], c: usize, hw: usize, valid: &[bool], weight: &dyn Fn(usize, usize) -> f64) -> f64 {
    let n = valid.iter().filter(|&&v| v).count();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for p in 0..hw {
        for q in 0..hw {
            if p != q && valid[p] && valid[q] {
                total += weight(p, q) * disagreement(probs, c, hw, p, q);
            }
        }
    }
    total / n as f64
}

/// Bilinear resize with half-pixel centres and edge clamping, per channel.
pub fn bilinear(data: &[f64], c: usize, h: usize, w: usize, th: usize, tw: usize) -> Vec<f64> {
    let mut out = vec![0.0; c * th * tw];
    for k in 0..c {
        for y in 0..th {
            for x in 0..tw {
                let sy = ((y as f64 + 0.5) * h as f64 / th as f64 - 0.5).clamp(0.0, (h - 1) as f64);
                let sx = ((x as f64 + 0.5) * w as f64 / tw as f64 - 0.5).clamp(0.0, (w - 1) as f64);
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let at = |yy: usize, xx: usize| data[(k * h + yy) * w + xx];
                out[(k * th + y) * tw + x] = at(y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + at(y0, x1) * (1.0 - fy) * fx
                    + at(y1, x0) * fy * (1.0 - fx)
                    + at(y1, x1) * fy * fx;
            }
        }
    }
    out
}

/// Affinity from raw scores `(hw, hw, c)`, compression weights `w` (length
/// `c`) and bias `b`, written out element by element.
pub fn affinity(raw: &[f64], hw: usize, c: usize, w: &[f64], b: f64) -> Vec<f64> {
    let at = |p: usize, q: usize, k: usize| raw[(p * hw + q) * c + k];
    // row softmax per channel
    let mut soft = vec![0.0; hw * hw * c];
    for k in 0..c {
        for p in 0..hw {
            let mut m = f64::NEG_INFINITY;
            for q in 0..hw {
                m = m.max(at(p, q, k));
            }
            let mut z = 0.0;
            for q in 0..hw {
                z += (at(p, q, k) - m).exp();
            }
            for q in 0..hw {
                soft[(p * hw + q) * c + k] = (at(p, q, k) - m).exp() / z;
            }
        }
    }
    let mut s = vec![0.0; hw * hw];
    for p in 0..hw {
        for q in 0..hw {
            let mut v = b;
            for k in 0..c {
                v += w[k] * (soft[(p * hw + q) * c + k] + soft[(q * hw + p) * c + k]);
            }
            s[p * hw + q] = 1.0 / (1.0 + (-v).exp());
        }
    }
    s
}

pub fn distance_decay(h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let hw = h * w;
    let mut m = vec![0.0; hw * hw];
    for py in 0..h {
        for px in 0..w {
            for qy in 0..h {
                for qx in 0..w {
                    let dy = py as f64 - qy as f64;
                    let dx = px as f64 - qx as f64;
                    m[(py * w + px) * hw + qy * w + qx] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                }
            }
        }
    }
    m
}

pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let na = a.iter().filter(|&&v| v).count();
    let nb = b.iter().filter(|&&v| v).count();
    let both = a.iter().zip(b).filter(|(&x, &y)| x && y).count();
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

fn surface(v: &[bool], d: usize, h: usize, w: usize) -> Vec<(usize, usize, usize)> {
    let get = |z: i64, y: i64, x: i64| -> bool {
        if z < 0 || y < 0 || x < 0 || z >= d as i64 || y >= h as i64 || x >= w as i64 {
            false
        } else {
            v[(z as usize * h + y as usize) * w + x as usize]
        }
    };
    let mut out = Vec::new();
    for z in 0..d as i64 {
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                if get(z, y, x)
                    && !(get(z - 1, y, x)
                        && get(z + 1, y, x)
                        && get(z, y - 1, x)
                        && get(z, y + 1, x)
                        && get(z, y, x - 1)
                        && get(z, y, x + 1))
                {
                    out.push((z as usize, y as usize, x as usize));
                }
            }
        }
    }
    out
}

/// HD95 in mm with nearest-rank percentiles; `None` when a surface is empty.
/// `spacing` is `(z, y, x)`.
pub fn hd95(a: &[bool], b: &[bool], d: usize, h: usize, w: usize, spacing: (f64, f64, f64)) -> Option<f64> {
    let (sa, sb) = (surface(a, d, h, w), surface(b, d, h, w));
    if sa.is_empty() || sb.is_empty() {
        return None;
    }
    let directed = |from: &[(usize, usize, usize)], to: &[(usize, usize, usize)]| {
        let mut ds = Vec::new();
        for f in from {
            let mut best = f64::INFINITY;
            for t in to {
                let dz = (f.0 as f64 - t.0 as f64) * spacing.0;
                let dy = (f.1 as f64 - t.1 as f64) * spacing.1;
                let dx = (f.2 as f64 - t.2 as f64) * spacing.2;
                best = best.min((dz * dz + dy * dy + dx * dx).sqrt());
            }
            ds.push(best);
        }
        ds.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let k = (0.95 * ds.len() as f64).ceil() as usize;
        ds[k.max(1) - 1]
    };
    Some(directed(&sa, &sb).max(directed(&sb, &sa)))
}

/// Pixels of an `h`×`w` image rotated by `angle` radians about its centre
/// whose source position falls outside the original grid.
pub fn rotation_margin(h: usize, w: usize, angle: f64) -> Vec<bool> {
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (s, c) = angle.sin_cos();
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            // inverse rotation
            let sx = c * dx + s * dy + cx;
            let sy = -s * dx + c * dy + cy;
            let eps = 1e-6;
            out[y * w + x] = sx < -eps || sy < -eps || sx > w as f64 - 1.0 + eps || sy > h as f64 - 1.0 + eps;
        }
    }
    out
}
