//! Central finite differences.

/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, step: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += step;
    let fp = f(&xp);
    xp[i] = x[i] - step;
    let fm = f(&xp);
    (fp - fm) / (2.0 * step)
}

/// Relative error with an absolute floor so that vanishing gradients compare
/// on an absolute scale.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub worst_rel_err: f64,
    pub worst_index: usize,
}

impl GradReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_rel_err < tol && self.checked > 0
    }
}

/// Compares `analytic[i]` to a central difference of `f` at every index in
/// `coords`.
pub fn check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    coords: &[usize],
    step: f64,
    floor: f64,
) -> GradReport {
    let mut report = GradReport {
        checked: 0,
        worst_rel_err: 0.0,
        worst_index: 0,
    };
    for &i in coords {
        let num = central_difference(&mut f, x, i, step);
        let e = rel_err(analytic[i], num, floor);
        if e > report.worst_rel_err || e.is_nan() {
            report.worst_rel_err = e;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report
}
