//! Adaptive Simpson integration.

use crate::error::{Error, Result};

/// Uniform panels integrated independently before adaptation starts, so
/// narrow peaks are not missed by the first three-point estimate.
const INITIAL_PANELS: usize = 32;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`, subdividing at
/// most `max_depth` times along any branch.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!("integration bounds must be finite: [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return adaptive_simpson(f, b, a, tol, max_depth).map(|v| -v);
    }
    let h = (b - a) / INITIAL_PANELS as f64;
    let panel_tol = tol / INITIAL_PANELS as f64;
    let mut total = 0.0;
    let mut worst = 0.0f64;
    for i in 0..INITIAL_PANELS {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + h };
        let flo = f(lo);
        let fhi = f(hi);
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        let mut unconverged = 0.0;
        total += recurse(&f, lo, hi, flo, fmid, fhi, whole, panel_tol, max_depth, &mut unconverged);
        worst = worst.max(unconverged);
    }
    if !total.is_finite() {
        return Err(Error::Numeric("integrand produced a non-finite value".into()));
    }
    if worst > 0.0 {
        return Err(Error::Numeric(format!(
            "adaptive Simpson hit depth limit {max_depth}; achieved error estimate {worst:.3e} against tolerance {tol:.3e}"
        )));
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    unconverged: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    if depth == 0 {
        *unconverged = unconverged.max(diff.abs() / 15.0);
        return left + right + diff / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, unconverged)
        + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, unconverged)
}
