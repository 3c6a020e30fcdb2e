//! Zeroth-order modified Bessel function of the first kind.

use crate::error::{Error, Result};

/// Below this argument the power series is summed directly. Above it the
/// Hankel expansion, truncated at its smallest term, is exact to rounding.
const SERIES_LIMIT: f64 = 30.0;

pub fn bessel_i0(x: f64) -> Result<f64> {
    check(x)?;
    if x < SERIES_LIMIT {
        Ok(series(x, 1.0))
    } else {
        Ok(x.exp() * asymptotic_scaled(x))
    }
}

/// Exponentially scaled `e^{-x} I0(x)`, finite for every `x >= 0`.
pub fn bessel_i0e(x: f64) -> Result<f64> {
    check(x)?;
    if x < SERIES_LIMIT {
        Ok(series(x, (-x).exp()))
    } else {
        Ok(asymptotic_scaled(x))
    }
}

fn check(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::invalid(format!("bessel_i0 needs x >= 0, got {x}")));
    }
    Ok(())
}

/// sum_m (x/2)^{2m} / (m!)^2, scaled by `first`; stops once a term drops
/// below 1e-16 of the running sum.
fn series(x: f64, first: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = first;
    let mut sum = first;
    let mut m = 1.0;
    loop {
        term *= q / (m * m);
        sum += term;
        if term < 1e-16 * sum {
            return sum;
        }
        m += 1.0;
    }
}

/// Hankel expansion e^{-x} I0(x) ~ (2 pi x)^{-1/2} sum_k [(2k-1)!!]^2 / (k! (8x)^k),
/// truncated at the smallest term.
fn asymptotic_scaled(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
        if next >= term || next < 1e-17 * sum {
            break;
        }
        term = next;
        sum += term;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}
