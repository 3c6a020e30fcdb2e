//! Reference implementations written independently of the crate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Power series of the modified Bessel function of order zero.
pub fn bessel_i0_series(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..5000 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Rician SINR density written from the textbook form, in log space.
pub fn rician_pdf(gamma: f64, k: f64, mean: f64) -> f64 {
    let a = (k + 1.0) / mean;
    let arg = 2.0 * (k * (k + 1.0) * gamma / mean).sqrt();
    let log_i0 = if arg < 600.0 {
        bessel_i0_series(arg).ln()
    } else {
        arg - 0.5 * (2.0 * std::f64::consts::PI * arg).ln() + (1.0 + 1.0 / (8.0 * arg)).ln()
    };
    a * (-k - a * gamma + log_i0).exp()
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// One Rician SINR draw: `|h|^2 * mean` with `E|h|^2 = 1`.
pub fn rician_gamma<R: Rng>(k: f64, mean: f64, rng: &mut R) -> f64 {
    let los = (k / (k + 1.0)).sqrt();
    let s = (0.5 / (k + 1.0)).sqrt();
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    ((los + s * x).powi(2) + (s * y).powi(2)) * mean
}

/// 8x8 orthonormal DCT-II by the defining double sum.
pub fn dct8(block: &[f64]) -> Vec<f64> {
    let c = |u: usize| if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
    let mut out = vec![0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                for y in 0..8 {
                    s += block[x * 8 + y]
                        * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / 16.0).cos()
                        * (std::f64::consts::PI * (2 * y + 1) as f64 * v as f64 / 16.0).cos();
                }
            }
            out[u * 8 + v] = c(u) * c(v) * s;
        }
    }
    out
}

/// Spearman correlation with average ranks, computed as Pearson on ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Value iteration on a deterministic MDP given as `next[s][a]` (None is
/// terminal) and `reward[s][a]`.
pub fn value_iteration(next: &[Vec<Option<usize>>], reward: &[Vec<f64>], discount: f64) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = reward.iter().map(|r| vec![0.0; r.len()]).collect();
    for _ in 0..100_000 {
        let v: Vec<f64> = q.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut change: f64 = 0.0;
        for s in 0..q.len() {
            for a in 0..q[s].len() {
                let new = reward[s][a] + next[s][a].map_or(0.0, |s2| discount * v[s2]);
                change = change.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    q
}
