//! Posterior over the target cell and the detection likelihood model.

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics;

/// Probability of detecting cell `z` when the target is cell `c`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConfusionModel {
    /// `accuracy` on the diagonal, the remainder spread evenly.
    Symmetric { n: usize, accuracy: f64 },
    /// Row-stochastic `n x n` matrix, row = true cell, column = detected cell.
    Matrix { n: usize, probs: Vec<f64> },
}

impl ConfusionModel {
    pub fn symmetric(n: usize, accuracy: f64) -> Result<Self> {
        if n < 2 || !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::invalid(format!("bad symmetric confusion: n={n}, accuracy={accuracy}")));
        }
        Ok(Self::Symmetric { n, accuracy })
    }

    pub fn matrix(n: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n * n {
            return Err(Error::invalid(format!("confusion matrix needs {} entries, got {}", n * n, probs.len())));
        }
        for row in probs.chunks_exact(n) {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("confusion rows must be non-negative and sum to 1"));
            }
        }
        Ok(Self::Matrix { n, probs })
    }

    pub fn n(&self) -> usize {
        match self {
            Self::Symmetric { n, .. } | Self::Matrix { n, .. } => *n,
        }
    }

    /// `P(z | c)`.
    pub fn likelihood(&self, z: usize, c: usize) -> f64 {
        match self {
            Self::Symmetric { n, accuracy } => {
                if z == c {
                    *accuracy
                } else {
                    (1.0 - accuracy) / (*n - 1) as f64
                }
            }
            Self::Matrix { n, probs } => probs[c * n + z],
        }
    }

    /// Draws a detection for true cell `c`.
    pub fn sample<R: Rng + ?Sized>(&self, c: usize, rng: &mut R) -> usize {
        match self {
            Self::Symmetric { n, accuracy } => {
                if rng.random::<f64>() < *accuracy {
                    c
                } else {
                    let k = rng.random_range(0..n - 1);
                    if k >= c {
                        k + 1
                    } else {
                        k
                    }
                }
            }
            Self::Matrix { n, probs } => {
                let u = rng.random::<f64>();
                let mut acc = 0.0;
                for (z, p) in probs[c * n..(c + 1) * n].iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return z;
                    }
                }
                n - 1
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Belief {
    pub probs: Vec<f64>,
}

impl Belief {
    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Most likely cell; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn entropy(&self) -> f64 {
        metrics::entropy(&self.probs)
    }
}

/// Bayes update for a static target: `b'(c) ~ P(z | c) b(c)`. Returns the
/// updated belief and whether it collapsed to zero and was reset to uniform.
pub fn belief_update(b: &Belief, z: usize, confusion: &ConfusionModel) -> Result<(Belief, bool)> {
    let n = b.probs.len();
    if confusion.n() != n || z >= n {
        return Err(Error::invalid(format!(
            "belief over {n} cells, confusion over {}, detection {z}",
            confusion.n()
        )));
    }
    let mut probs: Vec<f64> = b
        .probs
        .iter()
        .enumerate()
        .map(|(c, p)| confusion.likelihood(z, c) * p)
        .collect();
    let s: f64 = probs.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return Ok((Belief::uniform(n), true));
    }
    probs.iter_mut().for_each(|p| *p /= s);
    Ok((Belief { probs }, false))
}
