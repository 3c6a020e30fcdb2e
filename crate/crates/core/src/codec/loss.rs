//! Training objectives: reconstruction MSE, per-patch softmax KL, keep-ratio
//! penalty and masked token distillation.

use crate::error::{Error, Result};

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("{what}: length {a} vs {b}")));
    }
    Ok(())
}

/// `(1/N) sum_k ||w_k - w_hat_k||^2` over patches.
pub fn loss_mse(w: &[Vec<f64>], w_hat: &[Vec<f64>]) -> Result<f64> {
    same_len(w.len(), w_hat.len(), "patch count")?;
    if w.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (a, b) in w.iter().zip(w_hat) {
        same_len(a.len(), b.len(), "patch length")?;
        total += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total / w.len() as f64)
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

/// `KL(softmax(x) || softmax(y))` and its gradient with respect to `x`.
pub fn kl_softmax_grad(x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let lp = log_softmax(x);
    let lq = log_softmax(y);
    let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    let kl: f64 = p.iter().zip(lp.iter().zip(&lq)).map(|(pi, (a, b))| pi * (a - b)).sum();
    let grad = p
        .iter()
        .zip(lp.iter().zip(&lq))
        .map(|(pi, (a, b))| pi * ((a - b) - kl))
        .collect();
    (kl, grad)
}

/// Mean over patches of `KL(softmax(student_k) || softmax(teacher_k))`.
pub fn loss_kl(student: &[Vec<f64>], teacher: &[Vec<f64>]) -> Result<f64> {
    same_len(student.len(), teacher.len(), "patch count")?;
    if student.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (a, b) in student.iter().zip(teacher) {
        same_len(a.len(), b.len(), "patch length")?;
        total += kl_softmax_grad(a, b).0;
    }
    Ok(total / student.len() as f64)
}

/// Squared deviation of each stage's keep ratio from `delta`, averaged over
/// images and stages. `masks[t][m]` is the keep mask after stage `m`; the
/// ratio is taken against the tokens active before the stage.
pub fn loss_sparsity(masks: &[Vec<Vec<bool>>], delta: f64) -> f64 {
    let mut total = 0.0;
    let mut terms = 0usize;
    for image in masks {
        let mut active = image.first().map_or(0, |m| m.len());
        for stage in image {
            let kept = stage.iter().filter(|&&k| k).count();
            let ratio = if active == 0 { 0.0 } else { kept as f64 / active as f64 };
            total += (delta - ratio).powi(2);
            terms += 1;
            active = kept;
        }
    }
    if terms == 0 {
        0.0
    } else {
        total / terms as f64
    }
}

/// `sum_k D_k ||t_k - t'_k||^2 / sum_k D_k`; zero when nothing is kept.
pub fn loss_distill(keep: &[bool], student: &[Vec<f64>], teacher: &[Vec<f64>]) -> Result<f64> {
    same_len(keep.len(), student.len(), "token count")?;
    same_len(keep.len(), teacher.len(), "token count")?;
    let kept = keep.iter().filter(|&&k| k).count();
    if kept == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ((&k, a), b) in keep.iter().zip(student).zip(teacher) {
        if k {
            same_len(a.len(), b.len(), "token length")?;
            total += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    Ok(total / kept as f64)
}

/// Loss weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub kl: f64,
    pub distill: f64,
    pub sparsity: f64,
    pub delta: f64,
}

/// Per-term breakdown of one evaluation of the total objective.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub mse: f64,
    pub kl: f64,
    pub sparsity: f64,
    pub distill: f64,
    pub total: f64,
}

/// One image worth of inputs to the total objective.
pub struct ImageTerms<'a> {
    pub target: &'a [Vec<f64>],
    pub student_out: &'a [Vec<f64>],
    pub teacher_out: &'a [Vec<f64>],
    pub stage_masks: &'a [Vec<bool>],
    pub student_tokens: &'a [Vec<f64>],
    pub teacher_tokens: &'a [Vec<f64>],
}

/// `L_MSE + l_KL KL + l_delta L_delta + l_distill L_distill`, each averaged
/// over the batch.
pub fn loss_total(batch: &[ImageTerms], w: &LossWeights) -> Result<LossParts> {
    let mut parts = LossParts::default();
    if batch.is_empty() {
        return Ok(parts);
    }
    let t = batch.len() as f64;
    let mut masks = Vec::with_capacity(batch.len());
    for img in batch {
        parts.mse += loss_mse(img.target, img.student_out)? / t;
        if w.kl != 0.0 {
            parts.kl += loss_kl(img.student_out, img.teacher_out)? / t;
        }
        if w.distill != 0.0 {
            let keep = img.stage_masks.last().ok_or_else(|| Error::invalid("no stage masks"))?;
            parts.distill += loss_distill(keep, img.student_tokens, img.teacher_tokens)? / t;
        }
        masks.push(img.stage_masks.to_vec());
    }
    parts.sparsity = loss_sparsity(&masks, w.delta);
    parts.total = parts.mse + w.kl * parts.kl + w.sparsity * parts.sparsity + w.distill * parts.distill;
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_constant_offset() {
        let w = vec![vec![0.2; 64]; 4];
        let shifted: Vec<Vec<f64>> = w.iter().map(|p| p.iter().map(|v| v + 0.1).collect()).collect();
        assert_eq!(loss_mse(&w, &w).unwrap(), 0.0);
        assert!((loss_mse(&w, &shifted).unwrap() - 64.0 * 0.01).abs() < 1e-12);
        assert!(loss_mse(&w, &w[..2]).is_err());
    }

    #[test]
    fn sparsity_examples() {
        let mut m = vec![false; 64];
        m[..32].iter_mut().for_each(|v| *v = true);
        assert!((loss_sparsity(&[vec![m]], 0.7) - 0.04).abs() < 1e-15);
        let m1: Vec<bool> = (0..10).map(|i| i < 7).collect();
        let m2: Vec<bool> = (0..10).map(|i| i == 0 || i == 3 || i == 6).collect();
        assert!(loss_sparsity(&[vec![m1.clone()]], 0.7) < 1e-30);
        let shuffled: Vec<bool> = m1.iter().rev().copied().collect();
        assert_eq!(loss_sparsity(&[vec![m1, m2.clone()]], 0.7), loss_sparsity(&[vec![shuffled, m2]], 0.7));
    }

    #[test]
    fn kl_identity_and_gradient() {
        let x = vec![0.3, -1.0, 2.0, 0.0];
        let (kl, g) = kl_softmax_grad(&x, &x);
        assert!(kl.abs() < 1e-15);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let y = vec![1.0, 0.5, -0.2, 0.1];
        let (_, g) = kl_softmax_grad(&x, &y);
        for i in 0..4 {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (kl_softmax_grad(&a, &y).0 - kl_softmax_grad(&b, &y).0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn distill_empty_keep_is_zero() {
        let t = vec![vec![1.0; 4]; 3];
        let s = vec![vec![0.0; 4]; 3];
        assert_eq!(loss_distill(&[false; 3], &s, &t).unwrap(), 0.0);
        assert_eq!(loss_distill(&[true, false, false], &s, &t).unwrap(), 4.0);
    }

    #[test]
    fn zero_weights_leave_mse() {
        let target = vec![vec![0.0, 1.0]; 2];
        let out = vec![vec![0.5, 0.5]; 2];
        let teacher = vec![vec![0.9, 0.1]; 2];
        let masks = vec![vec![true, false]];
        let tok = vec![vec![0.1]; 2];
        let tok_t = vec![vec![0.7]; 2];
        let img = ImageTerms {
            target: &target,
            student_out: &out,
            teacher_out: &teacher,
            stage_masks: &masks,
            student_tokens: &tok,
            teacher_tokens: &tok_t,
        };
        let w = LossWeights {
            kl: 0.0,
            distill: 0.0,
            sparsity: 0.0,
            delta: 0.7,
        };
        let parts = loss_total(&[img], &w).unwrap();
        assert_eq!(parts.total, parts.mse);
        assert!((parts.mse - 0.5).abs() < 1e-15);
    }
}
