//! Teacher and student training with masked inputs, distillation and Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::loss::{kl_softmax_grad, LossParts, LossWeights};
use super::model::{backward, forward, ForwardCache, ForwardOptions, Upstream};
use super::params::CodecParams;
use crate::error::{Error, Result};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_kl: f64,
    pub lambda_distill: f64,
    pub lambda_delta: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// MAE mask ratio of the teacher run.
    pub mask_ratio: f64,
    /// MAE mask ratio of the student run.
    pub student_mask_ratio: f64,
    pub epochs: usize,
    /// Epochs of the student run.
    pub student_epochs: usize,
    pub delta_train: f64,
    /// Upper bound of the per-image Gaussian noise std added to transmitted
    /// tokens; each image draws its std uniformly from `[0, token_noise_std]`.
    pub token_noise_std: f64,
    pub straight_through: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_kl: 0.1,
            lambda_distill: 0.02,
            lambda_delta: 1.0,
            learning_rate: 1e-3,
            batch_size: 16,
            mask_ratio: 0.25,
            student_mask_ratio: 0.0,
            epochs: 60,
            student_epochs: 150,
            delta_train: 0.7,
            token_noise_std: 0.25,
            straight_through: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_kl, self.lambda_distill, self.lambda_delta];
        if lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be >= 0: {lambdas:?}")));
        }
        for r in [self.mask_ratio, self.student_mask_ratio] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("mask ratios must be in [0, 1), got {r}")));
            }
        }
        if !(self.delta_train > 0.0 && self.delta_train <= 1.0) {
            return Err(Error::Config(format!("delta_train must be in (0, 1], got {}", self.delta_train)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.token_noise_std >= 0.0) {
            return Err(Error::Config("learning_rate and token_noise_std must be >= 0".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            kl: self.lambda_kl,
            distill: self.lambda_distill,
            sparsity: self.lambda_delta,
            delta: self.delta_train,
        }
    }

    /// Teacher objective: no dropping and no teacher terms.
    pub fn teacher_variant(&self) -> Self {
        Self {
            lambda_kl: 0.0,
            lambda_distill: 0.0,
            lambda_delta: 0.0,
            delta_train: 1.0,
            straight_through: false,
            ..self.clone()
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// What enters the objective beyond the student forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveSpec<'a> {
    pub weights: LossWeights,
    pub teacher: Option<&'a CodecParams>,
    pub straight_through: bool,
    /// Route the keep-ratio penalty to the predictors through mean scores.
    pub sparsity_surrogate: bool,
    /// Adds `sum_{m,k} c[m][k] * score[m][k]` over active tokens to the objective.
    pub score_weights: Option<&'a [Vec<f64>]>,
}

/// Objective of one image. When `grad` is given, accumulates
/// `scale * dObjective/dparams` into it.
pub fn image_objective(
    params: &CodecParams,
    patches: &[f64],
    opts: &ForwardOptions,
    spec: &ObjectiveSpec,
    scale: f64,
    grad: Option<&mut [f64]>,
) -> Result<(LossParts, ForwardCache)> {
    let dims = params.dims;
    let (n, l, p) = (dims.n_tokens(), dims.token_len, dims.patch_len());
    let cache = forward(params, patches, opts)?;
    let w = &spec.weights;
    let mut parts = LossParts::default();
    let out = &cache.dec.out;

    let mut d_out = vec![0.0; n * p];
    for i in 0..n * p {
        let e = out[i] - patches[i];
        parts.mse += e * e;
        d_out[i] = scale * 2.0 * e / n as f64;
    }
    parts.mse /= n as f64;

    let mut d_tokens = None;
    if let Some(teacher) = spec.teacher {
        let t_opts = ForwardOptions {
            delta: 1.0,
            forced_keep: None,
            token_noise: None,
            ..*opts
        };
        let tc = forward(teacher, patches, &t_opts)?;
        if w.kl != 0.0 {
            for k in 0..n {
                let r = k * p..(k + 1) * p;
                let (kl, g) = kl_softmax_grad(&out[r.clone()], &tc.dec.out[r.clone()]);
                parts.kl += kl / n as f64;
                for (d, gi) in d_out[r].iter_mut().zip(g) {
                    *d += scale * w.kl * gi / n as f64;
                }
            }
        }
        if w.distill != 0.0 {
            let kept = cache.kept();
            let mut dt = vec![0.0; n * l];
            if kept > 0 {
                for k in (0..n).filter(|&k| cache.gate[k]) {
                    for i in k * l..(k + 1) * l {
                        let e = cache.tokens[i] - tc.tokens[i];
                        parts.distill += e * e / kept as f64;
                        dt[i] = scale * w.distill * 2.0 * e / kept as f64;
                    }
                }
            }
            d_tokens = Some(dt);
        }
    }

    let mut active = n;
    for st in &cache.stages {
        let kept = st.keep.iter().filter(|&&k| k).count();
        let ratio = if active == 0 { 0.0 } else { kept as f64 / active as f64 };
        parts.sparsity += (w.delta - ratio).powi(2) / cache.stages.len() as f64;
        active = kept;
    }

    let mut extra = 0.0;
    if let Some(c) = spec.score_weights {
        for (st, cm) in cache.stages.iter().zip(c) {
            extra += st.active.iter().map(|&k| cm[k] * st.scores[k]).sum::<f64>();
        }
    }
    parts.total = parts.mse + w.kl * parts.kl + w.sparsity * parts.sparsity + w.distill * parts.distill + extra;

    if let Some(grad) = grad {
        let scaled_scores: Option<Vec<Vec<f64>>> = spec
            .score_weights
            .map(|c| c.iter().map(|row| row.iter().map(|v| v * scale).collect()).collect());
        let stages = cache.stages.len().max(1) as f64;
        let up = Upstream {
            d_out: &d_out,
            d_tokens: d_tokens.as_deref(),
            d_scores: scaled_scores.as_deref(),
            straight_through: spec.straight_through,
            sparsity: (spec.sparsity_surrogate && w.sparsity > 0.0).then(|| (scale * w.sparsity / stages, w.delta)),
        };
        backward(params, &cache, patches, &up, grad)?;
    }
    Ok((parts, cache))
}

/// Random MAE mask with `round(ratio * n)` hidden patches.
pub fn random_mae_mask<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Vec<bool> {
    let hidden = ((ratio * n as f64).round() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut mask = vec![false; n];
    for &i in &idx[..hidden] {
        mask[i] = true;
    }
    mask
}

/// One Adam update on a batch of flattened images. Returns the mean loss.
pub fn train_step<R: Rng + ?Sized>(
    batch: &[&[f64]],
    params: &mut CodecParams,
    adam: &mut Adam,
    teacher: Option<&CodecParams>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossParts> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let dims = params.dims;
    let (n, l) = (dims.n_tokens(), dims.token_len);
    let scale = 1.0 / batch.len() as f64;
    let spec = ObjectiveSpec {
        weights: cfg.weights(),
        teacher,
        straight_through: cfg.straight_through,
        sparsity_surrogate: cfg.straight_through,
        score_weights: None,
    };
    let mut grad = vec![0.0; params.data.len()];
    let mut mean = LossParts::default();
    for patches in batch {
        let mask = random_mae_mask(n, cfg.mask_ratio, rng);
        let noise: Option<Vec<f64>> = (cfg.token_noise_std > 0.0).then(|| {
            let std = cfg.token_noise_std * rng.random::<f64>();
            (0..n * l).map(|_| { let z: f64 = StandardNormal.sample(&mut *rng); std * z }).collect()
        });
        let opts = ForwardOptions {
            mae_mask: Some(&mask),
            token_noise: noise.as_deref(),
            ..ForwardOptions::new(cfg.delta_train)
        };
        let (parts, _) = image_objective(params, patches, &opts, &spec, scale, Some(&mut grad))?;
        if !parts.total.is_finite() {
            return Err(Error::Numeric(format!("non-finite training loss {parts:?}")));
        }
        mean.mse += parts.mse * scale;
        mean.kl += parts.kl * scale;
        mean.sparsity += parts.sparsity * scale;
        mean.distill += parts.distill * scale;
        mean.total += parts.total * scale;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    adam.step(&mut params.data, &grad);
    Ok(mean)
}

/// Per-epoch mean losses.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<LossParts>,
}

/// Runs `cfg.epochs` shuffled passes over `corpus`.
pub fn train<R: Rng + ?Sized>(
    corpus: &[Vec<f64>],
    params: &mut CodecParams,
    teacher: Option<&CodecParams>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainLog> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    let mut adam = Adam::new(params.data.len(), cfg.learning_rate);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch = LossParts::default();
        let batches = order.chunks(cfg.batch_size);
        let nb = batches.len() as f64;
        for chunk in batches {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| corpus[i].as_slice()).collect();
            let parts = train_step(&batch, params, &mut adam, teacher, cfg, rng)?;
            epoch.mse += parts.mse / nb;
            epoch.kl += parts.kl / nb;
            epoch.sparsity += parts.sparsity / nb;
            epoch.distill += parts.distill / nb;
            epoch.total += parts.total / nb;
        }
        log.epochs.push(epoch);
    }
    Ok(log)
}

/// Trains the dense teacher from a fresh initialization.
pub fn train_teacher<R: Rng + ?Sized>(
    corpus: &[Vec<f64>],
    dims: super::params::CodecDims,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(CodecParams, TrainLog)> {
    let mut params = CodecParams::init(dims, rng)?;
    let log = train(corpus, &mut params, None, &cfg.teacher_variant(), rng)?;
    Ok((params, log))
}

/// Trains the sparsified student, starting from the teacher's weights.
pub fn train_student<R: Rng + ?Sized>(
    corpus: &[Vec<f64>],
    teacher: &CodecParams,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(CodecParams, TrainLog)> {
    let mut params = teacher.clone();
    let cfg = TrainConfig {
        mask_ratio: cfg.student_mask_ratio,
        epochs: cfg.student_epochs,
        ..cfg.clone()
    };
    let log = train(corpus, &mut params, Some(teacher), &cfg, rng)?;
    Ok((params, log))
}
