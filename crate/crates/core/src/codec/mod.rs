//! Sparsifying semantic token codec.
//!
//! `encode` embeds the image patches, runs the encoder stages with top-k
//! retention and quantizes the surviving tokens; `decode` rebuilds every
//! patch from the received tokens, filling dropped positions with a learned
//! mask token.

pub mod corpus;
pub mod loss;
pub mod model;
pub mod params;
pub mod payload;
pub mod train;

use crate::error::{Error, Result};
use crate::surface::{merge_patches, split_patches, CameraImage, PatchGrid};

pub use loss::{loss_distill, loss_kl, loss_mse, loss_sparsity, loss_total, LossParts, LossWeights};
pub use model::{decoder_forward, forward, predict_importance, select_tokens, ForwardOptions, SelectionMode};
pub use corpus::CorpusSpec;
pub use params::{CodecDims, CodecParams};
pub use payload::{dequantize, quantize, Precision, QuantizedPayload};
pub use train::{train_student, train_teacher, TrainConfig};

/// Encoder output.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    /// Final encoder value of every token; dropped tokens hold the value they
    /// had when they were dropped.
    pub tokens: Vec<Vec<f64>>,
    /// Keep mask after each stage.
    pub stage_masks: Vec<Vec<bool>>,
    /// Importance scores per stage; entries of tokens inactive at that stage are `NaN`.
    pub scores: Vec<Vec<f64>>,
}

impl TokenSequence {
    pub fn kept(&self) -> usize {
        self.stage_masks
            .last()
            .map_or(self.tokens.len(), |m| m.iter().filter(|&&k| k).count())
    }

    /// `kept_m / active_{m-1}` for every stage.
    pub fn keep_ratios(&self) -> Vec<f64> {
        let mut active = self.tokens.len();
        self.stage_masks
            .iter()
            .map(|m| {
                let kept = m.iter().filter(|&&k| k).count();
                let r = kept as f64 / active.max(1) as f64;
                active = kept;
                r
            })
            .collect()
    }

    /// Scores of tokens active at each stage, flattened.
    pub fn active_scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().flatten().copied().filter(|s| !s.is_nan())
    }
}

/// Embeds every patch linearly; no stages are run.
pub fn patch_embed(patches: &PatchGrid, params: &CodecParams) -> Result<TokenSequence> {
    if patches.b != params.dims.patch_side {
        return Err(Error::invalid(format!(
            "patch side {} does not match codec patch side {}",
            patches.b, params.dims.patch_side
        )));
    }
    let tokens = model::embed_patches(params, &patches.patches)?;
    Ok(TokenSequence {
        tokens,
        stage_masks: Vec::new(),
        scores: Vec::new(),
    })
}

pub(crate) fn flatten_image(image: &CameraImage, dims: &CodecDims) -> Result<Vec<f64>> {
    let side = dims.image_side();
    if image.width != side || image.height != side {
        return Err(Error::invalid(format!(
            "codec expects {side}x{side} images, got {}x{}",
            image.width, image.height
        )));
    }
    let grid = split_patches(image, dims.patch_side)?;
    Ok(grid.patches.concat())
}

/// Runs the encoder at keep ratio `delta` and packs the retained tokens.
pub fn encode(
    image: &CameraImage,
    delta: f64,
    params: &CodecParams,
    precision: Precision,
) -> Result<(TokenSequence, QuantizedPayload)> {
    encode_with_mode(image, delta, params, precision, SelectionMode::TopK)
}

pub fn encode_with_mode(
    image: &CameraImage,
    delta: f64,
    params: &CodecParams,
    precision: Precision,
    mode: SelectionMode,
) -> Result<(TokenSequence, QuantizedPayload)> {
    let dims = params.dims;
    let patches = flatten_image(image, &dims)?;
    let opts = ForwardOptions {
        mode,
        ..ForwardOptions::new(delta)
    };
    let cache = model::forward(params, &patches, &opts)?;
    Ok(package(&cache, &dims, precision))
}

fn package(cache: &model::ForwardCache, dims: &CodecDims, precision: Precision) -> (TokenSequence, QuantizedPayload) {
    let (n, l) = (dims.n_tokens(), dims.token_len);
    let tokens: Vec<Vec<f64>> = cache.tokens.chunks_exact(l).map(<[f64]>::to_vec).collect();
    let stage_masks: Vec<Vec<bool>> = cache.stages.iter().map(|s| s.keep.clone()).collect();
    let scores = cache
        .stages
        .iter()
        .map(|s| {
            let mut row = vec![f64::NAN; n];
            for &k in &s.active {
                row[k] = s.scores[k];
            }
            row
        })
        .collect();
    let keep_mask = cache.gate.clone();
    let mut values = Vec::with_capacity(cache.kept() * l);
    for k in (0..n).filter(|&k| keep_mask[k]) {
        for &v in &tokens[k] {
            values.push(match precision {
                Precision::Int8 => payload::snap(v),
                Precision::Float64 => v,
            });
        }
    }
    let seq = TokenSequence {
        tokens,
        stage_masks,
        scores,
    };
    let payload = QuantizedPayload {
        token_len: l,
        keep_mask,
        values,
        precision,
    };
    (seq, payload)
}

/// Rebuilds an image from a received payload; output clamped to [0, 1].
pub fn decode(payload: &QuantizedPayload, params: &CodecParams) -> Result<CameraImage> {
    let dims = params.dims;
    let (n, l, p) = (dims.n_tokens(), dims.token_len, dims.patch_len());
    if payload.n_tokens() != n || payload.token_len != l {
        return Err(Error::CorruptPayload(format!(
            "payload has {} tokens of length {}, codec expects {n} of length {l}",
            payload.n_tokens(),
            payload.token_len
        )));
    }
    payload.validate()?;
    let lay = &params.layout;
    let mask_token = &params.data[lay.dec_mask..lay.dec_mask + l];
    let mut z0 = Vec::with_capacity(n * l);
    let mut next = 0;
    for &kept in &payload.keep_mask {
        if kept {
            z0.extend_from_slice(payload.token(next));
            next += 1;
        } else {
            z0.extend_from_slice(mask_token);
        }
    }
    let dec = model::decoder_forward(params, z0);
    let patches: Vec<Vec<f64>> = dec
        .out
        .chunks_exact(p)
        .map(|c| c.iter().map(|v| v.clamp(0.0, 1.0)).collect())
        .collect();
    merge_patches(&PatchGrid {
        b: dims.patch_side,
        cols: dims.grid_side,
        rows: dims.grid_side,
        patches,
    })
}

/// Noiseless `decode(encode(image))`.
pub fn reconstruct(image: &CameraImage, delta: f64, params: &CodecParams, precision: Precision) -> Result<CameraImage> {
    let (_, payload) = encode(image, delta, params, precision)?;
    decode(&payload, params)
}
