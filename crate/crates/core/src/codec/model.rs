//! Forward and reverse passes of the token codec.
//!
//! Encoder: linear patch embedding, then `stages` per-token `tanh` blocks,
//! each followed by an importance predictor and top-k retention. Decoder:
//! residual blocks `z + tanh(W z + sum_d U_d z_{nbr(d)} + b)` over the four
//! grid neighbours of each token (zero past the border), then a linear projection to pixels.

use super::params::CodecParams;
use crate::error::{Error, Result};

/// How a stage turns importance scores into a keep mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Keep the `ceil(delta * active)` highest scores, ties to the lower index.
    #[default]
    TopK,
    /// Keep every token whose score is at most `delta`.
    Threshold,
}

/// Keep flags parallel to `scores`.
pub fn select_tokens(scores: &[f64], delta: f64, mode: SelectionMode) -> Result<Vec<bool>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("keep ratio must be in (0, 1], got {delta}")));
    }
    match mode {
        SelectionMode::Threshold => Ok(scores.iter().map(|&s| s <= delta).collect()),
        SelectionMode::TopK => {
            let k = kept_count(scores.len(), delta);
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut keep = vec![false; scores.len()];
            for &i in &order[..k] {
                keep[i] = true;
            }
            Ok(keep)
        }
    }
}

/// `ceil(delta * active)` with a guard against `0.7 * 64 = 44.800000000000004`
/// style rounding noise.
pub fn kept_count(active: usize, delta: f64) -> usize {
    let raw = delta * active as f64;
    let k = (raw - 1e-9).ceil().max(0.0) as usize;
    k.min(active)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T g`.
fn matvec_t_add(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += gi * a;
            }
        }
    }
}

/// `dW += g x^T`.
fn outer_add(dw: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (gi, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if *gi != 0.0 {
            for (d, xj) in row.iter_mut().zip(x) {
                *d += gi * xj;
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Neighbours of every cell on a `side x side` grid, ordered up, left,
/// right, down; `None` past the border.
pub fn grid_neighbours(side: usize) -> Vec<[Option<usize>; 4]> {
    let mut out = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            out.push([
                (r > 0).then(|| (r - 1) * side + c),
                (c > 0).then(|| r * side + c - 1),
                (c + 1 < side).then(|| r * side + c + 1),
                (r + 1 < side).then(|| (r + 1) * side + c),
            ]);
        }
    }
    out
}

/// One importance score for a single token at `stage` (0-based).
fn score_token(params: &CodecParams, stage: usize, h: &[f64], hidden: &mut [f64]) -> f64 {
    let lay = &params.layout;
    let d = &params.data;
    let nh = params.dims.predictor_hidden;
    let l = params.dims.token_len;
    hidden.copy_from_slice(&d[lay.pred_b1[stage]..lay.pred_b1[stage] + nh]);
    matvec_add(&d[lay.pred_w1[stage]..lay.pred_w1[stage] + nh * l], h, hidden);
    hidden.iter_mut().for_each(|v| *v = v.tanh());
    let w2 = &d[lay.pred_w2[stage]..lay.pred_w2[stage] + nh];
    let pre: f64 = d[lay.pred_b2[stage]] + w2.iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>();
    sigmoid(pre)
}

/// Per-token importance scores for `stage` (1-based).
pub fn predict_importance(tokens: &[Vec<f64>], params: &CodecParams, stage: usize) -> Result<Vec<f64>> {
    if stage == 0 || stage > params.dims.stages {
        return Err(Error::invalid(format!("stage must be in [1, {}], got {stage}", params.dims.stages)));
    }
    let mut hidden = vec![0.0; params.dims.predictor_hidden];
    tokens
        .iter()
        .map(|t| {
            check_len(t.len(), params.dims.token_len, "token")?;
            Ok(score_token(params, stage - 1, t, &mut hidden))
        })
        .collect()
}

fn check_len(got: usize, want: usize, what: &str) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!("{what} length {got}, expected {want}")));
    }
    Ok(())
}

/// Linear embedding of each patch.
pub fn embed_patches(params: &CodecParams, patches: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (p, l) = (params.dims.patch_len(), params.dims.token_len);
    let lay = &params.layout;
    let w = &params.data[lay.embed_w..lay.embed_w + l * p];
    let b = &params.data[lay.embed_b..lay.embed_b + l];
    patches
        .iter()
        .map(|patch| {
            check_len(patch.len(), p, "patch")?;
            let mut t = b.to_vec();
            matvec_add(w, patch, &mut t);
            Ok(t)
        })
        .collect()
}

/// Options for a training or inference forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOptions<'a> {
    pub delta: f64,
    pub mode: SelectionMode,
    /// Patches replaced by the encoder mask token (MAE masking).
    pub mae_mask: Option<&'a [bool]>,
    /// Keep masks to impose instead of selecting, one per stage.
    pub forced_keep: Option<&'a [Vec<bool>]>,
    /// Additive noise on the decoder input of kept tokens (`N * L`).
    pub token_noise: Option<&'a [f64]>,
}

impl<'a> ForwardOptions<'a> {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            mode: SelectionMode::TopK,
            mae_mask: None,
            forced_keep: None,
            token_noise: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StageCache {
    /// Tokens entering this stage, ascending.
    pub active: Vec<usize>,
    /// Block input (`N * L`, rows of inactive tokens unused).
    pub input: Vec<f64>,
    pub h: Vec<f64>,
    pub hidden: Vec<f64>,
    pub scores: Vec<f64>,
    /// Retention after this stage over all `N` tokens.
    pub keep: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct DecoderCache {
    pub z: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
    /// Unclamped pixel predictions (`N * P`).
    pub out: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub x0: Vec<f64>,
    pub masked: Vec<bool>,
    pub stages: Vec<StageCache>,
    /// Last encoder value of every token (`N * L`).
    pub tokens: Vec<f64>,
    pub gate: Vec<bool>,
    pub dec: DecoderCache,
}

impl ForwardCache {
    pub fn kept(&self) -> usize {
        self.gate.iter().filter(|&&g| g).count()
    }
}

/// Runs the decoder from its `N * L` input.
pub fn decoder_forward(params: &CodecParams, z0: Vec<f64>) -> DecoderCache {
    let dims = &params.dims;
    let (n, l, p) = (dims.n_tokens(), dims.token_len, dims.patch_len());
    let lay = &params.layout;
    let d = &params.data;
    let nbrs = grid_neighbours(dims.grid_side);
    let mut z = vec![z0];
    let mut act_all = Vec::with_capacity(dims.decoder_blocks);
    for blk in 0..dims.decoder_blocks {
        let cur = z.last().expect("decoder input");
        let w = &d[lay.dec_w[blk]..lay.dec_w[blk] + l * l];
        let b = &d[lay.dec_b[blk]..lay.dec_b[blk] + l];
        let mut act = vec![0.0; n * l];
        let mut next = cur.clone();
        for k in 0..n {
            let a = &mut act[k * l..(k + 1) * l];
            a.copy_from_slice(b);
            matvec_add(w, &cur[k * l..(k + 1) * l], a);
            for (dir, nbr) in nbrs[k].iter().enumerate() {
                if let Some(j) = *nbr {
                    let u = lay.dec_u[blk][dir];
                    matvec_add(&d[u..u + l * l], &cur[j * l..(j + 1) * l], a);
                }
            }
            a.iter_mut().for_each(|v| *v = v.tanh());
            add_into(&mut next[k * l..(k + 1) * l], a);
        }
        act_all.push(act);
        z.push(next);
    }
    let last = z.last().expect("decoder output");
    let ow = &d[lay.out_w..lay.out_w + p * l];
    let ob = &d[lay.out_b..lay.out_b + p];
    let mut out = vec![0.0; n * p];
    for k in 0..n {
        let o = &mut out[k * p..(k + 1) * p];
        o.copy_from_slice(ob);
        matvec_add(ow, &last[k * l..(k + 1) * l], o);
    }
    DecoderCache {
        z,
        act: act_all,
        out,
    }
}

/// Full codec pass on `N` flattened patches (`N * P`).
pub fn forward(params: &CodecParams, patches: &[f64], opts: &ForwardOptions) -> Result<ForwardCache> {
    let dims = &params.dims;
    let (n, l, p, nh) = (dims.n_tokens(), dims.token_len, dims.patch_len(), dims.predictor_hidden);
    check_len(patches.len(), n * p, "patch buffer")?;
    if !(opts.delta > 0.0 && opts.delta <= 1.0) {
        return Err(Error::invalid(format!("keep ratio must be in (0, 1], got {}", opts.delta)));
    }
    let lay = &params.layout;
    let d = &params.data;
    let masked = match opts.mae_mask {
        Some(m) => {
            check_len(m.len(), n, "MAE mask")?;
            m.to_vec()
        }
        None => vec![false; n],
    };
    let mut x0 = vec![0.0; n * l];
    let ew = &d[lay.embed_w..lay.embed_w + l * p];
    let eb = &d[lay.embed_b..lay.embed_b + l];
    let em = &d[lay.enc_mask..lay.enc_mask + l];
    for k in 0..n {
        let t = &mut x0[k * l..(k + 1) * l];
        if masked[k] {
            t.copy_from_slice(em);
        } else {
            t.copy_from_slice(eb);
            matvec_add(ew, &patches[k * p..(k + 1) * p], t);
        }
    }

    let mut stages = Vec::with_capacity(dims.stages);
    let mut tokens = x0.clone();
    let mut alive = vec![true; n];
    for m in 0..dims.stages {
        let active: Vec<usize> = (0..n).filter(|&k| alive[k]).collect();
        let input = tokens.clone();
        let mut h = vec![0.0; n * l];
        let mut hidden = vec![0.0; n * nh];
        let mut scores = vec![0.0; n];
        let w = &d[lay.enc_w[m]..lay.enc_w[m] + l * l];
        let b = &d[lay.enc_b[m]..lay.enc_b[m] + l];
        for &k in &active {
            let hk = &mut h[k * l..(k + 1) * l];
            hk.copy_from_slice(b);
            matvec_add(w, &input[k * l..(k + 1) * l], hk);
            hk.iter_mut().for_each(|v| *v = v.tanh());
            scores[k] = score_token(params, m, &h[k * l..(k + 1) * l], &mut hidden[k * nh..(k + 1) * nh]);
            tokens[k * l..(k + 1) * l].copy_from_slice(&h[k * l..(k + 1) * l]);
        }
        let keep = match opts.forced_keep {
            Some(f) => {
                let f = f
                    .get(m)
                    .ok_or_else(|| Error::invalid(format!("forced keep mask missing for stage {m}")))?;
                check_len(f.len(), n, "forced keep mask")?;
                if f.iter().zip(&alive).any(|(&k, &a)| k && !a) {
                    return Err(Error::invalid("forced keep mask revives a dropped token"));
                }
                f.clone()
            }
            None => {
                let active_scores: Vec<f64> = active.iter().map(|&k| scores[k]).collect();
                let sel = select_tokens(&active_scores, opts.delta, opts.mode)?;
                let mut keep = vec![false; n];
                for (&k, s) in active.iter().zip(sel) {
                    keep[k] = s;
                }
                keep
            }
        };
        alive.clone_from(&keep);
        stages.push(StageCache {
            active,
            input,
            h,
            hidden,
            scores,
            keep,
        });
    }

    let gate = alive;
    let dm = &d[lay.dec_mask..lay.dec_mask + l];
    let mut z0 = vec![0.0; n * l];
    for k in 0..n {
        let zk = &mut z0[k * l..(k + 1) * l];
        if gate[k] {
            zk.copy_from_slice(&tokens[k * l..(k + 1) * l]);
            if let Some(noise) = opts.token_noise {
                check_len(noise.len(), n * l, "token noise")?;
                add_into(zk, &noise[k * l..(k + 1) * l]);
            }
        } else {
            zk.copy_from_slice(dm);
        }
    }
    let dec = decoder_forward(params, z0);
    Ok(ForwardCache {
        x0,
        masked,
        stages,
        tokens,
        gate,
        dec,
    })
}

/// Gradients arriving at the codec outputs.
#[derive(Clone, Copy, Debug, Default)]
pub struct Upstream<'a> {
    /// dL/d(pixel predictions), `N * P`.
    pub d_out: &'a [f64],
    /// dL/d(final token values), `N * L`.
    pub d_tokens: Option<&'a [f64]>,
    /// dL/d(scores) per stage, `N` each, read for active tokens only.
    pub d_scores: Option<&'a [Vec<f64>]>,
    /// Feed the gate gradient `(v_k - m) . dz0_k` to every score a token received.
    pub straight_through: bool,
    /// Adds `w * 2 (mean score - delta) / active` per stage to the score gradient.
    pub sparsity: Option<(f64, f64)>,
}

/// Accumulates parameter gradients into `grad` (same layout as `params.data`).
pub fn backward(
    params: &CodecParams,
    cache: &ForwardCache,
    patches: &[f64],
    up: &Upstream,
    grad: &mut [f64],
) -> Result<()> {
    let dims = &params.dims;
    let (n, l, p, nh) = (dims.n_tokens(), dims.token_len, dims.patch_len(), dims.predictor_hidden);
    check_len(up.d_out.len(), n * p, "output gradient")?;
    check_len(grad.len(), params.data.len(), "gradient buffer")?;
    let lay = &params.layout;
    let d = &params.data;
    let dec = &cache.dec;

    // Output projection.
    let last = dec.z.last().expect("decoder output");
    let ow = &d[lay.out_w..lay.out_w + p * l];
    let mut dz = vec![0.0; n * l];
    for k in 0..n {
        let g = &up.d_out[k * p..(k + 1) * p];
        outer_add(&mut grad[lay.out_w..lay.out_w + p * l], g, &last[k * l..(k + 1) * l]);
        add_into(&mut grad[lay.out_b..lay.out_b + p], g);
        matvec_t_add(ow, g, &mut dz[k * l..(k + 1) * l]);
    }

    // Decoder blocks in reverse.
    let nbrs = grid_neighbours(dims.grid_side);
    let mut dpre = vec![0.0; l];
    for blk in (0..dims.decoder_blocks).rev() {
        let zin = &dec.z[blk];
        let act = &dec.act[blk];
        let w = &d[lay.dec_w[blk]..lay.dec_w[blk] + l * l];
        let mut dz_in = dz.clone();
        for k in 0..n {
            for i in 0..l {
                let a = act[k * l + i];
                dpre[i] = dz[k * l + i] * (1.0 - a * a);
            }
            outer_add(&mut grad[lay.dec_w[blk]..lay.dec_w[blk] + l * l], &dpre, &zin[k * l..(k + 1) * l]);
            add_into(&mut grad[lay.dec_b[blk]..lay.dec_b[blk] + l], &dpre);
            matvec_t_add(w, &dpre, &mut dz_in[k * l..(k + 1) * l]);
            for (dir, nbr) in nbrs[k].iter().enumerate() {
                if let Some(j) = *nbr {
                    let u = lay.dec_u[blk][dir];
                    outer_add(&mut grad[u..u + l * l], &dpre, &zin[j * l..(j + 1) * l]);
                    matvec_t_add(&d[u..u + l * l], &dpre, &mut dz_in[j * l..(j + 1) * l]);
                }
            }
        }
        dz = dz_in;
    }

    // Decoder input: kept tokens or the decoder mask token.
    let dm = &d[lay.dec_mask..lay.dec_mask + l];
    let mut dtok = vec![0.0; n * l];
    let mut dgate = vec![0.0; n];
    let z0 = &dec.z[0];
    for k in 0..n {
        let g = &dz[k * l..(k + 1) * l];
        if cache.gate[k] {
            add_into(&mut dtok[k * l..(k + 1) * l], g);
        } else {
            add_into(&mut grad[lay.dec_mask..lay.dec_mask + l], g);
        }
        if up.straight_through {
            let v: &[f64] = if cache.gate[k] { &z0[k * l..(k + 1) * l] } else { &cache.tokens[k * l..(k + 1) * l] };
            dgate[k] = (0..l).map(|i| (v[i] - dm[i]) * g[i]).sum();
        }
    }
    if let Some(dt) = up.d_tokens {
        check_len(dt.len(), n * l, "token gradient")?;
        add_into(&mut dtok, dt);
    }

    // Stages in reverse: predictor head first (its input is the block
    // output), then the block itself. Tokens outside a stage pass unchanged.
    let mut dhid = vec![0.0; nh];
    let mut dpre = vec![0.0; l];
    for (m, st) in cache.stages.iter().enumerate().rev() {
        let mut dscore = vec![0.0; n];
        if let Some(ds) = up.d_scores {
            let ds = ds
                .get(m)
                .ok_or_else(|| Error::invalid(format!("score gradient missing for stage {m}")))?;
            check_len(ds.len(), n, "score gradient")?;
            for &k in &st.active {
                dscore[k] += ds[k];
            }
        }
        if up.straight_through {
            for &k in &st.active {
                dscore[k] += dgate[k];
            }
        }
        if let Some((weight, delta)) = up.sparsity {
            let na = st.active.len().max(1) as f64;
            let soft = st.active.iter().map(|&k| st.scores[k]).sum::<f64>() / na;
            let g = weight * 2.0 * (soft - delta) / na;
            for &k in &st.active {
                dscore[k] += g;
            }
        }
        let w2 = &d[lay.pred_w2[m]..lay.pred_w2[m] + nh];
        let w1 = lay.pred_w1[m];
        for &k in &st.active {
            if dscore[k] == 0.0 {
                continue;
            }
            let z = st.scores[k];
            let s = dscore[k] * z * (1.0 - z);
            let hid = &st.hidden[k * nh..(k + 1) * nh];
            grad[lay.pred_b2[m]] += s;
            for i in 0..nh {
                grad[lay.pred_w2[m] + i] += s * hid[i];
                dhid[i] = s * w2[i] * (1.0 - hid[i] * hid[i]);
            }
            outer_add(&mut grad[w1..w1 + nh * l], &dhid, &st.h[k * l..(k + 1) * l]);
            add_into(&mut grad[lay.pred_b1[m]..lay.pred_b1[m] + nh], &dhid);
            matvec_t_add(&d[w1..w1 + nh * l], &dhid, &mut dtok[k * l..(k + 1) * l]);
        }

        let w = &d[lay.enc_w[m]..lay.enc_w[m] + l * l];
        for &k in &st.active {
            for i in 0..l {
                let h = st.h[k * l + i];
                dpre[i] = dtok[k * l + i] * (1.0 - h * h);
            }
            outer_add(&mut grad[lay.enc_w[m]..lay.enc_w[m] + l * l], &dpre, &st.input[k * l..(k + 1) * l]);
            add_into(&mut grad[lay.enc_b[m]..lay.enc_b[m] + l], &dpre);
            let dk = &mut dtok[k * l..(k + 1) * l];
            dk.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_add(w, &dpre, dk);
        }
    }

    // Embedding or encoder mask token.
    for k in 0..n {
        let g = &dtok[k * l..(k + 1) * l];
        if cache.masked[k] {
            add_into(&mut grad[lay.enc_mask..lay.enc_mask + l], g);
        } else {
            outer_add(&mut grad[lay.embed_w..lay.embed_w + l * p], g, &patches[k * p..(k + 1) * p]);
            add_into(&mut grad[lay.embed_b..lay.embed_b + l], g);
        }
    }
    Ok(())
}
