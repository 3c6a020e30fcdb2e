//! Compute-time and energy cost model, transmission time, time-saving
//! threshold and the probability that sparsified transmission is faster.
//!
//! A layer's cost is a polynomial in its input features summed over the
//! tokens it processes:
//!
//! `t_l = sum_k f_k * (sum_j c_j prod_i a_i^q_ij + sum_s c'_s F_s)`
//!
//! where `f_k` is 1 for a token the layer sees and 0 otherwise. Energy uses
//! the same form with its own coefficients.

use rand::Rng;

use crate::channel::{capacity, draw_fading, sinr_cdf, ChannelConfig};
use crate::codec::CodecDims;
use crate::error::{Error, Result};

pub const PROB_TOL: f64 = 1e-8;
pub const PROB_MAX_DEPTH: u32 = 40;
pub const HISTOGRAM_BINS: usize = 256;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    /// One exponent per layer feature.
    pub exponents: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareTerm {
    pub coeff: f64,
    pub feature: f64,
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostPolynomial {
    pub monomials: Vec<Monomial>,
    pub hardware: Vec<HardwareTerm>,
    /// Upper bound on the exponent sum of every monomial.
    pub max_degree: u32,
}

impl CostPolynomial {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        for m in &self.monomials {
            if m.exponents.len() != n_features {
                return Err(Error::Config(format!(
                    "monomial has {} exponents for {n_features} layer features",
                    m.exponents.len()
                )));
            }
            if !(m.coeff >= 0.0) || !m.coeff.is_finite() {
                return Err(Error::Config(format!("monomial coefficient must be >= 0, got {}", m.coeff)));
            }
            let deg: u32 = m.exponents.iter().sum();
            if deg > self.max_degree {
                return Err(Error::Config(format!("monomial degree {deg} exceeds {}", self.max_degree)));
            }
        }
        for h in &self.hardware {
            if !(h.coeff >= 0.0 && h.feature >= 0.0) || !(h.coeff * h.feature).is_finite() {
                return Err(Error::Config(format!(
                    "hardware term must be non-negative, got {} x {}",
                    h.coeff, h.feature
                )));
            }
        }
        Ok(())
    }

    /// Cost of one token with features `a`.
    pub fn per_token(&self, a: &[f64]) -> Result<f64> {
        self.validate(a.len())?;
        let poly: f64 = self
            .monomials
            .iter()
            .map(|m| m.coeff * a.iter().zip(&m.exponents).map(|(x, &q)| x.powi(q as i32)).product::<f64>())
            .sum();
        let hw: f64 = self.hardware.iter().map(|h| h.coeff * h.feature).sum();
        Ok(poly + hw)
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCost {
    pub name: String,
    /// Number of selection stages applied before this layer runs.
    pub exposure: usize,
    pub features: Vec<f64>,
    pub time: CostPolynomial,
    pub energy: CostPolynomial,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerCostModel {
    pub layers: Vec<LayerCost>,
    /// Transmission energy per bit, joules.
    pub e_bit: f64,
}

/// Coefficients of the default matrix-product cost model, as read from the
/// experiment config.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModelConfig {
    /// Seconds per multiply-accumulate.
    pub c1: f64,
    /// Seconds per memory access.
    pub c2: f64,
    /// Joules per multiply-accumulate.
    pub d1: f64,
    /// Joules per memory access.
    pub d2: f64,
    /// Joules per transmitted bit.
    pub e_bit: f64,
    /// Fixed encode time of the DCT baseline, seconds.
    pub baseline_time_s: f64,
    /// Fixed encode energy of the DCT baseline, joules.
    pub baseline_energy_j: f64,
}

impl Default for CostModelConfig {
    fn default() -> Self {
        Self {
            c1: 1.4e-8,
            c2: 1e-9,
            d1: 2e-9,
            d2: 5e-10,
            e_bit: 1e-7,
            baseline_time_s: 5e-5,
            baseline_energy_j: 1e-5,
        }
    }
}

impl CostModelConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c1,
            self.c2,
            self.d1,
            self.d2,
            self.e_bit,
            self.baseline_time_s,
            self.baseline_energy_j,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("cost model coefficients must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn dense_layer(&self, name: String, exposure: usize, d_in: usize, d_out: usize) -> LayerCost {
        let (a, b) = (d_in as f64, d_out as f64);
        let mem = a * b + a + b;
        let poly = |c: f64, h: f64| CostPolynomial {
            monomials: vec![Monomial {
                coeff: c,
                exponents: vec![1, 1],
            }],
            hardware: vec![HardwareTerm { coeff: h, feature: mem }],
            max_degree: 2,
        };
        LayerCost {
            name,
            exposure,
            features: vec![a, b],
            time: poly(self.c1, self.c2),
            energy: poly(self.d1, self.d2),
        }
    }

    /// Encoder cost graph: the patch embedding sees every token, stage `m`
    /// and its predictor see the tokens that survived `m - 1` selections.
    pub fn codec_model(&self, dims: &CodecDims) -> Result<LayerCostModel> {
        self.validate()?;
        let (p, l, h) = (dims.patch_len(), dims.token_len, dims.predictor_hidden);
        let mut layers = vec![self.dense_layer("embed".into(), 0, p, l)];
        for m in 0..dims.stages {
            layers.push(self.dense_layer(format!("enc{m}"), m, l, l));
            layers.push(self.dense_layer(format!("pred{m}"), m, l, h));
        }
        Ok(LayerCostModel {
            layers,
            e_bit: self.e_bit,
        })
    }
}

fn count_kept(keep: &[bool]) -> f64 {
    keep.iter().filter(|&&k| k).count() as f64
}

/// Time of one layer over the tokens flagged in `keep`.
pub fn layer_time(layer: &LayerCost, keep: &[bool]) -> Result<f64> {
    Ok(count_kept(keep) * layer.time.per_token(&layer.features)?)
}

pub fn layer_energy(layer: &LayerCost, keep: &[bool]) -> Result<f64> {
    Ok(count_kept(keep) * layer.energy.per_token(&layer.features)?)
}

/// Same polynomial, per-token features.
pub fn layer_cost_tokens(poly: &CostPolynomial, tokens: &[Vec<f64>], keep: &[bool]) -> Result<f64> {
    if tokens.len() != keep.len() {
        return Err(Error::invalid("token features and keep mask differ in length"));
    }
    let mut total = 0.0;
    for (a, &k) in tokens.iter().zip(keep) {
        if k {
            total += poly.per_token(a)?;
        }
    }
    Ok(total)
}

fn exposure_mask<'a>(layer: &LayerCost, n_tokens: usize, stage_masks: &'a [Vec<bool>], all: &'a [bool]) -> Result<&'a [bool]> {
    let mask = match layer.exposure {
        0 => all,
        s => stage_masks
            .get(s - 1)
            .ok_or_else(|| Error::invalid(format!("layer {} needs stage mask {s}", layer.name)))?,
    };
    if mask.len() != n_tokens {
        return Err(Error::invalid("stage mask length mismatch"));
    }
    Ok(mask)
}

/// Compute time for the masks the codec actually produced.
pub fn compute_time(model: &LayerCostModel, n_tokens: usize, stage_masks: &[Vec<bool>]) -> Result<f64> {
    let all = vec![true; n_tokens];
    model
        .layers
        .iter()
        .map(|l| layer_time(l, exposure_mask(l, n_tokens, stage_masks, &all)?))
        .sum()
}

pub fn compute_energy(model: &LayerCostModel, n_tokens: usize, stage_masks: &[Vec<bool>]) -> Result<f64> {
    let all = vec![true; n_tokens];
    model
        .layers
        .iter()
        .map(|l| layer_energy(l, exposure_mask(l, n_tokens, stage_masks, &all)?))
        .sum()
}

/// Histogram of predictor scores over [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorDistribution {
    /// Normalized bin masses.
    pub mass: Vec<f64>,
}

impl PredictorDistribution {
    pub fn from_scores<I: IntoIterator<Item = f64>>(scores: I) -> Result<Self> {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        let mut n = 0u64;
        for s in scores {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::invalid(format!("score {s} outside [0, 1]")));
            }
            counts[((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
            n += 1;
        }
        if n == 0 {
            return Err(Error::invalid("no scores to calibrate from"));
        }
        Ok(Self {
            mass: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        })
    }

    pub fn uniform() -> Self {
        Self {
            mass: vec![1.0 / HISTOGRAM_BINS as f64; HISTOGRAM_BINS],
        }
    }

    /// `E[f(delta)] = P(score <= delta)`, linear within a bin.
    pub fn expected_keep(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        let pos = delta * HISTOGRAM_BINS as f64;
        let full = (pos.floor() as usize).min(HISTOGRAM_BINS);
        let mut acc: f64 = self.mass[..full].iter().sum();
        if full < HISTOGRAM_BINS {
            acc += self.mass[full] * (pos - full as f64);
        }
        Ok(acc.min(1.0))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::invalid(format!("delta must be in [0, 1], got {delta}")));
    }
    Ok(())
}

fn expected_cost(
    model: &LayerCostModel,
    dist: &PredictorDistribution,
    delta: f64,
    n_tokens: usize,
    pick: impl Fn(&LayerCost) -> &CostPolynomial,
) -> Result<f64> {
    let ef = dist.expected_keep(delta)?;
    let mut total = 0.0;
    for l in &model.layers {
        total += n_tokens as f64 * ef.powi(l.exposure as i32) * pick(l).per_token(&l.features)?;
    }
    Ok(total)
}

/// Expected compute time with the fraction of surviving tokens after each
/// selection taken from the score histogram.
pub fn expected_compute_time(
    model: &LayerCostModel,
    dist: &PredictorDistribution,
    delta: f64,
    n_tokens: usize,
) -> Result<f64> {
    expected_cost(model, dist, delta, n_tokens, |l| &l.time)
}

pub fn expected_compute_energy(
    model: &LayerCostModel,
    dist: &PredictorDistribution,
    delta: f64,
    n_tokens: usize,
) -> Result<f64> {
    expected_cost(model, dist, delta, n_tokens, |l| &l.energy)
}

/// `Z / (B log2(1 + gamma))`.
pub fn transmission_time(bits: usize, cfg: &ChannelConfig, gamma: f64) -> Result<f64> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::invalid(format!("SINR must be >= 0, got {gamma}")));
    }
    if bits == 0 {
        return Ok(0.0);
    }
    if gamma == 0.0 {
        return Err(Error::InfiniteTime);
    }
    Ok(bits as f64 / capacity(cfg, gamma))
}

/// Time saved by sending `z_sem` bits after `tc_expected` of compute
/// instead of `z_raw` raw bits.
pub fn delta_time(z_raw: usize, z_sem: usize, tc_expected: f64, cfg: &ChannelConfig, gamma: f64) -> Result<f64> {
    Ok(transmission_time(z_raw, cfg, gamma)? - (tc_expected + transmission_time(z_sem, cfg, gamma)?))
}

/// `G = ln2 (Z_raw - Z_sem) / (B Tc)`; `+inf` when `Tc = 0` and the
/// payload shrinks.
pub fn threshold_g(z_raw: usize, z_sem: usize, tc_expected: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(tc_expected >= 0.0) || !(bandwidth_hz > 0.0) {
        return Err(Error::invalid(format!(
            "need Tc >= 0 and B > 0, got Tc={tc_expected}, B={bandwidth_hz}"
        )));
    }
    let diff = z_raw as f64 - z_sem as f64;
    if tc_expected == 0.0 {
        return Ok(if diff > 0.0 {
            f64::INFINITY
        } else if diff < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        });
    }
    Ok(std::f64::consts::LN_2 * diff / (bandwidth_hz * tc_expected))
}

/// `gamma < e^G - 1`.
pub fn improves(gamma: f64, g: f64) -> bool {
    gamma < g.exp_m1()
}

/// `P(gamma < e^G - 1)` under the channel's SINR distribution.
pub fn prob_time_reduction(g: f64, cfg: &ChannelConfig) -> Result<f64> {
    if g.is_nan() {
        return Err(Error::invalid("G is NaN"));
    }
    if g <= 0.0 {
        return Ok(0.0);
    }
    if cfg.mode == crate::channel::ChannelMode::Awgn {
        return Ok(if improves(cfg.ebn0, g) { 1.0 } else { 0.0 });
    }
    let p = sinr_cdf(g.exp_m1(), cfg, PROB_TOL, PROB_MAX_DEPTH)?;
    Ok(p.clamp(0.0, 1.0))
}

/// Monte Carlo estimate of `P(gamma < e^G - 1)` and its standard error.
pub fn prob_time_reduction_mc<R: Rng + ?Sized>(g: f64, cfg: &ChannelConfig, samples: usize, rng: &mut R) -> (f64, f64) {
    let bound = g.exp_m1();
    let hits = (0..samples).filter(|_| draw_fading(cfg, rng).gamma < bound).count();
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct TimingReport {
    pub t_c: f64,
    pub t_d: f64,
    pub total: f64,
    pub delta_t: f64,
    pub g_t: f64,
    pub p_improve: f64,
}

/// Timing of a sparsified transmission against the raw one at SINR `gamma`.
pub fn timing_report(z_raw: usize, z_sem: usize, t_c: f64, cfg: &ChannelConfig, gamma: f64) -> Result<TimingReport> {
    let t_d = transmission_time(z_sem, cfg, gamma)?;
    let g_t = threshold_g(z_raw, z_sem, t_c, cfg.bandwidth_hz)?;
    Ok(TimingReport {
        t_c,
        t_d,
        total: t_c + t_d,
        delta_t: delta_time(z_raw, z_sem, t_c, cfg, gamma)?,
        g_t,
        p_improve: prob_time_reduction(g_t, cfg)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EnergyReport {
    pub e_c: f64,
    pub e_d: f64,
    pub total: f64,
}

impl EnergyReport {
    pub fn new(e_c: f64, e_d: f64) -> Self {
        Self {
            e_c,
            e_d,
            total: e_c + e_d,
        }
    }
}

/// Compute energy for the produced masks plus `e_bit * Z_sem`.
pub fn total_energy(model: &LayerCostModel, n_tokens: usize, stage_masks: &[Vec<bool>], z_sem: usize) -> Result<EnergyReport> {
    Ok(EnergyReport::new(
        compute_energy(model, n_tokens, stage_masks)?,
        model.e_bit * z_sem as f64,
    ))
}
