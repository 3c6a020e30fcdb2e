//! Lunar link model: Rician block fading over an AWGN channel, the SINR
//! density and the capacity used by the timing analysis.

pub mod bessel;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bits::Bits;
use crate::codec::payload::{snap, Precision, QuantizedPayload, CODE_BITS};
use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

pub use bessel::{bessel_i0, bessel_i0e};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    Awgn,
    Rician,
}

impl ChannelMode {
    pub fn name(self) -> &'static str {
        match self {
            ChannelMode::Awgn => "awgn",
            ChannelMode::Rician => "rician",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    /// LOS to diffuse power ratio.
    pub k_factor: f64,
    /// Mean Eb/N0, linear.
    pub ebn0: f64,
    pub bandwidth_hz: f64,
    pub mode: ChannelMode,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(mode: ChannelMode, k_factor: f64, ebn0: f64, bandwidth_hz: f64) -> Result<Self> {
        let cfg = Self {
            k_factor,
            ebn0,
            bandwidth_hz,
            mode,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_factor >= 0.0) {
            return Err(Error::invalid(format!("K-factor must be >= 0, got {}", self.k_factor)));
        }
        if !(self.ebn0 > 0.0) {
            return Err(Error::invalid(format!("Eb/N0 must be > 0, got {}", self.ebn0)));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::invalid(format!("bandwidth must be > 0, got {}", self.bandwidth_hz)));
        }
        Ok(())
    }

    pub fn with_ebn0(mut self, ebn0: f64) -> Self {
        self.ebn0 = ebn0;
        self
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Complex channel gain `(A + n_I) + j n_Q`. The Doppler term is carried
/// but frozen for the duration of a block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexGain {
    pub los_amplitude: f64,
    pub n_i: f64,
    pub n_q: f64,
    pub doppler_hz: f64,
}

impl ComplexGain {
    pub fn envelope(&self) -> f64 {
        (self.los_amplitude + self.n_i).hypot(self.n_q)
    }
}

/// One block-fading realization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FadingDraw {
    pub rho: f64,
    /// Instantaneous SINR `rho^2 * Eb/N0`.
    pub gamma: f64,
    pub gain: ComplexGain,
}

impl FadingDraw {
    /// Unit envelope: the AWGN case.
    pub fn unit(ebn0: f64) -> Self {
        Self {
            rho: 1.0,
            gamma: ebn0,
            gain: ComplexGain {
                los_amplitude: 1.0,
                n_i: 0.0,
                n_q: 0.0,
                doppler_hz: 0.0,
            },
        }
    }
}

/// Draws one envelope with `E[rho^2] = 1`. AWGN mode always returns `rho = 1`.
pub fn draw_fading<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> FadingDraw {
    match cfg.mode {
        ChannelMode::Awgn => FadingDraw::unit(cfg.ebn0),
        ChannelMode::Rician => {
            let k = cfg.k_factor;
            let los = (k / (k + 1.0)).sqrt();
            let sigma = (0.5 / (k + 1.0)).sqrt();
            let n_i: f64 = StandardNormal.sample(rng);
            let n_q: f64 = StandardNormal.sample(rng);
            let gain = ComplexGain {
                los_amplitude: los,
                n_i: sigma * n_i,
                n_q: sigma * n_q,
                doppler_hz: 0.0,
            };
            let rho = gain.envelope();
            FadingDraw {
                rho,
                gamma: rho * rho * cfg.ebn0,
                gain,
            }
        }
    }
}

/// Per-dimension noise variance seen by an equalized token value:
/// `1 / (2 gamma_sym)` with `gamma_sym = 8 gamma`.
pub fn symbol_noise_variance(draw: &FadingDraw) -> f64 {
    0.5 / (CODE_BITS as f64 * draw.gamma)
}

/// Adds equalized channel noise to each value: `v + n / rho` with
/// `n ~ N(0, 1 / (2 * 8 * Eb/N0))`.
pub fn corrupt_values<R: Rng + ?Sized>(values: &mut [f64], ebn0: f64, rho: f64, rng: &mut R) {
    let sigma = (0.5 / (CODE_BITS as f64 * ebn0)).sqrt() / rho;
    for v in values {
        let n: f64 = StandardNormal.sample(rng);
        *v += sigma * n;
    }
}

/// Sends the retained token values through the fading channel. The keep
/// mask travels on a protected side channel and arrives intact; 8-bit
/// payloads are re-quantized at the receiver.
pub fn transmit_symbols<R: Rng + ?Sized>(
    payload: &QuantizedPayload,
    cfg: &ChannelConfig,
    draw: &FadingDraw,
    rng: &mut R,
) -> QuantizedPayload {
    let mut out = payload.clone();
    let rho = if cfg.mode == ChannelMode::Awgn { 1.0 } else { draw.rho };
    if rho <= 0.0 {
        // Total fade: nothing decodable arrives, the receiver sees mid-scale.
        out.values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        corrupt_values(&mut out.values, cfg.ebn0, rho, rng);
    }
    if out.precision == Precision::Int8 {
        out.values.iter_mut().for_each(|v| *v = snap(*v));
    }
    out
}

/// Gaussian tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// BPSK bit error probability at SINR `gamma`.
pub fn bit_error_probability(gamma: f64) -> f64 {
    q_function((2.0 * gamma.max(0.0)).sqrt())
}

/// Flips each bit independently with probability `Q(sqrt(2 gamma))`.
pub fn transmit_bits<R: Rng + ?Sized>(bits: &Bits, draw: &FadingDraw, rng: &mut R) -> Bits {
    let p = bit_error_probability(draw.gamma);
    let mut out = bits.clone();
    for i in 0..out.len() {
        if rng.random::<f64>() < p {
            out.flip(i);
        }
    }
    out
}

/// Density of the instantaneous SINR under Rician fading:
/// `(K+1)/Eb_N0 * exp(-(K+1) gamma/Eb_N0 - K) * I0(2 sqrt(K (K+1) gamma/Eb_N0))`.
///
/// Evaluated with the exponentially scaled Bessel function so large
/// arguments do not overflow.
pub fn sinr_pdf(gamma: f64, cfg: &ChannelConfig) -> Result<f64> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::invalid(format!("SINR must be >= 0, got {gamma}")));
    }
    let k = cfg.k_factor;
    let u = gamma / cfg.ebn0;
    let arg = 2.0 * (k * (k + 1.0) * u).sqrt();
    let scaled = bessel_i0e(arg)?;
    Ok((k + 1.0) / cfg.ebn0 * (-(k + 1.0) * u - k + arg).exp() * scaled)
}

/// SINR above which the Rician density carries no measurable mass.
pub fn sinr_support_limit(cfg: &ChannelConfig) -> f64 {
    let k = cfg.k_factor;
    let sd = (2.0 * k + 1.0).sqrt() / (k + 1.0);
    cfg.ebn0 * (1.0 + 40.0 * sd + 40.0)
}

/// `P(gamma < upper)` by adaptive Simpson integration of the density.
pub fn sinr_cdf(upper: f64, cfg: &ChannelConfig, tol: f64, max_depth: u32) -> Result<f64> {
    if upper.is_nan() {
        return Err(Error::invalid("SINR bound is NaN"));
    }
    let hi = upper.min(sinr_support_limit(cfg));
    if hi <= 0.0 {
        return Ok(0.0);
    }
    let pdf = |g: f64| sinr_pdf(g, cfg).unwrap_or(f64::NAN);
    adaptive_simpson(pdf, 0.0, hi, tol, max_depth)
}

/// Shannon capacity `B log2(1 + gamma)` in bit/s.
pub fn capacity(cfg: &ChannelConfig, gamma: f64) -> f64 {
    cfg.bandwidth_hz * (1.0 + gamma).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn rician(k: f64, ebn0: f64) -> ChannelConfig {
        ChannelConfig::new(ChannelMode::Rician, k, ebn0, 3e6).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ChannelConfig::new(ChannelMode::Rician, -1.0, 1.0, 1.0).is_err());
        assert!(ChannelConfig::new(ChannelMode::Rician, 1.0, 0.0, 1.0).is_err());
        assert!(ChannelConfig::new(ChannelMode::Rician, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn capacity_values() {
        let cfg = rician(5.0, 1.0);
        assert_eq!(capacity(&cfg, 1.0), 3e6);
        assert_eq!(capacity(&cfg, 0.0), 0.0);
        assert_eq!(capacity(&cfg, 3.0), 6e6);
    }

    #[test]
    fn pdf_k0_is_exponential() {
        let cfg = rician(0.0, 1.0);
        assert_eq!(sinr_pdf(0.0, &cfg).unwrap(), 1.0);
        let cfg = rician(0.0, 2.5);
        for i in 0..50 {
            let g = i as f64 * 0.3;
            let want = (1.0 / 2.5) * (-g / 2.5).exp();
            assert!((sinr_pdf(g, &cfg).unwrap() - want).abs() < 1e-12);
        }
        assert!(sinr_pdf(-0.1, &cfg).is_err());
    }

    #[test]
    fn pure_los_envelope_is_one() {
        let cfg = rician(1e9, 1.0);
        let mut r = rng::seeded(3);
        for _ in 0..1000 {
            let d = draw_fading(&cfg, &mut r);
            assert!((d.rho - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn awgn_mode_is_unit_envelope() {
        let cfg = ChannelConfig::new(ChannelMode::Awgn, 5.0, 4.0, 3e6).unwrap();
        let d = draw_fading(&cfg, &mut rng::seeded(1));
        assert_eq!((d.rho, d.gamma), (1.0, 4.0));
    }

    #[test]
    fn bit_error_probability_limits() {
        assert_eq!(bit_error_probability(0.0), 0.5);
        assert!(bit_error_probability(1e4) < 1e-300);
        assert!((bit_error_probability(4.0) - 0.002_338_867_490_523_632_6).abs() < 1e-15);
    }

    #[test]
    fn noiseless_symbols_survive_requantization() {
        let payload = QuantizedPayload {
            token_len: 2,
            keep_mask: vec![true, false, true],
            values: vec![snap(0.3), snap(-0.9), snap(1.0), snap(-1.0)],
            precision: Precision::Int8,
        };
        let cfg = ChannelConfig::new(ChannelMode::Awgn, 5.0, 1e12, 3e6).unwrap();
        let draw = draw_fading(&cfg, &mut rng::seeded(0));
        let out = transmit_symbols(&payload, &cfg, &draw, &mut rng::seeded(1));
        assert_eq!(out, payload);
    }

    #[test]
    fn awgn_mode_matches_plain_corruption() {
        let payload = QuantizedPayload {
            token_len: 4,
            keep_mask: vec![true, true],
            values: vec![0.1, -0.2, 0.3, 0.0, 0.5, 0.6, -0.7, 0.8],
            precision: Precision::Float64,
        };
        let cfg = ChannelConfig::new(ChannelMode::Awgn, 5.0, 2.0, 3e6).unwrap();
        let draw = draw_fading(&cfg, &mut rng::seeded(0));
        let out = transmit_symbols(&payload, &cfg, &draw, &mut rng::seeded(11));
        let mut expect = payload.values.clone();
        corrupt_values(&mut expect, 2.0, 1.0, &mut rng::seeded(11));
        assert_eq!(out.values, expect);
        assert_eq!(out.keep_mask, payload.keep_mask);
    }
}
