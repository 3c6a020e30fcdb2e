//! Token quantization and the bit-level semantic payload.

use crate::bits::Bits;
use crate::error::{Error, Result};

/// Bits per transmitted token dimension.
pub const CODE_BITS: usize = 8;

/// Maps `v` (clamped to [-1, 1]) to an 8-bit code.
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
    ((v + 1.0) / 2.0 * 255.0).round() as u8
}

pub fn dequantize(code: u8) -> f64 {
    2.0 * code as f64 / 255.0 - 1.0
}

/// Nearest representable value after a quantize/dequantize round trip.
pub fn snap(v: f64) -> f64 {
    dequantize(quantize(v))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// 8-bit codes, the transmitted format.
    Int8,
    /// Raw f64 values; used to check the unquantized path.
    Float64,
}

impl Precision {
    pub fn bits_per_value(self) -> usize {
        match self {
            Precision::Int8 => CODE_BITS,
            Precision::Float64 => 64,
        }
    }
}

/// Keep mask plus the retained token values, in token order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedPayload {
    pub token_len: usize,
    pub keep_mask: Vec<bool>,
    /// `kept() * token_len` values; already snapped to the code grid for `Int8`.
    pub values: Vec<f64>,
    pub precision: Precision,
}

impl QuantizedPayload {
    pub fn n_tokens(&self) -> usize {
        self.keep_mask.len()
    }

    pub fn kept(&self) -> usize {
        self.keep_mask.iter().filter(|&&k| k).count()
    }

    /// `N + bits_per_value * L_s * kept`.
    pub fn bit_size(&self) -> usize {
        self.n_tokens() + self.precision.bits_per_value() * self.token_len * self.kept()
    }

    pub fn codes(&self) -> Vec<u8> {
        self.values.iter().map(|&v| quantize(v)).collect()
    }

    /// Retained token `i` in kept order.
    pub fn token(&self, i: usize) -> &[f64] {
        &self.values[i * self.token_len..(i + 1) * self.token_len]
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.kept() * self.token_len {
            return Err(Error::CorruptPayload(format!(
                "{} values for {} kept tokens of length {}",
                self.values.len(),
                self.kept(),
                self.token_len
            )));
        }
        Ok(())
    }

    /// Mask bits first, then each retained value.
    pub fn to_bits(&self) -> Bits {
        let mut out = Bits::with_capacity(self.bit_size());
        for &k in &self.keep_mask {
            out.push(k);
        }
        match self.precision {
            Precision::Int8 => {
                for &v in &self.values {
                    out.push_bits(quantize(v) as u64, CODE_BITS);
                }
            }
            Precision::Float64 => {
                for &v in &self.values {
                    out.push_bits(v.to_bits(), 64);
                }
            }
        }
        out
    }

    pub fn from_bits(bits: &Bits, n_tokens: usize, token_len: usize, precision: Precision) -> Result<Self> {
        if bits.len() < n_tokens {
            return Err(Error::CorruptPayload(format!(
                "{} bits cannot hold a {n_tokens}-token keep mask",
                bits.len()
            )));
        }
        let keep_mask: Vec<bool> = (0..n_tokens).map(|i| bits.get(i)).collect();
        let kept = keep_mask.iter().filter(|&&k| k).count();
        let width = precision.bits_per_value();
        let expected = n_tokens + width * token_len * kept;
        if bits.len() != expected {
            return Err(Error::CorruptPayload(format!(
                "payload has {} bits, mask implies {expected}",
                bits.len()
            )));
        }
        let values = (0..kept * token_len)
            .map(|i| {
                let raw = bits.read_bits(n_tokens + i * width, width);
                match precision {
                    Precision::Int8 => dequantize(raw as u8),
                    Precision::Float64 => f64::from_bits(raw),
                }
            })
            .collect();
        Ok(Self {
            token_len,
            keep_mask,
            values,
            precision,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantizer_endpoints_and_midpoints() {
        assert_eq!(quantize(-1.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5), 191);
        assert_eq!(quantize(7.0), 255);
        assert_eq!(quantize(-7.0), 0);
        assert_eq!(dequantize(0), -1.0);
        assert_eq!(dequantize(255), 1.0);
    }

    #[test]
    fn bit_size_formula() {
        let mut mask = vec![false; 64];
        for m in mask.iter_mut().take(32) {
            *m = true;
        }
        let p = QuantizedPayload {
            token_len: 16,
            keep_mask: mask,
            values: vec![0.0; 32 * 16],
            precision: Precision::Int8,
        };
        assert_eq!(p.bit_size(), 4160);
        assert_eq!(p.to_bits().len(), 4160);
    }

    #[test]
    fn length_mismatch_is_corrupt() {
        let mut bits = Bits::new();
        bits.push_bits(0b1100, 4);
        bits.push_bits(7, 8);
        let err = QuantizedPayload::from_bits(&bits, 4, 1, Precision::Int8).unwrap_err();
        assert!(matches!(err, Error::CorruptPayload(_)));
    }

    proptest! {
        #[test]
        fn quantization_error_bound(v in -1.0f64..=1.0) {
            prop_assert!((dequantize(quantize(v)) - v).abs() <= 1.0 / 255.0);
        }

        #[test]
        fn serialized_length_matches_formula(mask in proptest::collection::vec(any::<bool>(), 1..80), len in 1usize..20) {
            let kept = mask.iter().filter(|&&k| k).count();
            let values: Vec<f64> = (0..kept * len).map(|i| snap((i as f64 * 0.37).sin())).collect();
            let p = QuantizedPayload { token_len: len, keep_mask: mask.clone(), values, precision: Precision::Int8 };
            let bits = p.to_bits();
            prop_assert_eq!(bits.len(), p.bit_size());
            let back = QuantizedPayload::from_bits(&bits, mask.len(), len, Precision::Int8).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
