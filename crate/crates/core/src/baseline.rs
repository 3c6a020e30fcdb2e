//! Fixed-rate DCT baseline: 8x8 orthonormal DCT-II, per-position bounds,
//! uniform quantization, no entropy coding.
//!
//! Stream layout: a protected header `{q_bits: u8, n_blocks: u16 (BE)}`
//! followed by `n_blocks * 64` codes of `q_bits` each, MSB first, blocks in
//! row-major order and coefficients in row-major `(u, v)` order. Only the
//! code section travels over the noisy link, so `bit_size()` excludes the
//! header.

use std::sync::OnceLock;

use crate::bits::Bits;
use crate::error::{Error, Result};
use crate::surface::CameraImage;

pub const BLOCK: usize = 8;
const COEFFS: usize = BLOCK * BLOCK;

struct Tables {
    /// `basis[u][x]` of the 1-D orthonormal DCT-II.
    basis: [[f64; BLOCK]; BLOCK],
    /// Half-range of every 2-D coefficient for inputs in [0, 1].
    bound: [f64; COEFFS],
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut basis = [[0.0; BLOCK]; BLOCK];
        for (u, row) in basis.iter_mut().enumerate() {
            let a = if u == 0 { (1.0 / BLOCK as f64).sqrt() } else { (2.0 / BLOCK as f64).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = a * (std::f64::consts::PI * (2 * x + 1) as f64 * u as f64 / (2 * BLOCK) as f64).cos();
            }
        }
        let mut bound = [0.0; COEFFS];
        for u in 0..BLOCK {
            for v in 0..BLOCK {
                let s: f64 = basis[u].iter().map(|a| a.abs()).sum::<f64>() * basis[v].iter().map(|b| b.abs()).sum::<f64>();
                bound[u * BLOCK + v] = 0.5 * s;
            }
        }
        Tables { basis, bound }
    })
}

/// 2-D DCT-II of one block (row-major pixels).
pub fn dct2(block: &[f64]) -> [f64; COEFFS] {
    let b = &tables().basis;
    let mut tmp = [0.0; COEFFS];
    for x in 0..BLOCK {
        for v in 0..BLOCK {
            tmp[x * BLOCK + v] = (0..BLOCK).map(|y| b[v][y] * block[x * BLOCK + y]).sum();
        }
    }
    let mut out = [0.0; COEFFS];
    for u in 0..BLOCK {
        for v in 0..BLOCK {
            out[u * BLOCK + v] = (0..BLOCK).map(|x| b[u][x] * tmp[x * BLOCK + v]).sum();
        }
    }
    out
}

/// Inverse of [`dct2`].
pub fn idct2(coeffs: &[f64]) -> [f64; COEFFS] {
    let b = &tables().basis;
    let mut tmp = [0.0; COEFFS];
    for x in 0..BLOCK {
        for v in 0..BLOCK {
            tmp[x * BLOCK + v] = (0..BLOCK).map(|u| b[u][x] * coeffs[u * BLOCK + v]).sum();
        }
    }
    let mut out = [0.0; COEFFS];
    for x in 0..BLOCK {
        for y in 0..BLOCK {
            out[x * BLOCK + y] = (0..BLOCK).map(|v| b[v][y] * tmp[x * BLOCK + v]).sum();
        }
    }
    out
}

/// Coefficient normalized to [-1, 1]: DC is `8 * mean`, centred on 4; AC
/// terms are divided by their worst-case magnitude.
fn normalize(idx: usize, c: f64) -> f64 {
    if idx == 0 {
        (c - 4.0) / 4.0
    } else {
        c / tables().bound[idx]
    }
}

fn denormalize(idx: usize, v: f64) -> f64 {
    if idx == 0 {
        4.0 * v + 4.0
    } else {
        v * tables().bound[idx]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DctBlockStream {
    pub q_bits: u8,
    pub width: usize,
    pub height: usize,
    /// `n_blocks * 64` codes, block-major.
    pub codes: Vec<u16>,
}

impl DctBlockStream {
    pub fn n_blocks(&self) -> usize {
        self.codes.len() / COEFFS
    }

    /// `n_blocks * 64 * q_bits`.
    pub fn bit_size(&self) -> usize {
        self.n_blocks() * COEFFS * self.q_bits as usize
    }

    pub fn header(&self) -> [u8; 3] {
        let n = self.n_blocks() as u16;
        [self.q_bits, (n >> 8) as u8, n as u8]
    }

    /// Code section only.
    pub fn to_bits(&self) -> Bits {
        let mut bits = Bits::with_capacity(self.bit_size());
        for &c in &self.codes {
            bits.push_bits(c as u64, self.q_bits as usize);
        }
        bits
    }

    /// Rebuilds a stream from the protected header fields and received bits.
    pub fn from_bits(q_bits: u8, width: usize, height: usize, bits: &Bits) -> Result<Self> {
        check_q(q_bits)?;
        let n_blocks = (width / BLOCK) * (height / BLOCK);
        let want = n_blocks * COEFFS * q_bits as usize;
        if bits.len() != want {
            return Err(Error::CorruptPayload(format!(
                "DCT stream has {} bits, header implies {want}",
                bits.len()
            )));
        }
        let q = q_bits as usize;
        let codes = (0..n_blocks * COEFFS).map(|i| bits.read_bits(i * q, q) as u16).collect();
        Ok(Self {
            q_bits,
            width,
            height,
            codes,
        })
    }

    /// Header then codes, padded to a whole byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header().to_vec();
        out.extend_from_slice(self.to_bits().as_bytes());
        out
    }
}

fn check_q(q_bits: u8) -> Result<()> {
    if !(2..=8).contains(&q_bits) {
        return Err(Error::invalid(format!("q_bits must be in [2, 8], got {q_bits}")));
    }
    Ok(())
}

/// Half-range of the midtread quantizer: codes `0..=2h` with zero at `h`.
/// The all-ones code is never produced and decodes as `2h`.
fn half_levels(q_bits: u8) -> f64 {
    ((1u32 << (q_bits - 1)) - 1) as f64
}

pub fn dct_encode(image: &CameraImage, q_bits: u8) -> Result<DctBlockStream> {
    check_q(q_bits)?;
    if image.width % BLOCK != 0 || image.height % BLOCK != 0 || image.width == 0 || image.height == 0 {
        return Err(Error::invalid(format!(
            "image {}x{} is not a multiple of {BLOCK}",
            image.width, image.height
        )));
    }
    let half = half_levels(q_bits);
    let mut codes = Vec::with_capacity(image.width * image.height);
    for br in 0..image.height / BLOCK {
        for bc in 0..image.width / BLOCK {
            let mut block = [0.0; COEFFS];
            for x in 0..BLOCK {
                for y in 0..BLOCK {
                    block[x * BLOCK + y] = image.get(br * BLOCK + x, bc * BLOCK + y);
                }
            }
            for (i, c) in dct2(&block).iter().enumerate() {
                let v = normalize(i, *c).clamp(-1.0, 1.0);
                codes.push((v * half + half).round() as u16);
            }
        }
    }
    Ok(DctBlockStream {
        q_bits,
        width: image.width,
        height: image.height,
        codes,
    })
}

/// Dequantizes and inverts every block; corrupted codes are used as received.
pub fn dct_decode(stream: &DctBlockStream) -> Result<CameraImage> {
    check_q(stream.q_bits)?;
    let (w, h) = (stream.width, stream.height);
    let n_blocks = (w / BLOCK) * (h / BLOCK);
    if stream.codes.len() != n_blocks * COEFFS {
        return Err(Error::CorruptPayload(format!(
            "{} codes for {n_blocks} blocks",
            stream.codes.len()
        )));
    }
    let half = half_levels(stream.q_bits);
    let mut pixels = vec![0.0; w * h];
    for (bi, codes) in stream.codes.chunks_exact(COEFFS).enumerate() {
        let (br, bc) = (bi / (w / BLOCK), bi % (w / BLOCK));
        let mut coeffs = [0.0; COEFFS];
        for (i, &c) in codes.iter().enumerate() {
            let v = ((c as f64).min(2.0 * half) - half) / half;
            coeffs[i] = denormalize(i, v);
        }
        let block = idct2(&coeffs);
        for x in 0..BLOCK {
            for y in 0..BLOCK {
                pixels[(br * BLOCK + x) * w + bc * BLOCK + y] = block[x * BLOCK + y].clamp(0.0, 1.0);
            }
        }
    }
    CameraImage::new(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_image(seed: u64) -> CameraImage {
        let mut r = rng::seeded(seed);
        CameraImage::new(64, 64, (0..4096).map(|_| r.random::<f64>()).collect()).unwrap()
    }

    #[test]
    fn constant_block_has_only_dc() {
        let c = dct2(&[0.3; 64]);
        assert!((c[0] - 0.3 * 8.0).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn transform_round_trip() {
        let img = random_image(1);
        let block: Vec<f64> = img.pixels[..64].to_vec();
        let back = idct2(&dct2(&block));
        for (a, b) in block.iter().zip(back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rate_formula() {
        let s = dct_encode(&random_image(2), 4).unwrap();
        assert_eq!(s.bit_size(), 16384);
        assert_eq!(s.to_bits().len(), 16384);
        assert_eq!(dct_encode(&random_image(2), 8).unwrap().bit_size(), 32768);
        assert_eq!(s.header(), [4, 0, 64]);
    }

    #[test]
    fn bounds_contain_every_coefficient() {
        for seed in 0..20 {
            let img = random_image(seed);
            for c in dct2(&img.pixels[..64]).iter().enumerate().map(|(i, c)| normalize(i, *c)) {
                assert!(c.abs() <= 1.0 + 1e-12);
            }
        }
        let mut checker = [0.0; 64];
        for x in 0..8 {
            for y in 0..8 {
                checker[x * 8 + y] = ((x + y) % 2) as f64;
            }
        }
        assert!(dct2(&checker).iter().enumerate().all(|(i, c)| normalize(i, *c).abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        let img = CameraImage::filled(60, 64, 0.5);
        assert!(dct_encode(&img, 8).is_err());
        assert!(dct_encode(&random_image(3), 1).is_err());
        assert!(dct_encode(&random_image(3), 9).is_err());
    }

    #[test]
    fn stream_bits_round_trip() {
        let s = dct_encode(&random_image(4), 5).unwrap();
        let back = DctBlockStream::from_bits(5, 64, 64, &s.to_bits()).unwrap();
        assert_eq!(back, s);
        let mut short = s.to_bits();
        short.truncate(100);
        assert!(matches!(DctBlockStream::from_bits(5, 64, 64, &short), Err(Error::CorruptPayload(_))));
    }
}
