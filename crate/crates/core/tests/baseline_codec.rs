mod common;

use common::oracles;
use dynasc::baseline::{dct2, dct_decode, dct_encode, DctBlockStream};
use dynasc::codec::corpus::render_corpus;
use dynasc::codec::CorpusSpec;
use dynasc::metrics::psnr;
use dynasc::rng::seeded;
use dynasc::surface::CameraImage;
use proptest::prelude::*;
use rand::Rng;

fn random_image(seed: u64) -> CameraImage {
    let mut r = seeded(seed);
    CameraImage::new(64, 64, (0..64 * 64).map(|_| r.random::<f64>()).collect()).unwrap()
}

fn small_corpus() -> Vec<CameraImage> {
    let spec = CorpusSpec {
        seed: 5,
        surfaces: 2,
        images_per_surface: 16,
        ..CorpusSpec::default()
    };
    render_corpus(&spec, 64).unwrap()
}

#[test]
fn transform_matches_defining_sum() {
    let mut r = seeded(2);
    let block: Vec<f64> = (0..64).map(|_| r.random::<f64>()).collect();
    let got = dct2(&block);
    for (a, b) in got.iter().zip(oracles::dct8(&block)) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn noiseless_corpus_psnr_at_eight_bits() {
    let images = small_corpus();
    let mut worst = f64::INFINITY;
    for img in &images {
        let out = dct_decode(&dct_encode(img, 8).unwrap()).unwrap();
        worst = worst.min(psnr(&img.pixels, &out.pixels));
    }
    assert!(worst >= 30.0, "worst PSNR {worst}");
}

#[test]
fn rate_is_fixed() {
    let s = dct_encode(&random_image(1), 4).unwrap();
    assert_eq!(s.bit_size(), 16384);
    assert_eq!(s.to_bits().len(), 16384);
    assert_eq!(s.to_bytes().len(), 3 + 16384 / 8);
    assert_eq!(dct_encode(&random_image(1), 8).unwrap().bit_size(), 32768);
}

#[test]
fn every_bit_flipped_stays_in_range() {
    let img = random_image(4);
    let s = dct_encode(&img, 8).unwrap();
    let mut bits = s.to_bits();
    for i in 0..bits.len() {
        bits.flip(i);
    }
    let out = dct_decode(&DctBlockStream::from_bits(8, 64, 64, &bits).unwrap()).unwrap();
    assert!(out.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn truncated_stream_is_corrupt() {
    let s = dct_encode(&random_image(4), 8).unwrap();
    let mut bits = s.to_bits();
    bits.truncate(bits.len() - 8);
    assert!(matches!(
        DctBlockStream::from_bits(8, 64, 64, &bits),
        Err(dynasc::Error::CorruptPayload(_))
    ));
}

#[test]
fn rejects_unaligned_images_and_bad_widths() {
    let img = CameraImage::filled(60, 64, 0.5);
    assert!(dct_encode(&img, 8).is_err());
    assert!(dct_encode(&random_image(0), 1).is_err());
    assert!(dct_encode(&random_image(0), 9).is_err());
}

proptest! {
    #[test]
    fn bit_errors_stay_in_their_block(seed in 0u64..1000, q in 2u8..=8, which in 0usize..64, pos in 0usize..512) {
        let img = random_image(seed);
        let s = dct_encode(&img, q).unwrap();
        let clean = dct_decode(&s).unwrap();
        let mut bits = s.to_bits();
        let per_block = 64 * q as usize;
        bits.flip(which * per_block + pos % per_block);
        let hit = dct_decode(&DctBlockStream::from_bits(q, 64, 64, &bits).unwrap()).unwrap();
        let (br, bc) = (which / 8, which % 8);
        for r in 0..64 {
            for c in 0..64 {
                if r / 8 != br || c / 8 != bc {
                    prop_assert_eq!(clean.get(r, c), hit.get(r, c));
                }
            }
        }
    }

    #[test]
    fn serialization_round_trips(seed in 0u64..1000, q in 2u8..=8) {
        let s = dct_encode(&random_image(seed), q).unwrap();
        let back = DctBlockStream::from_bits(q, 64, 64, &s.to_bits()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn constant_images_decode_close(c in 0.0f64..1.0) {
        let img = CameraImage::filled(64, 64, c);
        let out = dct_decode(&dct_encode(&img, 8).unwrap()).unwrap();
        let worst = out.pixels.iter().map(|p| (p - c).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 1.0 / 255.0 + 1e-12, "{}", worst);
    }
}
