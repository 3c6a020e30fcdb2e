mod common;

use dynasc::codec::{
    decode, dequantize, encode, loss_mse, patch_embed, predict_importance, quantize, select_tokens, train_teacher,
    CodecDims, CodecParams, Precision, QuantizedPayload, SelectionMode, TrainConfig,
};
use dynasc::rng::seeded;
use dynasc::surface::{split_patches, CameraImage};
use proptest::prelude::*;
use rand::Rng;

fn image(seed: u64) -> CameraImage {
    let mut r = seeded(seed);
    CameraImage::new(64, 64, (0..64 * 64).map(|_| r.random::<f64>()).collect()).unwrap()
}

fn random_params(seed: u64) -> CodecParams {
    CodecParams::init(CodecDims::default(), &mut seeded(seed)).unwrap()
}

#[test]
fn embedding_matches_naive_product() {
    let params = random_params(1);
    let grid = split_patches(&image(2), 8).unwrap();
    let seq = patch_embed(&grid, &params).unwrap();
    let w = params.tensor("embed.w").unwrap();
    let b = params.tensor("embed.b").unwrap();
    for (k, patch) in grid.patches.iter().enumerate() {
        for i in 0..16 {
            let mut s = b[i];
            for j in 0..64 {
                s += w[i * 64 + j] * patch[j];
            }
            assert!((seq.tokens[k][i] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn embedding_is_linear_without_bias() {
    let mut params = random_params(3);
    params.tensor_mut("embed.b").unwrap().fill(0.0);
    let grid = split_patches(&image(4), 8).unwrap();
    let mut doubled = grid.clone();
    doubled.patches.iter_mut().flatten().for_each(|v| *v *= 2.0);
    let a = patch_embed(&grid, &params).unwrap();
    let b = patch_embed(&doubled, &params).unwrap();
    for (x, y) in a.tokens.iter().flatten().zip(b.tokens.iter().flatten()) {
        assert!((2.0 * x - y).abs() < 1e-12);
    }
    let zeros = split_patches(&CameraImage::filled(64, 64, 0.0), 8).unwrap();
    assert!(patch_embed(&zeros, &params).unwrap().tokens.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn zero_predictor_scores_half() {
    let params = CodecParams::zeros(CodecDims::default()).unwrap();
    let tokens = vec![vec![0.3; 16]; 5];
    for stage in 1..=2 {
        assert!(predict_importance(&tokens, &params, stage).unwrap().iter().all(|&s| s == 0.5));
    }
    assert!(predict_importance(&tokens, &params, 0).is_err());
    assert!(predict_importance(&tokens, &params, 3).is_err());
}

#[test]
fn retention_example() {
    let params = random_params(5);
    let (seq, payload) = encode(&image(6), 0.7, &params, Precision::Int8).unwrap();
    let counts: Vec<usize> = seq.stage_masks.iter().map(|m| m.iter().filter(|&&k| k).count()).collect();
    assert_eq!(counts, vec![45, 32]);
    assert_eq!(payload.bit_size(), 4160);
    assert_eq!(payload.to_bits().len(), 4160);
}

#[test]
fn noiseless_round_trip_is_deterministic() {
    let params = random_params(7);
    let img = image(8);
    let a = decode(&encode(&img, 0.5, &params, Precision::Int8).unwrap().1, &params).unwrap();
    let b = decode(&encode(&img, 0.5, &params, Precision::Int8).unwrap().1, &params).unwrap();
    assert_eq!(a, b);
    assert!(a.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn mse_matches_summation() {
    let mut r = seeded(9);
    let a: Vec<Vec<f64>> = (0..10).map(|_| (0..64).map(|_| r.random()).collect()).collect();
    let b: Vec<Vec<f64>> = (0..10).map(|_| (0..64).map(|_| r.random()).collect()).collect();
    let mut total = 0.0;
    for i in 0..10 {
        for j in 0..64 {
            total += (a[i][j] - b[i][j]).powi(2);
        }
    }
    assert!((loss_mse(&a, &b).unwrap() - total / 10.0).abs() < 1e-12);
    let shifted: Vec<Vec<f64>> = a.iter().map(|p| p.iter().map(|v| v + 0.1).collect()).collect();
    assert!((loss_mse(&a, &shifted).unwrap() - 64.0 * 0.01).abs() < 1e-12);
}

#[test]
fn teacher_training_is_seeded() {
    let dims = common::micro_dims();
    let mut r = seeded(10);
    let data: Vec<Vec<f64>> = (0..8).map(|_| (0..dims.n_tokens() * dims.patch_len()).map(|_| r.random()).collect()).collect();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (a, _) = train_teacher(&data, dims, &cfg, &mut seeded(11)).unwrap();
    let (b, _) = train_teacher(&data, dims, &cfg, &mut seeded(11)).unwrap();
    let (c, _) = train_teacher(&data, dims, &cfg, &mut seeded(12)).unwrap();
    assert_eq!(a.data, b.data);
    assert_ne!(a.data, c.data);
}

#[test]
fn short_payload_is_corrupt() {
    let params = random_params(13);
    let (_, mut payload) = encode(&image(14), 0.7, &params, Precision::Int8).unwrap();
    payload.values.pop();
    assert!(matches!(decode(&payload, &params), Err(dynasc::Error::CorruptPayload(_))));
}

proptest! {
    #[test]
    fn quantizer_error_is_bounded(v in -1.0f64..=1.0) {
        prop_assert!((dequantize(quantize(v)) - v).abs() <= 1.0 / 255.0);
    }

    #[test]
    fn top_k_keeps_the_largest(scores in prop::collection::vec(0.0f64..1.0, 1..80), delta in 0.01f64..=1.0) {
        let keep = select_tokens(&scores, delta, SelectionMode::TopK).unwrap();
        let k = (delta * scores.len() as f64).ceil() as usize;
        prop_assert_eq!(keep.iter().filter(|&&x| x).count(), k);
        let min_kept = scores.iter().zip(&keep).filter(|p| *p.1).map(|p| *p.0).fold(f64::INFINITY, f64::min);
        let max_dropped = scores.iter().zip(&keep).filter(|p| !*p.1).map(|p| *p.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_kept >= max_dropped);
    }

    #[test]
    fn retention_is_monotone_and_exact(seed in 0u64..200, delta in 0.05f64..=1.0) {
        let params = random_params(seed);
        let (seq, payload) = encode(&image(seed + 1), delta, &params, Precision::Int8).unwrap();
        let mut active = 64usize;
        for (m, mask) in seq.stage_masks.iter().enumerate() {
            let kept = mask.iter().filter(|&&k| k).count();
            prop_assert_eq!(kept, (delta * active as f64).ceil() as usize);
            if m > 0 {
                for (now, before) in mask.iter().zip(&seq.stage_masks[m - 1]) {
                    prop_assert!(!now || *before);
                }
            }
            active = kept;
        }
        prop_assert_eq!(payload.bit_size(), 64 + 8 * 16 * active);
        let bits = payload.to_bits();
        prop_assert_eq!(bits.len(), payload.bit_size());
        let back = QuantizedPayload::from_bits(&bits, 64, 16, Precision::Int8).unwrap();
        prop_assert_eq!(back, payload);
    }

    #[test]
    fn predictor_is_per_token(seed in 0u64..200, shift in 1usize..10) {
        let params = random_params(seed);
        let mut r = seeded(seed);
        let tokens: Vec<Vec<f64>> = (0..10).map(|_| (0..16).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let mut rotated = tokens.clone();
        rotated.rotate_left(shift);
        let a = predict_importance(&tokens, &params, 1).unwrap();
        let mut b = predict_importance(&rotated, &params, 1).unwrap();
        b.rotate_right(shift);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
