#![allow(dead_code)]

pub mod oracles;

use dynasc::codec::loss::LossWeights;
use dynasc::codec::model::ForwardOptions;
use dynasc::codec::train::{image_objective, ObjectiveSpec};
use dynasc::codec::{CodecDims, CodecParams};
use dynasc::rng;
use rand::Rng;

pub fn micro_dims() -> CodecDims {
    CodecDims {
        patch_side: 2,
        grid_side: 2,
        token_len: 4,
        stages: 2,
        decoder_blocks: 2,
        predictor_hidden: 2,
    }
}

/// Worst relative error between backprop and central differences (h = 1e-4)
/// over every parameter of a 4-patch network, with the tensor it occurred in.
pub struct GradCheck {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

pub fn gradient_check(seed: u64) -> GradCheck {
    let dims = micro_dims();
    let mut r = rng::seeded(seed);
    let mut params = CodecParams::init(dims, &mut r).unwrap();
    for v in &mut params.data {
        *v += r.random_range(-0.3..0.3);
    }
    let mut teacher = params.clone();
    for v in &mut teacher.data {
        *v += r.random_range(-0.2..0.2);
    }
    let n = dims.n_tokens();
    let patches: Vec<f64> = (0..n * dims.patch_len()).map(|_| r.random::<f64>()).collect();
    let noise: Vec<f64> = (0..n * dims.token_len).map(|_| r.random_range(-0.1..0.1)).collect();
    let mae = vec![false, true, false, false];
    let forced = vec![vec![true, true, false, true], vec![true, false, false, true]];
    let score_w: Vec<Vec<f64>> = (0..dims.stages).map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let opts = ForwardOptions {
        mae_mask: Some(&mae),
        forced_keep: Some(&forced),
        token_noise: Some(&noise),
        ..ForwardOptions::new(0.7)
    };
    let spec = ObjectiveSpec {
        weights: LossWeights {
            kl: 0.7,
            distill: 0.5,
            sparsity: 1.0,
            delta: 0.7,
        },
        teacher: Some(&teacher),
        straight_through: false,
        sparsity_surrogate: false,
        score_weights: Some(&score_w),
    };
    let mut grad = vec![0.0; params.data.len()];
    image_objective(&params, &patches, &opts, &spec, 1.0, Some(&mut grad)).unwrap();

    let h = 1e-4;
    let mut out = GradCheck {
        max_rel: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for spec_t in params.layout.specs.clone() {
        for i in spec_t.range() {
            let orig = params.data[i];
            params.data[i] = orig + h;
            let up = image_objective(&params, &patches, &opts, &spec, 1.0, None).unwrap().0.total;
            params.data[i] = orig - h;
            let down = image_objective(&params, &patches, &opts, &spec, 1.0, None).unwrap().0.total;
            params.data[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            out.checked += 1;
            if rel > out.max_rel {
                out.max_rel = rel;
                out.worst = format!("{}[{}] analytic={} fd={}", spec_t.name, i - spec_t.offset, grad[i], fd);
            }
        }
    }
    out
}
