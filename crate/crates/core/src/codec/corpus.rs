//! Synthetic training and evaluation images rendered from generated terrain.

use rand::Rng;

use super::params::CodecDims;
use crate::error::{Error, Result};
use crate::rng;
use crate::surface::{render_with_side, CameraImage, SurfaceParams};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub seed: u64,
    pub surfaces: usize,
    pub images_per_surface: usize,
    pub crater_count: usize,
    pub size_m: (f64, f64),
    /// Ground footprint range, drawn uniformly per image.
    pub footprint_m: (f64, f64),
    pub terrain: SurfaceParams,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            surfaces: 4,
            images_per_surface: 128,
            crater_count: 300,
            size_m: (6000.0, 2000.0),
            footprint_m: (160.0, 260.0),
            terrain: SurfaceParams::default(),
        }
    }
}

/// Renders `surfaces * images_per_surface` images at uniform random
/// positions. Surface `i` uses seed `derive_seed(seed, i)`.
pub fn render_corpus(spec: &CorpusSpec, side: usize) -> Result<Vec<CameraImage>> {
    let (lo, hi) = spec.footprint_m;
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Config(format!("footprint range must satisfy 0 < lo <= hi, got {lo}..{hi}")));
    }
    let mut images = Vec::with_capacity(spec.surfaces * spec.images_per_surface);
    for s in 0..spec.surfaces {
        let surface = spec
            .terrain
            .generate(rng::derive_seed(spec.seed, s as u64), spec.crater_count, spec.size_m)?;
        let mut r = rng::stream(spec.seed ^ 0xC0FFEE, s as u64);
        for _ in 0..spec.images_per_surface {
            let fp = lo + (hi - lo) * r.random::<f64>();
            let x = fp / 2.0 + r.random::<f64>() * (surface.width_m - fp);
            let y = fp / 2.0 + r.random::<f64>() * (surface.height_m - fp);
            images.push(render_with_side(&surface, [x, y, 1.0], fp, side)?);
        }
    }
    Ok(images)
}

/// Flattens each image into the codec's token-major patch layout.
pub fn to_patches(images: &[CameraImage], dims: &CodecDims) -> Result<Vec<Vec<f64>>> {
    images.iter().map(|im| super::flatten_image(im, dims)).collect()
}
