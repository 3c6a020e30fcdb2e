//! Camera capture of the target zone, the image link to the lander and
//! PSNR-matching site detection.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baseline::{dct_decode, dct_encode, DctBlockStream};
use crate::channel::{draw_fading, transmit_bits, transmit_symbols, ChannelConfig};
use crate::codec::{self, CodecParams, Precision, QuantizedPayload};
use crate::error::{Error, Result};
use crate::metrics::{psnr_from_mse, PSNR_CAP_DB};
use crate::rng::{derive_seed, stream};
use crate::surface::{render_observation, CameraImage, Cell, SurfaceMap, IMAGE_SIDE};

const POOL: usize = 4;

/// Detected cell and its PSNR, dB.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub cell: Cell,
    pub index: usize,
    pub confidence: f64,
}

/// One rendered image per cell, plus `POOL x POOL` block means used to skip
/// cells that cannot beat the current best match.
#[derive(Clone, Debug)]
pub struct ReferenceBank {
    pub footprint_m: f64,
    pub cells: crate::surface::CellGrid,
    images: Vec<Vec<f64>>,
    pooled: Vec<Vec<f64>>,
}

fn pool(pixels: &[f64], side: usize) -> Vec<f64> {
    let ps = side / POOL;
    let mut out = vec![0.0; ps * ps];
    for r in 0..side {
        for c in 0..side {
            out[(r / POOL) * ps + c / POOL] += pixels[r * side + c];
        }
    }
    let k = (POOL * POOL) as f64;
    out.iter_mut().for_each(|v| *v /= k);
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance, or `None` once a partial sum exceeds `limit`.
fn sq_dist_below(a: &[f64], b: &[f64], limit: f64) -> Option<f64> {
    let mut acc = 0.0;
    for (ca, cb) in a.chunks(IMAGE_SIDE).zip(b.chunks(IMAGE_SIDE)) {
        acc += sq_dist(ca, cb);
        if acc > limit {
            return None;
        }
    }
    Some(acc)
}

impl ReferenceBank {
    /// Renders every cell center at `footprint_m`.
    pub fn build(surface: &SurfaceMap, footprint_m: f64) -> Result<Self> {
        let cells = surface.cells;
        let mut images = Vec::with_capacity(cells.len());
        let mut pooled = Vec::with_capacity(cells.len());
        for i in 0..cells.len() {
            let (x, y) = cells.center(cells.cell(i));
            let img = render_observation(surface, [x, y, 1.0], footprint_m)?;
            pooled.push(pool(&img.pixels, IMAGE_SIDE));
            images.push(img.pixels);
        }
        Ok(Self {
            footprint_m,
            cells,
            images,
            pooled,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, index: usize) -> CameraImage {
        CameraImage::new(IMAGE_SIDE, IMAGE_SIDE, self.images[index].clone()).expect("bank images are square")
    }
}

/// Cell whose reference image has the highest PSNR against `received`;
/// ties go to the lowest cell index.
pub fn observe(received: &CameraImage, bank: &ReferenceBank) -> Result<Observation> {
    if received.width != IMAGE_SIDE || received.height != IMAGE_SIDE {
        return Err(Error::invalid(format!(
            "received image is {}x{}, bank holds {IMAGE_SIDE}x{IMAGE_SIDE}",
            received.width, received.height
        )));
    }
    if bank.is_empty() {
        return Err(Error::invalid("empty reference bank"));
    }
    let n_px = (IMAGE_SIDE * IMAGE_SIDE) as f64;
    let n_pool = (IMAGE_SIDE * IMAGE_SIDE / (POOL * POOL)) as f64;
    let rp = pool(&received.pixels, IMAGE_SIDE);
    // Block means bound the full MSE from below.
    let mut order: Vec<(f64, usize)> = bank
        .pooled
        .iter()
        .enumerate()
        .map(|(i, p)| (sq_dist(&rp, p) / n_pool, i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = (f64::INFINITY, usize::MAX);
    for (lb, i) in order {
        if lb * (1.0 - 1e-9) > best.0 {
            break;
        }
        let Some(d) = sq_dist_below(&received.pixels, &bank.images[i], best.0 * n_px) else {
            continue;
        };
        let m = d / n_px;
        if m < best.0 || (m == best.0 && i < best.1) {
            best = (m, i);
        }
    }
    Ok(Observation {
        cell: bank.cells.cell(best.1),
        index: best.1,
        confidence: psnr_from_mse(best.0).min(PSNR_CAP_DB),
    })
}

/// Gaussian pointing error with `jitter_m` standard deviation per axis.
pub fn pointing_error<R: Rng + ?Sized>(jitter_m: f64, rng: &mut R) -> [f64; 2] {
    let jx: f64 = StandardNormal.sample(rng);
    let jy: f64 = StandardNormal.sample(rng);
    [jitter_m * jx, jitter_m * jy]
}

/// Image of the target zone, displaced by `offset` meters.
pub fn capture_at(surface: &SurfaceMap, target: Cell, footprint_m: f64, offset: [f64; 2]) -> Result<CameraImage> {
    let (cx, cy) = surface.cells.center(target);
    render_observation(surface, [cx + offset[0], cy + offset[1], 1.0], footprint_m)
}

/// Image of the target zone with a random pointing error.
pub fn capture_target<R: Rng + ?Sized>(
    surface: &SurfaceMap,
    target: Cell,
    footprint_m: f64,
    jitter_m: f64,
    rng: &mut R,
) -> Result<CameraImage> {
    capture_at(surface, target, footprint_m, pointing_error(jitter_m, rng))
}

/// How the camera image reaches the lander.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkMethod {
    /// Sparsified student codec at the controller's keep ratio.
    Dynasc,
    /// Teacher codec, every token sent.
    DenseTeacher,
    /// 8x8 DCT at fixed rate, raw bits.
    DctBaseline,
    /// Raw pixels at 64-bit precision; used as a pass-through reference.
    Identity,
}

impl LinkMethod {
    pub fn name(self) -> &'static str {
        match self {
            LinkMethod::Dynasc => "dynasc",
            LinkMethod::DenseTeacher => "dense-teacher",
            LinkMethod::DctBaseline => "dct-baseline",
            LinkMethod::Identity => "identity",
        }
    }

    pub fn is_semantic(self) -> bool {
        matches!(self, LinkMethod::Dynasc | LinkMethod::DenseTeacher)
    }
}

/// Received image and what it cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub image: CameraImage,
    pub bits: usize,
    /// Encoder stage masks; empty for non-token methods.
    pub stage_masks: Vec<Vec<bool>>,
    pub delta: f64,
}

/// Encoder, channel and decoder for one method.
#[derive(Clone, Debug)]
pub struct ImageLink<'a> {
    pub method: LinkMethod,
    pub student: Option<&'a CodecParams>,
    pub teacher: Option<&'a CodecParams>,
    pub q_bits: u8,
    /// `None` sends the payload without corruption.
    pub channel: Option<ChannelConfig>,
}

impl<'a> ImageLink<'a> {
    pub fn noiseless(method: LinkMethod) -> Self {
        Self {
            method,
            student: None,
            teacher: None,
            q_bits: 8,
            channel: None,
        }
    }

    fn params(&self) -> Result<&'a CodecParams> {
        let p = match self.method {
            LinkMethod::Dynasc => self.student,
            LinkMethod::DenseTeacher => self.teacher,
            _ => None,
        };
        p.ok_or_else(|| Error::Config(format!("method {} needs codec parameters", self.method.name())))
    }

    /// Source coding of `image` at keep ratio `delta` (ignored except by
    /// `Dynasc`).
    pub fn encode(&self, image: &CameraImage, delta: f64) -> Result<Encoded> {
        let delta_in = delta;
        let payload = match self.method {
            LinkMethod::Dynasc | LinkMethod::DenseTeacher => {
                let params = self.params()?;
                let delta = if self.method == LinkMethod::Dynasc { delta } else { 1.0 };
                let (seq, payload) = codec::encode(image, delta, params, Precision::Int8)?;
                return Ok(Encoded {
                    payload: Payload::Tokens(payload),
                    requested_delta: delta_in,
                    stage_masks: seq.stage_masks,
                    delta,
                });
            }
            LinkMethod::DctBaseline => Payload::Dct(dct_encode(image, self.q_bits)?),
            LinkMethod::Identity => Payload::Raw(image.clone()),
        };
        Ok(Encoded {
            payload,
            requested_delta: delta_in,
            stage_masks: Vec::new(),
            delta: 1.0,
        })
    }

    /// Channel and decoder. One fading envelope is drawn per image.
    pub fn deliver<R: Rng + ?Sized>(&self, sent: &Encoded, rng: &mut R) -> Result<Transmission> {
        let draw = self.channel.as_ref().map(|c| draw_fading(c, rng));
        let (image, bits) = match &sent.payload {
            Payload::Tokens(payload) => {
                let received = match (&self.channel, &draw) {
                    (Some(cfg), Some(d)) => transmit_symbols(payload, cfg, d, rng),
                    _ => payload.clone(),
                };
                (codec::decode(&received, self.params()?)?, payload.bit_size())
            }
            Payload::Dct(stream) => {
                let bits = stream.to_bits();
                let received = match &draw {
                    Some(d) => transmit_bits(&bits, d, rng),
                    None => bits,
                };
                let rx = DctBlockStream::from_bits(stream.q_bits, stream.width, stream.height, &received)?;
                (dct_decode(&rx)?, stream.bit_size())
            }
            Payload::Raw(image) => (image.clone(), image.pixels.len() * 64),
        };
        Ok(Transmission {
            image,
            bits,
            stage_masks: sent.stage_masks.clone(),
            delta: sent.delta,
        })
    }

    /// [`encode`](Self::encode) then [`deliver`](Self::deliver).
    pub fn transmit<R: Rng + ?Sized>(&self, image: &CameraImage, delta: f64, rng: &mut R) -> Result<Transmission> {
        self.deliver(&self.encode(image, delta)?, rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Tokens(QuantizedPayload),
    Dct(DctBlockStream),
    Raw(CameraImage),
}

/// Output of the transmitter's source coder.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub payload: Payload,
    /// Keep ratio asked of the encoder.
    pub requested_delta: f64,
    pub stage_masks: Vec<Vec<bool>>,
    pub delta: f64,
}

/// Fraction of `trials` random targets detected correctly. Trial `i` takes
/// its target and pointing error from one stream and its channel noise from
/// another, both derived from `(seed, i)`, so links calibrated with the same
/// seed see the same scenes and noise sequences.
pub fn calibrate_accuracy(
    link: &ImageLink,
    surface: &SurfaceMap,
    bank: &ReferenceBank,
    jitter_m: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("calibration needs at least one trial"));
    }
    let mut hits = 0;
    for i in 0..trials {
        let trial = derive_seed(seed, i as u64);
        let mut scene = stream(trial, 0);
        let target = scene.random_range(0..bank.len());
        let img = capture_target(surface, bank.cells.cell(target), bank.footprint_m, jitter_m, &mut scene)?;
        let rx = link.deliver(&link.encode(&img, delta)?, &mut stream(trial, 1))?;
        if observe(&rx.image, bank)?.index == target {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::surface::generate_surface;

    fn naive(received: &CameraImage, bank: &ReferenceBank) -> usize {
        let mut best = (f64::INFINITY, 0);
        for i in 0..bank.len() {
            let m = sq_dist(&received.pixels, &bank.images[i]);
            if m < best.0 {
                best = (m, i);
            }
        }
        best.1
    }

    #[test]
    fn self_match_and_cap() {
        let s = generate_surface(3, 300, (6000.0, 2000.0)).unwrap();
        let bank = ReferenceBank::build(&s, 200.0).unwrap();
        let target = Cell::new(3, 4);
        let obs = observe(&bank.image(s.cells.index(target)), &bank).unwrap();
        assert_eq!(obs.cell, target);
        assert_eq!(obs.confidence, 99.0);
    }

    #[test]
    fn pruned_search_equals_exhaustive() {
        let s = generate_surface(5, 300, (6000.0, 2000.0)).unwrap();
        let bank = ReferenceBank::build(&s, 200.0).unwrap();
        let mut r = rng::seeded(8);
        for _ in 0..40 {
            let t = r.random_range(0..300);
            let mut img = capture_target(&s, bank.cells.cell(t), 200.0, 80.0, &mut r).unwrap();
            for p in &mut img.pixels {
                let n: f64 = StandardNormal.sample(&mut r);
                *p = (*p + 0.2 * n).clamp(0.0, 1.0);
            }
            assert_eq!(observe(&img, &bank).unwrap().index, naive(&img, &bank));
        }
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let s = generate_surface(5, 0, (6000.0, 2000.0)).unwrap();
        let mut bank = ReferenceBank::build(&s, 200.0).unwrap();
        let same = bank.images[7].clone();
        bank.images[2] = same.clone();
        bank.pooled[2] = pool(&same, IMAGE_SIDE);
        let img = CameraImage::new(64, 64, same).unwrap();
        assert_eq!(observe(&img, &bank).unwrap().index, 2);
    }
}
