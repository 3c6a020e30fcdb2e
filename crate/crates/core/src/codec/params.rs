//! Codec parameter storage and the `DSC1` binary format.
//!
//! All tensors live in one flat `Vec<f64>`; `Layout` records where each one
//! starts. File layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "DSC1"
//! dims       6 x u32  patch_side, grid_side, token_len, stages,
//!                     decoder_blocks, predictor_hidden
//! n_tensors  u32
//! per tensor:
//!   name_len u16, name utf-8 bytes,
//!   rank u8, rank x u32 extents
//! data       f64 x total, tensors concatenated in declaration order
//! ```

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DSC1";

/// Neighbour directions on the token grid, in weight order.
pub const DIRECTIONS: [&str; 4] = ["up", "left", "right", "down"];

/// Shape hyperparameters of the token codec.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecDims {
    pub patch_side: usize,
    /// Tokens per image side; the image is `grid_side * patch_side` pixels.
    pub grid_side: usize,
    pub token_len: usize,
    pub stages: usize,
    pub decoder_blocks: usize,
    pub predictor_hidden: usize,
}

impl Default for CodecDims {
    fn default() -> Self {
        Self {
            patch_side: 8,
            grid_side: 8,
            token_len: 16,
            stages: 2,
            decoder_blocks: 2,
            predictor_hidden: 8,
        }
    }
}

impl CodecDims {
    pub fn patch_len(&self) -> usize {
        self.patch_side * self.patch_side
    }

    pub fn n_tokens(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn image_side(&self) -> usize {
        self.grid_side * self.patch_side
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.patch_side,
            self.grid_side,
            self.token_len,
            self.stages,
            self.predictor_hidden,
        ];
        if fields.iter().any(|&v| v == 0) {
            return Err(Error::invalid(format!("codec dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub specs: Vec<TensorSpec>,
    pub total: usize,
    pub embed_w: usize,
    pub embed_b: usize,
    pub enc_mask: usize,
    pub enc_w: Vec<usize>,
    pub enc_b: Vec<usize>,
    pub pred_w1: Vec<usize>,
    pub pred_b1: Vec<usize>,
    pub pred_w2: Vec<usize>,
    pub pred_b2: Vec<usize>,
    pub dec_mask: usize,
    pub dec_w: Vec<usize>,
    /// Neighbour weights per direction: up, left, right, down.
    pub dec_u: Vec<[usize; 4]>,
    pub dec_b: Vec<usize>,
    pub out_w: usize,
    pub out_b: usize,
}

impl Layout {
    pub fn new(d: &CodecDims) -> Self {
        let (p, l, h) = (d.patch_len(), d.token_len, d.predictor_hidden);
        let mut specs = Vec::new();
        let mut total = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let offset = total;
            total += shape.iter().product::<usize>();
            specs.push(TensorSpec { name, shape, offset });
            offset
        };
        let embed_w = add("embed.w".into(), vec![l, p]);
        let embed_b = add("embed.b".into(), vec![l]);
        let enc_mask = add("embed.mask_token".into(), vec![l]);
        let (mut enc_w, mut enc_b, mut pred_w1, mut pred_b1, mut pred_w2, mut pred_b2) =
            (vec![], vec![], vec![], vec![], vec![], vec![]);
        for m in 0..d.stages {
            enc_w.push(add(format!("enc{m}.w"), vec![l, l]));
            enc_b.push(add(format!("enc{m}.b"), vec![l]));
            pred_w1.push(add(format!("pred{m}.w1"), vec![h, l]));
            pred_b1.push(add(format!("pred{m}.b1"), vec![h]));
            pred_w2.push(add(format!("pred{m}.w2"), vec![h]));
            pred_b2.push(add(format!("pred{m}.b2"), vec![1]));
        }
        let dec_mask = add("dec.mask_token".into(), vec![l]);
        let (mut dec_w, mut dec_u, mut dec_b) = (vec![], vec![], vec![]);
        for k in 0..d.decoder_blocks {
            dec_w.push(add(format!("dec{k}.w"), vec![l, l]));
            dec_u.push(DIRECTIONS.map(|dir| add(format!("dec{k}.u_{dir}"), vec![l, l])));
            dec_b.push(add(format!("dec{k}.b"), vec![l]));
        }
        let out_w = add("out.w".into(), vec![p, l]);
        let out_b = add("out.b".into(), vec![p]);
        Self {
            specs,
            total,
            embed_w,
            embed_b,
            enc_mask,
            enc_w,
            enc_b,
            pred_w1,
            pred_b1,
            pred_w2,
            pred_b2,
            dec_mask,
            dec_w,
            dec_u,
            dec_b,
            out_w,
            out_b,
        }
    }
}

/// Trainable weights of one codec instance.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecParams {
    pub dims: CodecDims,
    pub layout: Layout,
    pub data: Vec<f64>,
}

impl CodecParams {
    pub fn zeros(dims: CodecDims) -> Result<Self> {
        dims.validate()?;
        let layout = Layout::new(&dims);
        let data = vec![0.0; layout.total];
        Ok(Self { dims, layout, data })
    }

    /// Uniform Glorot-style initialization; biases and mask tokens start at 0
    /// except the decoder mask token, which starts small and random.
    pub fn init<R: Rng + ?Sized>(dims: CodecDims, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        for spec in p.layout.specs.clone() {
            let scale = match spec.shape.as_slice() {
                [rows, cols] => (6.0 / (rows + cols) as f64).sqrt(),
                _ if spec.name.contains("mask_token") => 0.1,
                [h] if spec.name.ends_with(".w2") => (6.0 / (h + 1) as f64).sqrt(),
                _ => 0.0,
            };
            for v in &mut p.data[spec.range()] {
                *v = if scale > 0.0 { rng.random_range(-scale..scale) } else { 0.0 };
            }
        }
        Ok(p)
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .specs
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.data[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.specs.iter().find(|s| s.name == name)?.range();
        Some(&mut self.data[range])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = &self.dims;
        let mut out = Vec::with_capacity(64 + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [d.patch_side, d.grid_side, d.token_len, d.stages, d.decoder_blocks, d.predictor_hidden] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.layout.specs.len() as u32).to_le_bytes());
        for spec in &self.layout.specs {
            out.extend_from_slice(&(spec.name.len() as u16).to_le_bytes());
            out.extend_from_slice(spec.name.as_bytes());
            out.push(spec.shape.len() as u8);
            for &e in &spec.shape {
                out.extend_from_slice(&(e as u32).to_le_bytes());
            }
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                reason: "unsupported magic (expected DSC1)".into(),
            });
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let dims = CodecDims {
            patch_side: dims[0],
            grid_side: dims[1],
            token_len: dims[2],
            stages: dims[3],
            decoder_blocks: dims[4],
            predictor_hidden: dims[5],
        };
        let mut params = Self::zeros(dims).map_err(|e| Error::Parse {
            offset: 4,
            reason: e.to_string(),
        })?;
        let table_at = r.pos;
        let n = r.u32()? as usize;
        if n != params.layout.specs.len() {
            return Err(Error::Parse {
                offset: table_at,
                reason: format!("expected {} tensors, found {n}", params.layout.specs.len()),
            });
        }
        for spec in &params.layout.specs {
            let at = r.pos;
            let len = r.u16()? as usize;
            let name = r.take(len)?;
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            if name != spec.name.as_bytes() || shape != spec.shape {
                return Err(Error::Parse {
                    offset: at,
                    reason: format!("tensor table mismatch at {}", spec.name),
                });
            }
        }
        for v in &mut params.data {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos,
                reason: "trailing bytes after tensor data".into(),
            });
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.bytes.len(),
                reason: format!("truncated: needed {n} bytes at {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
}
