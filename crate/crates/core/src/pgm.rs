//! Binary PGM (P5, maxval 255) reading and writing.

use std::path::Path;

use crate::error::{Error, Result};
use crate::surface::CameraImage;

pub fn load_pgm(path: impl AsRef<Path>) -> Result<CameraImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

pub fn save_pgm(image: &CameraImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

/// Pixels are clamped to [0, 1] and rounded to the nearest of 256 levels.
pub fn encode_pgm(image: &CameraImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<CameraImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 {
        return Err(cur.err("truncated header"));
    }
    if &bytes[..2] != b"P5" {
        return Err(cur.err("unsupported magic"));
    }
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_space_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Parse {
            offset: maxval_at,
            reason: format!("unsupported maxval {maxval}"),
        });
    }
    if width == 0 || height == 0 {
        return Err(cur.err("zero image dimension"));
    }
    match bytes.get(cur.pos) {
        Some(b' ' | b'\t' | b'\n' | b'\r') => cur.pos += 1,
        _ => return Err(cur.err("expected single whitespace before raster")),
    }
    let n = width * height;
    let raster = &bytes[cur.pos..];
    if raster.len() < n {
        return Err(Error::Parse {
            offset: bytes.len(),
            reason: format!("truncated payload: {} of {n} pixels", raster.len()),
        });
    }
    let pixels = raster[..n].iter().map(|&v| v as f64 / 255.0).collect();
    CameraImage::new(width, height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_zero_image() {
        let mut bytes = b"P5\n64 64\n255\n".to_vec();
        bytes.extend(std::iter::repeat(0u8).take(64 * 64));
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!((img.width, img.height), (64, 64));
        assert!(img.pixels.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = parse_pgm(&bytes).unwrap();
        assert_eq!(img.pixels, vec![0.0, 1.0]);
    }

    #[test]
    fn wrong_magic() {
        let err = parse_pgm(b"P2\n1 1\n255\n0").unwrap_err();
        match err {
            Error::Parse { offset, reason } => {
                assert_eq!(offset, 0);
                assert!(reason.contains("unsupported magic"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_and_bad_maxval() {
        let err = parse_pgm(b"P5\n4 4\n255\n\x00\x00").unwrap_err();
        assert!(matches!(err, Error::Parse { ref reason, .. } if reason.contains("truncated")));
        let err = parse_pgm(b"P5\n1 1\n65535\n\x00\x00").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 7, .. }));
        let err = parse_pgm(b"P5\nxx").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 3, .. }));
    }
}
