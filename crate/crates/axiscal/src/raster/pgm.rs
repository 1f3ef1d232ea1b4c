//! Binary PGM (P5, 8-bit) encoding and decoding.
//!
//! The canonical interchange format for this crate: `n -> n / 255` on load,
//! `round(s * 255)` with clamping on save. Comments (`#` to end of line) are
//! accepted anywhere whitespace may appear in the header.

use std::path::Path;

use super::{GrayImage, RasterError};

/// Serializes an image as binary PGM, quantizing samples to 8 bits.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.samples()
            .iter()
            .map(|&s| (s * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    out
}

/// Parses a binary PGM byte stream produced by `encode_pgm` or any
/// conforming writer with maxval 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, RasterError> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let magic = cursor.token()?;
    if magic != b"P5" {
        return Err(RasterError::PgmFormat(format!(
            "expected magic P5, got {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let width = cursor.number()? as usize;
    let height = cursor.number()? as usize;
    let maxval = cursor.number()?;
    if maxval != 255 {
        return Err(RasterError::PgmFormat(format!(
            "unsupported maxval {maxval}, only 255 is handled"
        )));
    }
    cursor.single_whitespace()?;
    let need = width
        .checked_mul(height)
        .ok_or_else(|| RasterError::PgmFormat("dimension overflow".into()))?;
    let rest = &cursor.bytes[cursor.pos..];
    if rest.len() < need {
        return Err(RasterError::PgmFormat(format!(
            "raster truncated: need {need} bytes, found {}",
            rest.len()
        )));
    }
    let samples = rest[..need].iter().map(|&n| f64::from(n) / 255.0).collect();
    GrayImage::from_samples(width, height, samples)
}

/// Writes `img` to `path` as binary PGM.
pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<(), RasterError> {
    std::fs::write(path, encode_pgm(img))?;
    Ok(())
}

/// Reads a binary PGM file.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, RasterError> {
    decode_pgm(&std::fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<Vec<u8>, RasterError> {
        self.skip_separators();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RasterError::PgmFormat("unexpected end of header".into()));
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn number(&mut self) -> Result<u64, RasterError> {
        let tok = self.token()?;
        std::str::from_utf8(&tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                RasterError::PgmFormat(format!(
                    "expected number, got {:?}",
                    String::from_utf8_lossy(&tok)
                ))
            })
    }

    /// Exactly one whitespace byte separates the header from the raster.
    fn single_whitespace(&mut self) -> Result<(), RasterError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(RasterError::PgmFormat(
                "missing whitespace before raster data".into(),
            )),
        }
    }
}
