//! Grayscale raster primitives shared by the whole measurement chain.
//!
//! Images are row-major `f64` samples, nominally in `[0,1]`; 8-bit files map
//! `n -> n/255` on load and `round(s*255)` on save. Each public operation is
//! responsible for keeping its own output inside `[0,1]` where its contract
//! promises that. All operations are pure; internal parallelism only splits
//! work over independent output rows, so results are bit-identical to the
//! sequential order.

mod filter;
mod inscribe;
mod pgm;
mod threshold;

pub use filter::{box_mean_filter, min_filter};
pub use inscribe::largest_inscribed_circle;
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use threshold::{adaptive_gaussian_threshold, erode, gaussian_sigma};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from raster construction, geometry, and I/O.
#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid image dimensions {width}x{height} for {samples} samples")]
    InvalidDimensions {
        width: usize,
        height: usize,
        samples: usize,
    },
    #[error("image {width}x{height} is smaller than the required {needed}x{needed} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        needed: usize,
    },
    #[error("threshold window size {ksize} must be odd and at least 3")]
    BadThresholdWindow { ksize: usize },
    #[error("mask contains no foreground pixels")]
    NoForeground,
    #[error("roi {roi:?} does not fit inside a {width}x{height} image")]
    RoiOutOfBounds {
        roi: Roi,
        width: usize,
        height: usize,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("pgm: {0}")]
    PgmFormat(String),
}

/// Grayscale image: row-major `f64` luminance samples, nominally in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl GrayImage {
    /// Image filled with a constant value.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, RasterError> {
        Self::from_samples(width, height, vec![value; width * height])
    }

    /// Takes ownership of row-major samples; the length must be `width * height`
    /// and both dimensions must be nonzero.
    pub fn from_samples(
        width: usize,
        height: usize,
        samples: Vec<f64>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || samples.len() != width * height {
            return Err(RasterError::InvalidDimensions {
                width,
                height,
                samples: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, RasterError> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::from_samples(width, height, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    /// Sample at column `x`, row `y`.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.samples[y * self.width + x] = value;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|&s| f(s)).collect(),
        }
    }

    /// Clamps every sample into `[0,1]`.
    pub fn clamped(&self) -> Self {
        self.map(|s| s.clamp(0.0, 1.0))
    }

    /// Copies the region described by `roi` into a new image.
    pub fn crop(&self, roi: &Roi) -> Result<Self, RasterError> {
        if !roi.fits_within(self.width, self.height) {
            return Err(RasterError::RoiOutOfBounds {
                roi: *roi,
                width: self.width,
                height: self.height,
            });
        }
        let mut samples = Vec::with_capacity(roi.width * roi.height);
        for y in roi.y0..roi.y0 + roi.height {
            samples.extend_from_slice(&self.samples[y * self.width + roi.x0..][..roi.width]);
        }
        Self::from_samples(roi.width, roi.height, samples)
    }

    /// Minimum and maximum sample value.
    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &s in &self.samples {
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }
}

/// Binary mask with the same shape as the image it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    /// All-background mask.
    pub fn empty(width: usize, height: usize) -> Result<Self, RasterError> {
        Self::from_bits(width, height, vec![false; width * height])
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(RasterError::InvalidDimensions {
                width,
                height,
                samples: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x] = value;
    }

    /// Number of foreground pixels.
    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// True when `self` is a subset of `other` (same shape assumed).
    pub fn subset_of(&self, other: &BitMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .bits
                .iter()
                .zip(&other.bits)
                .all(|(&a, &b)| !a || b)
    }
}

/// Rectangular region of interest, `(x0, y0)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self {
            x0,
            y0,
            width,
            height,
        }
    }

    /// True when the region lies fully inside a `width` x `height` image.
    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        self.width >= 1
            && self.height >= 1
            && self.x0 + self.width <= width
            && self.y0 + self.height <= height
    }
}

/// Adaptive-threshold parameters: odd window size and subtractive constant.
///
/// `offset_c` lives on the same `[0,1]` scale as the image samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    ksize: usize,
    offset_c: f64,
}

impl ThresholdParams {
    pub fn new(ksize: usize, offset_c: f64) -> Result<Self, RasterError> {
        if ksize < 3 || ksize.is_multiple_of(2) {
            return Err(RasterError::BadThresholdWindow { ksize });
        }
        Ok(Self { ksize, offset_c })
    }

    pub fn ksize(&self) -> usize {
        self.ksize
    }

    pub fn offset_c(&self) -> f64 {
        self.offset_c
    }
}

impl Default for ThresholdParams {
    fn default() -> Self {
        Self {
            ksize: 17,
            offset_c: 0.0,
        }
    }
}

/// Circle in pixel coordinates; fractional center and radius allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_samples_rejects_bad_shapes() {
        assert!(matches!(
            GrayImage::from_samples(2, 2, vec![0.0; 3]),
            Err(RasterError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            GrayImage::from_samples(0, 4, vec![]),
            Err(RasterError::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn crop_extracts_expected_region() {
        let img = GrayImage::from_fn(4, 3, |x, y| (y * 4 + x) as f64).unwrap();
        let sub = img.crop(&Roi::new(1, 1, 2, 2)).unwrap();
        assert_eq!(sub.samples(), &[5.0, 6.0, 9.0, 10.0]);
    }

    #[test]
    fn crop_rejects_out_of_bounds() {
        let img = GrayImage::filled(4, 3, 0.0).unwrap();
        assert!(matches!(
            img.crop(&Roi::new(3, 0, 2, 2)),
            Err(RasterError::RoiOutOfBounds { .. })
        ));
    }

    #[test]
    fn threshold_params_validated() {
        assert!(ThresholdParams::new(16, 0.0).is_err());
        assert!(ThresholdParams::new(1, 0.0).is_err());
        let p = ThresholdParams::default();
        assert_eq!(p.ksize(), 17);
        assert_eq!(p.offset_c(), 0.0);
    }

    #[test]
    fn subset_relation() {
        let small = BitMask::from_bits(2, 2, vec![true, false, false, false]).unwrap();
        let big = BitMask::from_bits(2, 2, vec![true, true, false, false]).unwrap();
        assert!(small.subset_of(&big));
        assert!(!big.subset_of(&small));
    }
}
