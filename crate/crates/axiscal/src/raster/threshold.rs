//! Adaptive Gaussian thresholding and binary erosion.

use rayon::prelude::*;

use super::{BitMask, GrayImage, RasterError, ThresholdParams};

/// Gaussian width used for a `ksize` x `ksize` adaptive-threshold window:
/// `0.3 * ((ksize - 1) * 0.5 - 1) + 0.8`.
pub fn gaussian_sigma(ksize: usize) -> f64 {
    0.3 * ((ksize as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Thresholds each pixel against its Gaussian-weighted local mean minus
/// `offset_c`; the foreground bit is set where the pixel is strictly brighter.
///
/// Weights are an isotropic Gaussian with `sigma = gaussian_sigma(ksize)`,
/// truncated at the image borders and renormalized over the in-bounds window.
/// The comparison is evaluated in deviation form, `sum(w * (s_i - s_p)) <
/// offset_c * sum(w)`, which keeps locally constant regions exactly on the
/// background side instead of at the mercy of rounding.
pub fn adaptive_gaussian_threshold(
    img: &GrayImage,
    params: &ThresholdParams,
) -> Result<BitMask, RasterError> {
    let k = params.ksize();
    let (w, h) = (img.width(), img.height());
    if w < k || h < k {
        return Err(RasterError::ImageTooSmall {
            width: w,
            height: h,
            needed: k,
        });
    }
    let r = k / 2;
    let sigma = gaussian_sigma(k);
    let line: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - r as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let offset_c = params.offset_c();

    let mut bits = vec![false; w * h];
    bits.par_chunks_mut(w).enumerate().for_each(|(y, out_row)| {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r).min(h - 1);
        for (x, bit) in out_row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r).min(w - 1);
            let center = img.get(x, y);
            let mut dev = 0.0;
            let mut wsum = 0.0;
            for yy in y0..=y1 {
                let wy = line[yy + r - y];
                let row = img.row(yy);
                for xx in x0..=x1 {
                    let weight = wy * line[xx + r - x];
                    dev += weight * (row[xx] - center);
                    wsum += weight;
                }
            }
            *bit = dev < offset_c * wsum;
        }
    });
    BitMask::from_bits(w, h, bits)
}

/// Binary erosion with a square structuring element of odd side `se_size`.
/// Pixels outside the image count as background, so foreground touching the
/// border is always eroded for `se_size >= 3`.
pub fn erode(mask: &BitMask, se_size: usize) -> BitMask {
    assert!(
        se_size % 2 == 1 && se_size >= 1,
        "structuring element side must be odd, got {se_size}"
    );
    let (w, h) = (mask.width(), mask.height());
    if se_size == 1 {
        return mask.clone();
    }
    let r = se_size / 2;
    let mut bits = vec![false; w * h];
    for y in 0..h {
        'pixel: for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            if x < r || y < r || x + r >= w || y + r >= h {
                continue; // window extends outside: background by policy
            }
            for yy in y - r..=y + r {
                for xx in x - r..=x + r {
                    if !mask.get(xx, yy) {
                        continue 'pixel;
                    }
                }
            }
            bits[y * w + x] = true;
        }
    }
    BitMask::from_bits(w, h, bits).expect("erode preserves shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigma_for_default_window() {
        assert_relative_eq!(gaussian_sigma(17), 2.9, epsilon = 1e-12);
        assert_relative_eq!(gaussian_sigma(3), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn constant_image_has_empty_foreground() {
        // 0.3 is not exactly representable; the deviation form must still
        // classify every pixel as background.
        let img = GrayImage::filled(20, 20, 0.3).unwrap();
        let mask = adaptive_gaussian_threshold(&img, &ThresholdParams::default()).unwrap();
        assert_eq!(mask.count_foreground(), 0);
    }

    #[test]
    fn lone_bright_pixel_is_foreground() {
        let mut img = GrayImage::filled(33, 33, 0.0).unwrap();
        img.set(16, 16, 1.0);
        let mask = adaptive_gaussian_threshold(&img, &ThresholdParams::default()).unwrap();
        assert!(mask.get(16, 16));
        assert!(!mask.get(2, 2), "far-away flat background stays background");
    }

    #[test]
    fn image_smaller_than_window_is_rejected() {
        let img = GrayImage::filled(10, 10, 0.5).unwrap();
        assert!(matches!(
            adaptive_gaussian_threshold(&img, &ThresholdParams::default()),
            Err(RasterError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn positive_offset_pushes_borderline_pixels_into_foreground() {
        let mut img = GrayImage::filled(20, 20, 0.5).unwrap();
        img.set(10, 10, 0.501);
        let strict = ThresholdParams::new(17, 0.0).unwrap();
        let relaxed = ThresholdParams::new(17, 0.05).unwrap();
        let strict_mask = adaptive_gaussian_threshold(&img, &strict).unwrap();
        let relaxed_mask = adaptive_gaussian_threshold(&img, &relaxed).unwrap();
        assert!(strict_mask.count_foreground() <= relaxed_mask.count_foreground());
        assert!(relaxed_mask.get(0, 0), "offset lowers every local threshold");
    }

    #[test]
    fn erode_empty_stays_empty() {
        let mask = BitMask::empty(8, 8).unwrap();
        assert_eq!(erode(&mask, 3).count_foreground(), 0);
    }

    #[test]
    fn erode_lone_pixel_vanishes() {
        let mut mask = BitMask::empty(9, 9).unwrap();
        mask.set(4, 4, true);
        assert_eq!(erode(&mask, 3).count_foreground(), 0);
    }

    #[test]
    fn erode_full_mask_loses_one_pixel_border() {
        let mask = BitMask::from_bits(5, 4, vec![true; 20]).unwrap();
        let out = erode(&mask, 3);
        assert_eq!(out.count_foreground(), 3 * 2);
        for y in 0..4 {
            for x in 0..5 {
                let interior = (1..=3).contains(&x) && (1..=2).contains(&y);
                assert_eq!(out.get(x, y), interior, "({x},{y})");
            }
        }
    }

    #[test]
    fn erode_with_unit_element_is_identity() {
        let mut mask = BitMask::empty(6, 6).unwrap();
        mask.set(0, 0, true);
        mask.set(3, 2, true);
        assert_eq!(erode(&mask, 1), mask);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_mask(side: usize) -> impl Strategy<Value = BitMask> {
            proptest::collection::vec(proptest::bool::ANY, side * side)
                .prop_map(move |bits| BitMask::from_bits(side, side, bits).unwrap())
        }

        proptest! {
            #[test]
            fn erode_is_anti_extensive(mask in arb_mask(10), se in prop::sample::select(vec![1usize, 3, 5])) {
                prop_assert!(erode(&mask, se).subset_of(&mask));
            }

            #[test]
            fn erode_is_monotone(a in arb_mask(10), extra in arb_mask(10), se in prop::sample::select(vec![1usize, 3, 5])) {
                // b = a union extra, so a is a subset of b by construction.
                let bits = a.bits().iter().zip(extra.bits()).map(|(&x, &y)| x || y).collect();
                let b = BitMask::from_bits(10, 10, bits).unwrap();
                prop_assert!(erode(&a, se).subset_of(&erode(&b, se)));
            }

            /// Adding a constant shifts pixel and local mean together, so the
            /// strict comparison is unchanged when offset_c = 0. Samples and
            /// shift live on the 1/64 grid so the shifted sums stay exact.
            #[test]
            fn threshold_invariant_under_constant_shift(
                cells in proptest::collection::vec(0u8..=32, 19 * 19),
                shift in 0u8..=32,
            ) {
                let base = GrayImage::from_samples(
                    19, 19,
                    cells.iter().map(|&n| f64::from(n) / 64.0).collect(),
                ).unwrap();
                let shifted = base.map(|s| s + f64::from(shift) / 64.0);
                let params = ThresholdParams::default();
                let a = adaptive_gaussian_threshold(&base, &params).unwrap();
                let b = adaptive_gaussian_threshold(&shifted, &params).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
