//! Sliding-window box-mean and minimum filters.
//!
//! Windows are truncated at image borders: the mean divides by the in-bounds
//! count and the minimum scans in-bounds pixels only. Both filters evaluate
//! the window directly rather than through running sums, so their cost grows
//! with the window area; callers that need large radii cheaply should use the
//! subsampled guided-filter path instead.

use rayon::prelude::*;

use super::GrayImage;

/// Mean over the `(2r+1)x(2r+1)` window around each pixel, truncated at the
/// borders and divided by the in-bounds count.
pub fn box_mean_filter(img: &GrayImage, radius: usize) -> GrayImage {
    window_filter(img, radius, |img, x0, x1, y0, y1| {
        let mut sum = 0.0;
        for y in y0..=y1 {
            for &s in &img.row(y)[x0..=x1] {
                sum += s;
            }
        }
        sum / ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64
    })
}

/// Minimum over the truncated `(2r+1)x(2r+1)` window around each pixel.
pub fn min_filter(img: &GrayImage, radius: usize) -> GrayImage {
    window_filter(img, radius, |img, x0, x1, y0, y1| {
        let mut lo = f64::INFINITY;
        for y in y0..=y1 {
            for &s in &img.row(y)[x0..=x1] {
                lo = lo.min(s);
            }
        }
        lo
    })
}

/// Applies `f` to the in-bounds window bounds around each pixel. Output rows
/// are computed independently in parallel; within a window `f` always scans
/// top-to-bottom, left-to-right, so results match the sequential order bit
/// for bit.
fn window_filter(
    img: &GrayImage,
    radius: usize,
    f: impl Fn(&GrayImage, usize, usize, usize, usize) -> f64 + Sync,
) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, out_row)| {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        for (x, slot) in out_row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            *slot = f(img, x0, x1, y0, y1);
        }
    });
    GrayImage::from_samples(w, h, out).expect("filter preserves shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp3x3() -> GrayImage {
        GrayImage::from_samples(3, 3, (0..9).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn box_mean_on_ramp() {
        let out = box_mean_filter(&ramp3x3(), 1);
        assert_eq!(out.get(1, 1), 4.0);
        assert_eq!(out.get(0, 0), (0.0 + 1.0 + 3.0 + 4.0) / 4.0);
        assert_eq!(out.get(2, 2), (4.0 + 5.0 + 7.0 + 8.0) / 4.0);
    }

    #[test]
    fn box_mean_radius_zero_is_identity() {
        let img = ramp3x3();
        assert_eq!(box_mean_filter(&img, 0), img);
    }

    #[test]
    fn box_mean_preserves_dyadic_constants_exactly() {
        for &c in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let img = GrayImage::filled(7, 5, c).unwrap();
            for radius in [1, 2, 10] {
                assert_eq!(box_mean_filter(&img, radius), img, "c={c} r={radius}");
            }
        }
    }

    #[test]
    fn min_on_ramp() {
        let out = min_filter(&ramp3x3(), 1);
        assert_eq!(out.get(1, 1), 0.0);
        assert_eq!(out.get(2, 2), 4.0);
    }

    #[test]
    fn min_radius_zero_is_identity() {
        let img = ramp3x3();
        assert_eq!(min_filter(&img, 0), img);
    }

    #[test]
    fn min_preserves_constants_exactly() {
        let img = GrayImage::filled(6, 4, 0.3).unwrap();
        assert_eq!(min_filter(&img, 3), img);
    }

    #[test]
    fn radius_larger_than_image_covers_everything() {
        let img = ramp3x3();
        let mean = box_mean_filter(&img, 10);
        let lo = min_filter(&img, 10);
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(mean.get(x, y), 4.0);
                assert_eq!(lo.get(x, y), 0.0);
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        /// Samples on the 1/256 grid keep window sums exact in f64, so the
        /// algebraic filter identities below hold with tight tolerances.
        fn dyadic_image(max_side: usize) -> impl Strategy<Value = GrayImage> {
            (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
                proptest::collection::vec(0u16..=256, w * h).prop_map(move |v| {
                    GrayImage::from_samples(
                        w,
                        h,
                        v.into_iter().map(|n| f64::from(n) / 256.0).collect(),
                    )
                    .unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn box_mean_preserves_constants(c in 0u16..=256, w in 1usize..12, h in 1usize..12, r in 0usize..6) {
                let img = GrayImage::filled(w, h, f64::from(c) / 256.0).unwrap();
                prop_assert_eq!(box_mean_filter(&img, r), img);
            }

            #[test]
            fn min_is_anti_extensive(img in dyadic_image(12), r in 0usize..6) {
                let out = min_filter(&img, r);
                for (o, i) in out.samples().iter().zip(img.samples()) {
                    prop_assert!(o <= i);
                }
            }

            #[test]
            fn box_mean_is_linear(
                a in dyadic_image(8),
                bv in proptest::collection::vec(0u16..=256, 64),
                alpha in 0u16..=64,
                r in 0usize..4,
            ) {
                let (w, h) = (a.width(), a.height());
                let b = GrayImage::from_samples(
                    w, h,
                    bv.into_iter().cycle().take(w * h).map(|n| f64::from(n) / 256.0).collect(),
                ).unwrap();
                let alpha = f64::from(alpha) / 64.0;
                let beta = 1.0 - alpha;
                let mixed = GrayImage::from_fn(w, h, |x, y| {
                    alpha * a.get(x, y) + beta * b.get(x, y)
                }).unwrap();
                let lhs = box_mean_filter(&mixed, r);
                let fa = box_mean_filter(&a, r);
                let fb = box_mean_filter(&b, r);
                for y in 0..h {
                    for x in 0..w {
                        let rhs = alpha * fa.get(x, y) + beta * fb.get(x, y);
                        prop_assert!((lhs.get(x, y) - rhs).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
