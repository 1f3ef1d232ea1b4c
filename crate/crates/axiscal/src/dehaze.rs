//! Defocus enhancement via grayscale dark-channel compensation.
//!
//! A defocused image is modeled as `I = J*t + A*(1 - t)`: the in-focus image
//! `J` attenuated by a transmission map `t` plus a veiling level `A`. The
//! enhancement estimates `A` from the brightest samples, derives a rough
//! transmission from the local minimum, refines it edge-aware with a guided
//! filter (exact or subsampled fast variant), and inverts the model. A global
//! max-min stretch is included as the baseline contrast method.

use thiserror::Error;

use crate::raster::{box_mean_filter, min_filter, GrayImage};

/// Errors from defocus-enhancement configuration and filtering.
#[derive(Debug, Error)]
pub enum DehazeError {
    #[error("guide {0}x{1} and input {2}x{3} must share shape")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("bad dehaze parameter: {0}")]
    BadParams(String),
}

/// Tuning for the dark-channel enhancement chain.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DehazeParams {
    /// Window radius of the dark-channel minimum filter.
    pub patch_radius: usize,
    /// Fraction of brightest samples averaged into the veiling level `A`.
    pub a_fraction: f64,
    /// Lower clamp on transmission; keeps the recovery division bounded.
    pub t_floor: f64,
    /// Guided-filter window radius.
    pub gf_radius: usize,
    /// Guided-filter regularization.
    pub gf_eps: f64,
    /// Subsampling factor: 1 = exact guided filter, 2 = fast variant.
    pub subsample_s: usize,
}

impl DehazeParams {
    pub fn validated(self) -> Result<Self, DehazeError> {
        if !(self.a_fraction > 0.0 && self.a_fraction <= 1.0) {
            return Err(DehazeError::BadParams(format!(
                "a_fraction {} outside (0, 1]",
                self.a_fraction
            )));
        }
        if !(self.t_floor > 0.0 && self.t_floor < 1.0) {
            return Err(DehazeError::BadParams(format!(
                "t_floor {} outside (0, 1)",
                self.t_floor
            )));
        }
        if self.gf_radius < 1 {
            return Err(DehazeError::BadParams("gf_radius must be >= 1".into()));
        }
        if !(self.gf_eps > 0.0) {
            return Err(DehazeError::BadParams(format!(
                "gf_eps {} must be positive",
                self.gf_eps
            )));
        }
        if self.subsample_s < 1 {
            return Err(DehazeError::BadParams("subsample_s must be >= 1".into()));
        }
        Ok(self)
    }
}

impl Default for DehazeParams {
    fn default() -> Self {
        Self {
            patch_radius: 7,
            a_fraction: 0.01,
            t_floor: 0.1,
            gf_radius: 30,
            gf_eps: 1e-3,
            subsample_s: 1,
        }
    }
}

/// Per-pixel transmission, clamped into `[floor, 1]` at construction.
#[derive(Debug, Clone)]
pub struct TransmissionMap {
    map: GrayImage,
    floor: f64,
}

impl TransmissionMap {
    pub fn new(raw: GrayImage, floor: f64) -> Self {
        Self {
            map: raw.map(|t| t.clamp(floor, 1.0)),
            floor,
        }
    }

    pub fn map(&self) -> &GrayImage {
        &self.map
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

/// Veiling level `A`: mean of the brightest `ceil(a_fraction * N)` samples,
/// clamped below by 1e-6. The image itself serves as the grayscale dark
/// channel.
pub fn estimate_atmospheric_light(img: &GrayImage, a_fraction: f64) -> f64 {
    let n = img.samples().len();
    let count = ((a_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut samples = img.samples().to_vec();
    // Partition so the top `count` samples occupy the tail.
    let pivot = n - count;
    if pivot > 0 {
        samples.select_nth_unstable_by(pivot - 1, f64::total_cmp);
    }
    let sum: f64 = samples[pivot..].iter().sum();
    (sum / count as f64).max(1e-6)
}

/// Rough transmission `t = 1 - min_patch(I) / A`, clamped to `[t_floor, 1]`.
pub fn rough_transmission(img: &GrayImage, a: f64, params: &DehazeParams) -> TransmissionMap {
    let dark = min_filter(img, params.patch_radius);
    TransmissionMap::new(dark.map(|m| 1.0 - m / a), params.t_floor)
}

fn zip_map(a: &GrayImage, b: &GrayImage, f: impl Fn(f64, f64) -> f64) -> GrayImage {
    GrayImage::from_samples(
        a.width(),
        a.height(),
        a.samples()
            .iter()
            .zip(b.samples())
            .map(|(&x, &y)| f(x, y))
            .collect(),
    )
    .expect("zip preserves shape")
}

/// Nearest-neighbor downsample by `s`, keeping every `s`-th pixel.
fn downsample(img: &GrayImage, s: usize) -> GrayImage {
    let ws = img.width().div_ceil(s);
    let hs = img.height().div_ceil(s);
    GrayImage::from_fn(ws, hs, |x, y| img.get(x * s, y * s)).expect("nonzero shape")
}

/// Bilinear upsample to `w` x `h`, inverting the `downsample` grid; samples
/// beyond the last source pixel clamp to the edge.
fn upsample_bilinear(img: &GrayImage, w: usize, h: usize, s: usize) -> GrayImage {
    let (ws, hs) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |x, y| {
        let u = (x as f64 / s as f64).min((ws - 1) as f64);
        let v = (y as f64 / s as f64).min((hs - 1) as f64);
        let (i0, j0) = (u.floor() as usize, v.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(ws - 1), (j0 + 1).min(hs - 1));
        let (fu, fv) = (u - i0 as f64, v - j0 as f64);
        let top = img.get(i0, j0) * (1.0 - fu) + img.get(i1, j0) * fu;
        let bottom = img.get(i0, j1) * (1.0 - fu) + img.get(i1, j1) * fu;
        top * (1.0 - fv) + bottom * fv
    })
    .expect("nonzero shape")
}

/// Per-window linear regression of `input` against `guide`:
/// `a = cov(I,p) / (var(I) + eps)`, `b = mean_p - a * mean_I`, output
/// `q = mean_a * I + mean_b` with all means taken over `(2r+1)` windows.
///
/// With `subsample_s > 1` the statistics are computed on an `s`-fold
/// downsampled pair at radius `gf_radius / s`, and `mean_a`, `mean_b` are
/// bilinearly upsampled before the final combination; cost drops by `s^2`.
/// Output is not clamped; transmission callers clamp afterwards.
pub fn guided_filter(
    guide: &GrayImage,
    input: &GrayImage,
    gf_radius: usize,
    gf_eps: f64,
    subsample_s: usize,
) -> Result<GrayImage, DehazeError> {
    if guide.width() != input.width() || guide.height() != input.height() {
        return Err(DehazeError::ShapeMismatch(
            guide.width(),
            guide.height(),
            input.width(),
            input.height(),
        ));
    }
    assert!(subsample_s >= 1, "subsample factor must be at least 1");
    if subsample_s == 1 {
        let (mean_a, mean_b) = regression_means(guide, input, gf_radius, gf_eps);
        return Ok(zip_map(&zip_map(&mean_a, guide, |a, i| a * i), &mean_b, |ai, b| ai + b));
    }
    let small_guide = downsample(guide, subsample_s);
    let small_input = downsample(input, subsample_s);
    let r_sub = (gf_radius / subsample_s).max(1);
    let (mean_a_s, mean_b_s) = regression_means(&small_guide, &small_input, r_sub, gf_eps);
    let mean_a = upsample_bilinear(&mean_a_s, guide.width(), guide.height(), subsample_s);
    let mean_b = upsample_bilinear(&mean_b_s, guide.width(), guide.height(), subsample_s);
    Ok(zip_map(&zip_map(&mean_a, guide, |a, i| a * i), &mean_b, |ai, b| ai + b))
}

/// The smoothed regression coefficients `(mean_a, mean_b)` of the guided
/// filter at full working resolution.
fn regression_means(
    guide: &GrayImage,
    input: &GrayImage,
    radius: usize,
    eps: f64,
) -> (GrayImage, GrayImage) {
    let mean_i = box_mean_filter(guide, radius);
    let mean_p = box_mean_filter(input, radius);
    let corr_i = box_mean_filter(&zip_map(guide, guide, |a, b| a * b), radius);
    let corr_ip = box_mean_filter(&zip_map(guide, input, |a, b| a * b), radius);
    let var_i = zip_map(&corr_i, &mean_i, |c, m| c - m * m);
    let cov_ip = zip_map(&corr_ip, &zip_map(&mean_i, &mean_p, |a, b| a * b), |c, mm| c - mm);
    let a = zip_map(&cov_ip, &var_i, |cov, var| cov / (var + eps));
    let b = zip_map(&mean_p, &zip_map(&a, &mean_i, |x, y| x * y), |mp, am| mp - am);
    (box_mean_filter(&a, radius), box_mean_filter(&b, radius))
}

/// Inverts the defocus model: `J = (I - A) / t + A`, clamped to `[0,1]`.
pub fn recover(img: &GrayImage, t: &TransmissionMap, a: f64) -> Result<GrayImage, DehazeError> {
    let map = t.map();
    if img.width() != map.width() || img.height() != map.height() {
        return Err(DehazeError::ShapeMismatch(
            img.width(),
            img.height(),
            map.width(),
            map.height(),
        ));
    }
    Ok(zip_map(img, map, |i, t| ((i - a) / t + a).clamp(0.0, 1.0)))
}

/// Full enhancement chain: veiling level, rough transmission, guided-filter
/// refinement with the image as guide, re-clamp, recovery.
pub fn gfa_enhance(img: &GrayImage, params: &DehazeParams) -> GrayImage {
    let a = estimate_atmospheric_light(img, params.a_fraction);
    let rough = rough_transmission(img, a, params);
    let refined = guided_filter(
        img,
        rough.map(),
        params.gf_radius,
        params.gf_eps,
        params.subsample_s,
    )
    .expect("guide and transmission share shape by construction");
    let t = TransmissionMap::new(refined, params.t_floor);
    recover(img, &t, a).expect("image and transmission share shape by construction")
}

/// Global linear stretch `(I - min) / (max - min)`; a constant image is
/// returned unchanged.
pub fn max_min_stretch(img: &GrayImage) -> GrayImage {
    let (lo, hi) = img.min_max();
    if hi > lo {
        img.map(|s| (s - lo) / (hi - lo))
    } else {
        img.clone()
    }
}
