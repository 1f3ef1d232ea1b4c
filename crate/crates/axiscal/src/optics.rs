//! Aspheric-surface geometry and the synthetic crosshair scene generator.
//!
//! The geometry half evaluates surface sag, normal aberration, and the
//! in-focus clear radius of an aspheric element under a fixed-focus camera.
//! The scene half renders ground-truthed crosshair images and degrades them
//! with the defocus model (Gaussian blur, transmission attenuation toward a
//! veiling level, sensor noise) so the enhancement and extraction chain can
//! be exercised end to end without hardware.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::GrayImage;

/// Errors from surface evaluation and scene configuration.
#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("sag undefined at h = {h} mm: radicand {radicand} is negative")]
    DomainError { h: f64, radicand: f64 },
    #[error("surface slope {slope} at h = {h} mm is not positive")]
    DegenerateSlope { h: f64, slope: f64 },
    #[error("normal aberration never reaches dof = {dof} mm (checked up to h = {h_checked} mm)")]
    NoCrossing { dof: f64, h_checked: f64 },
    #[error("bad specification: {0}")]
    BadSpec(String),
}

/// Rotationally symmetric aspheric surface
/// `z(h) = c h^2 / (1 + sqrt(1 - (1+k) c^2 h^2)) + sum A_2i h^(2i)`,
/// with curvature `c = 1/r0` and high-order terms starting at `A_4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsphericSurface {
    r0: f64,
    k: f64,
    /// High-order coefficients `[A_4, A_6, ...]` in mm^(1-2i).
    coeffs: Vec<f64>,
}

impl AsphericSurface {
    pub fn new(r0: f64, k: f64, coeffs: Vec<f64>) -> Result<Self, OpticsError> {
        if !(r0 > 0.0) {
            return Err(OpticsError::BadSpec(format!(
                "vertex radius must be positive, got {r0}"
            )));
        }
        Ok(Self { r0, k, coeffs })
    }

    /// Pure paraboloid: conic constant -1, no high-order terms.
    pub fn paraboloid(r0: f64) -> Self {
        Self::new(r0, -1.0, Vec::new()).expect("positive radius")
    }

    /// The seven benchmark surfaces, keyed `s1`..`s7`.
    pub fn presets() -> Vec<(&'static str, AsphericSurface)> {
        let mk = |r0, k, coeffs: &[f64]| AsphericSurface::new(r0, k, coeffs.to_vec()).unwrap();
        vec![
            ("s1", mk(18.2810, -1.0000, &[2.000e-6])),
            ("s2", mk(8.8182, -0.9992, &[86.822e-6, 63.760e-9])),
            ("s3", mk(13.5510, -0.6301, &[5.500e-6])),
            ("s4", mk(13.8590, -1.0000, &[])),
            ("s5", mk(10.9150, -2.2206, &[])),
            ("s6", mk(8.6310, -7.5380, &[])),
            ("s7", mk(31.3840, -1.9110, &[5.000e-6])),
        ]
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Surface height at radial distance `h` mm from the axis.
    pub fn sag(&self, h: f64) -> Result<f64, OpticsError> {
        let c = 1.0 / self.r0;
        let radicand = 1.0 - (1.0 + self.k) * c * c * h * h;
        if radicand < 0.0 {
            return Err(OpticsError::DomainError { h, radicand });
        }
        let mut z = c * h * h / (1.0 + radicand.sqrt());
        let h2 = h * h;
        let mut power = h2 * h2; // h^4 for A_4
        for &a in &self.coeffs {
            z += a * power;
            power *= h2;
        }
        Ok(z)
    }

    /// Analytic derivative dz/dh.
    pub fn slope(&self, h: f64) -> Result<f64, OpticsError> {
        let c = 1.0 / self.r0;
        let radicand = 1.0 - (1.0 + self.k) * c * c * h * h;
        if radicand < 0.0 {
            return Err(OpticsError::DomainError { h, radicand });
        }
        let mut dz = c * h / radicand.sqrt();
        let h2 = h * h;
        let mut power = h2 * h; // h^3 for A_4
        let mut exponent = 4.0;
        for &a in &self.coeffs {
            dz += exponent * a * power;
            power *= h2;
            exponent += 2.0;
        }
        Ok(dz)
    }

    /// Normal aberration: axial distance between the vertex center of
    /// curvature and the point where the surface normal at height `h` meets
    /// the axis, `z(h) + h / z'(h) - r0`; zero at the vertex by continuity.
    pub fn normal_aberration(&self, h: f64) -> Result<f64, OpticsError> {
        if h == 0.0 {
            return Ok(0.0);
        }
        let slope = self.slope(h)?;
        if slope <= 0.0 {
            return Err(OpticsError::DegenerateSlope { h, slope });
        }
        Ok(self.sag(h)? + h / slope - self.r0)
    }

    /// Radial height where the normal aberration first exceeds the system
    /// depth of field: the radius of the acceptably focused area.
    pub fn clear_radius(&self, system: &VisionSystem) -> Result<f64, OpticsError> {
        let dof = system.dof_mm;
        if !(dof > 0.0) {
            return Err(OpticsError::BadSpec(format!(
                "depth of field must be positive, got {dof}"
            )));
        }
        // Geometric scan for the first bracket; stop at the domain edge.
        let mut lo = 0.0f64;
        let mut hi = None;
        let mut h = 1e-3;
        let mut last_valid = 0.0f64;
        while h <= 1e4 {
            match self.normal_aberration(h) {
                Ok(d) if d.abs() >= dof => {
                    hi = Some(h);
                    break;
                }
                Ok(_) => {
                    lo = h;
                    last_valid = h;
                    h *= 1.5;
                }
                Err(_) => {
                    // Domain edge between lo and h: bisect toward it and see
                    // whether the aberration crosses dof before the edge.
                    let (mut a, mut b) = (lo, h);
                    for _ in 0..80 {
                        let mid = 0.5 * (a + b);
                        match self.normal_aberration(mid) {
                            Ok(d) => {
                                last_valid = mid;
                                if d.abs() >= dof {
                                    hi = Some(mid);
                                    break;
                                }
                                a = mid;
                            }
                            Err(_) => b = mid,
                        }
                    }
                    break;
                }
            }
        }
        let mut hi = hi.ok_or(OpticsError::NoCrossing {
            dof,
            h_checked: last_valid,
        })?;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            match self.normal_aberration(mid) {
                Ok(d) if d.abs() < dof => lo = mid,
                _ => hi = mid,
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Fixed-focus telecentric camera over the spinning element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisionSystem {
    /// Sensor pixel pitch in micrometers.
    pub pixel_pitch_um: f64,
    /// Optical magnification between object and sensor.
    pub magnification_k: f64,
    pub sensor_w: usize,
    pub sensor_h: usize,
    /// Depth of field in millimeters; a configuration input.
    pub dof_mm: f64,
}

impl VisionSystem {
    pub fn validated(self) -> Result<Self, OpticsError> {
        let ok = self.pixel_pitch_um > 0.0
            && self.magnification_k > 0.0
            && self.sensor_w > 0
            && self.sensor_h > 0
            && self.dof_mm > 0.0;
        if ok {
            Ok(self)
        } else {
            Err(OpticsError::BadSpec(format!("{self:?} has a non-positive field")))
        }
    }

    /// Object-space size of the imaged field, in millimeters.
    pub fn field_of_view_mm(&self) -> (f64, f64) {
        let scale = self.pixel_pitch_um / self.magnification_k / 1000.0;
        (self.sensor_w as f64 * scale, self.sensor_h as f64 * scale)
    }

    /// Object-space sampling: micrometers per image pixel.
    pub fn object_scale_um_per_px(&self) -> f64 {
        self.pixel_pitch_um / self.magnification_k
    }
}

impl Default for VisionSystem {
    fn default() -> Self {
        Self {
            pixel_pitch_um: 5.5,
            magnification_k: 4.0,
            sensor_w: 3296,
            sensor_h: 2472,
            dof_mm: 0.0275,
        }
    }
}

/// Geometry and luminance of a rendered crosshair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub image_w: usize,
    pub image_h: usize,
    /// Subpixel coordinates of the arm intersection.
    pub center: (f64, f64),
    /// Gaussian cross-section width of each arm, in pixels.
    pub line_sigma: f64,
    /// Luminance at the arm ridge.
    pub peak: f64,
    /// Base luminance away from the arms.
    pub background: f64,
}

impl SceneSpec {
    pub fn validated(self) -> Result<Self, OpticsError> {
        let (cx, cy) = self.center;
        if self.image_w == 0 || self.image_h == 0 {
            return Err(OpticsError::BadSpec("empty image".into()));
        }
        if !(cx >= 0.0 && cx < self.image_w as f64 && cy >= 0.0 && cy < self.image_h as f64) {
            return Err(OpticsError::BadSpec(format!(
                "center ({cx}, {cy}) outside {}x{}",
                self.image_w, self.image_h
            )));
        }
        if !(self.line_sigma > 0.0) {
            return Err(OpticsError::BadSpec("line_sigma must be positive".into()));
        }
        if !(0.0 <= self.background && self.background < self.peak && self.peak <= 1.0) {
            return Err(OpticsError::BadSpec(format!(
                "need 0 <= background < peak <= 1, got {} and {}",
                self.background, self.peak
            )));
        }
        Ok(self)
    }
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_w: 200,
            image_h: 200,
            center: (100.0, 100.0),
            line_sigma: 2.0,
            peak: 0.9,
            background: 0.1,
        }
    }
}

/// Exact ground truth recorded alongside a rendered scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub center: (f64, f64),
}

/// Degradation model: blur, transmission loss toward a veiling level, noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradeSpec {
    /// Transmission in (0, 1]; 1 keeps the scene unattenuated.
    pub t_value: f64,
    /// Veiling level in (0, 1].
    pub a_value: f64,
    /// Gaussian blur width in pixels; 0 disables blur.
    pub psf_sigma: f64,
    /// Additive Gaussian noise width; 0 disables noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DegradeSpec {
    pub fn validated(self) -> Result<Self, OpticsError> {
        let ok = self.t_value > 0.0
            && self.t_value <= 1.0
            && self.a_value > 0.0
            && self.a_value <= 1.0
            && self.psf_sigma >= 0.0
            && self.noise_sigma >= 0.0;
        if ok {
            Ok(self)
        } else {
            Err(OpticsError::BadSpec(format!("{self:?} out of range")))
        }
    }

    /// No-op degradation.
    pub fn none() -> Self {
        Self {
            t_value: 1.0,
            a_value: 1.0,
            psf_sigma: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    /// Default severe defocus: strong transmission loss with mild blur and
    /// sensor noise, the regime the dark-channel enhancement targets.
    pub fn default_severity() -> Self {
        Self {
            t_value: 0.22,
            a_value: 0.82,
            psf_sigma: 1.6,
            noise_sigma: 0.002,
            seed: 0,
        }
    }
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self::none()
    }
}

/// Renders the crosshair: background plus the pointwise maximum of the two
/// arms' Gaussian profiles, with the exact requested center as ground truth.
pub fn render_crosshair(spec: &SceneSpec) -> Result<(GrayImage, SceneTruth), OpticsError> {
    let spec = spec.validated()?;
    let (cx, cy) = spec.center;
    let inv_two_sigma_sq = 1.0 / (2.0 * spec.line_sigma * spec.line_sigma);
    let amplitude = spec.peak - spec.background;
    let img = GrayImage::from_fn(spec.image_w, spec.image_h, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let horizontal_arm = (-dy * dy * inv_two_sigma_sq).exp();
        let vertical_arm = (-dx * dx * inv_two_sigma_sq).exp();
        spec.background + amplitude * horizontal_arm.max(vertical_arm)
    })
    .expect("validated spec has nonzero dimensions");
    Ok((img, SceneTruth { center: spec.center }))
}

/// Separable Gaussian blur truncated at 3 sigma; border windows renormalize
/// over in-bounds taps. `sigma = 0` returns the input unchanged.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let (w, h) = (img.width(), img.height());

    // Horizontal pass.
    let mut mid = vec![0.0; w * h];
    mid.par_chunks_mut(w).enumerate().for_each(|(y, out_row)| {
        let row = img.row(y);
        for (x, slot) in out_row.iter_mut().enumerate() {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for xx in x0..=x1 {
                let t = taps[xx + radius - x];
                acc += t * row[xx];
                wsum += t;
            }
            *slot = acc / wsum;
        }
    });

    // Vertical pass.
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, out_row)| {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius).min(h - 1);
        for (x, slot) in out_row.iter_mut().enumerate() {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for yy in y0..=y1 {
                let t = taps[yy + radius - y];
                acc += t * mid[yy * w + x];
                wsum += t;
            }
            *slot = acc / wsum;
        }
    });
    GrayImage::from_samples(w, h, out).expect("blur preserves shape")
}

/// Applies the degradation chain: blur, `I = J t + A (1 - t)`, seeded noise,
/// clamp to `[0,1]`. Bit-reproducible for a fixed spec.
pub fn degrade(img: &GrayImage, spec: &DegradeSpec) -> GrayImage {
    let blurred = gaussian_blur(img, spec.psf_sigma);
    let mut hazed = blurred.map(|j| j * spec.t_value + spec.a_value * (1.0 - spec.t_value));
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
        for s in hazed.samples_mut() {
            *s += rng.sample(normal);
        }
    }
    hazed.clamped()
}

/// A generated scene: the sharp render, its degraded counterpart, and truth.
#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub sharp: GrayImage,
    pub degraded: GrayImage,
    pub truth: SceneTruth,
}

/// Generates `count` scenes with centers jittered uniformly over the central
/// half of the frame; each scene gets its own noise stream drawn from the
/// master seed. Deterministic for a fixed `(count, seed, base, severity)`.
pub fn generate_scenes(
    count: usize,
    seed: u64,
    base: &SceneSpec,
    severity: &DegradeSpec,
) -> Result<Vec<SimulatedScene>, OpticsError> {
    base.validated()?;
    severity.validated()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::with_capacity(count);
    for _ in 0..count {
        let (w, h) = (base.image_w as f64, base.image_h as f64);
        let cx = w / 2.0 + rng.random_range(-w / 4.0..w / 4.0);
        let cy = h / 2.0 + rng.random_range(-h / 4.0..h / 4.0);
        let scene_seed = rng.random::<u64>();
        let spec = SceneSpec {
            center: (cx, cy),
            ..*base
        };
        let (sharp, truth) = render_crosshair(&spec)?;
        let degraded = degrade(
            &sharp,
            &DegradeSpec {
                seed: scene_seed,
                ..*severity
            },
        );
        scenes.push(SimulatedScene {
            sharp,
            degraded,
            truth,
        });
    }
    Ok(scenes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::focus::smd2;

    fn surface2() -> AsphericSurface {
        AsphericSurface::new(8.8182, -0.9992, vec![86.822e-6, 63.760e-9]).unwrap()
    }

    #[test]
    fn sag_is_zero_at_the_vertex() {
        for (_, s) in AsphericSurface::presets() {
            assert_eq!(s.sag(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn paraboloid_sag_collapses_to_h_squared_over_2r() {
        let s = AsphericSurface::paraboloid(18.281);
        let z = s.sag(1.0).unwrap();
        assert_relative_eq!(z, 1.0 / (2.0 * 18.281), epsilon = 1e-15);
        assert!((z - 0.0273508).abs() < 1e-7);
    }

    #[test]
    fn sag_matches_term_by_term_oracle_on_preset_two() {
        let s = surface2();
        for h in [0.25f64, 0.5, 1.0, 2.0] {
            let c: f64 = 1.0 / 8.8182;
            let conic = c * h.powi(2) / (1.0 + (1.0 - (1.0 + -0.9992) * c.powi(2) * h.powi(2)).sqrt());
            let oracle = conic + 86.822e-6 * h.powi(4) + 63.760e-9 * h.powi(6);
            assert_relative_eq!(s.sag(h).unwrap(), oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn sag_rejects_out_of_domain_heights() {
        let s = AsphericSurface::new(1.0, 1.0, vec![]).unwrap();
        assert!(matches!(
            s.sag(1.0),
            Err(OpticsError::DomainError { .. })
        ));
    }

    #[test]
    fn aberration_vanishes_at_the_vertex() {
        assert_eq!(surface2().normal_aberration(0.0).unwrap(), 0.0);
        assert!(surface2().normal_aberration(1e-6).unwrap().abs() < 1e-9);
    }

    #[test]
    fn paraboloid_aberration_has_the_closed_form() {
        let s = AsphericSurface::paraboloid(18.281);
        let d = s.normal_aberration(1.0027).unwrap();
        assert_relative_eq!(d, 1.0027f64.powi(2) / (2.0 * 18.281), max_relative = 1e-12);
        assert!((d - 0.0275).abs() < 1e-5, "d = {d}");
    }

    #[test]
    fn aberration_matches_finite_difference_slope_oracle() {
        let s = surface2();
        let h = 0.5;
        let e = 1e-6;
        let slope = (s.sag(h + e).unwrap() - s.sag(h - e).unwrap()) / (2.0 * e);
        let oracle = s.sag(h).unwrap() + h / slope - 8.8182;
        assert!((s.normal_aberration(h).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn negative_slope_is_reported() {
        let s = AsphericSurface::new(10.0, -1.0, vec![-1.0]).unwrap();
        assert!(matches!(
            s.normal_aberration(0.5),
            Err(OpticsError::DegenerateSlope { .. })
        ));
    }

    #[test]
    fn clear_radius_of_the_experimental_paraboloid() {
        let s = AsphericSurface::paraboloid(18.281);
        let system = VisionSystem::default();
        let h = s.clear_radius(&system).unwrap();
        let closed_form = (2.0f64 * 18.281 * 0.0275).sqrt();
        assert!((h - closed_form).abs() < 1e-6, "h = {h}");
        assert!((h - 1.0027).abs() < 1e-3, "h = {h}");
    }

    #[test]
    fn clear_radius_shrinks_with_vanishing_dof() {
        let s = AsphericSurface::paraboloid(18.281);
        let system = VisionSystem {
            dof_mm: 1e-12,
            ..Default::default()
        };
        assert!(s.clear_radius(&system).unwrap() < 1e-4);
    }

    #[test]
    fn clear_radius_grows_with_dof() {
        let s = surface2();
        let base = VisionSystem::default();
        let doubled = VisionSystem {
            dof_mm: base.dof_mm * 2.0,
            ..base
        };
        assert!(s.clear_radius(&doubled).unwrap() > s.clear_radius(&base).unwrap());
    }

    #[test]
    fn sphere_never_crosses() {
        // A sphere's normals all pass through its center: aberration is
        // identically zero, so no crossing exists.
        let s = AsphericSurface::new(5.0, 0.0, vec![]).unwrap();
        assert!(matches!(
            s.clear_radius(&VisionSystem::default()),
            Err(OpticsError::NoCrossing { .. })
        ));
    }

    #[test]
    fn field_of_view_of_the_default_system() {
        let (w, h) = VisionSystem::default().field_of_view_mm();
        assert!((w - 4.532).abs() < 1e-3);
        assert!((h - 3.399).abs() < 1e-3);
    }

    #[test]
    fn field_of_view_at_unit_magnification_is_the_sensor_size() {
        let system = VisionSystem {
            magnification_k: 1.0,
            ..Default::default()
        };
        let (w, h) = system.field_of_view_mm();
        assert_relative_eq!(w, 3296.0 * 5.5 / 1000.0, epsilon = 1e-12);
        assert_relative_eq!(h, 2472.0 * 5.5 / 1000.0, epsilon = 1e-12);
    }

    #[test]
    fn field_of_view_scales_linearly_with_pitch() {
        let base = VisionSystem::default();
        let halved = VisionSystem {
            pixel_pitch_um: base.pixel_pitch_um / 2.0,
            ..base
        };
        let (w0, h0) = base.field_of_view_mm();
        let (w1, h1) = halved.field_of_view_mm();
        assert_relative_eq!(w1, w0 / 2.0, epsilon = 1e-12);
        assert_relative_eq!(h1, h0 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn object_scale_matches_pitch_over_magnification() {
        assert_relative_eq!(
            VisionSystem::default().object_scale_um_per_px(),
            1.375,
            epsilon = 1e-12
        );
    }

    #[test]
    fn crosshair_centered_at_midpoint_is_mirror_symmetric() {
        let spec = SceneSpec {
            image_w: 41,
            image_h: 41,
            center: (20.0, 20.0),
            ..Default::default()
        };
        let (img, _) = render_crosshair(&spec).unwrap();
        for y in 0..41 {
            for x in 0..41 {
                assert!((img.get(x, y) - img.get(40 - x, y)).abs() < 1e-12);
                assert!((img.get(x, y) - img.get(x, 40 - y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crosshair_ridge_pixels_lie_on_the_arms() {
        // The arms are ridges, so the image maximum is a plateau along them,
        // not a point. Check the brightest value against the closed form and
        // confine everything near it to the two arm strips.
        let spec = SceneSpec {
            center: (83.25, 121.75),
            ..Default::default()
        };
        let (img, truth) = render_crosshair(&spec).unwrap();
        assert_eq!(truth.center, (83.25, 121.75));
        // Nearest sample row and column both sit 0.25 px off the ridge.
        let expected_max = 0.1 + 0.8 * (-0.25f64 * 0.25 / 8.0).exp();
        let (_, actual_max) = img.min_max();
        assert!((actual_max - expected_max).abs() < 1e-12);
        for y in 0..img.height() {
            for x in 0..img.width() {
                if img.get(x, y) > actual_max - 1e-6 {
                    let on_vertical = (x as f64 - 83.25).abs() <= 0.5;
                    let on_horizontal = (y as f64 - 121.75).abs() <= 0.5;
                    assert!(on_vertical || on_horizontal, "bright pixel off-arm at ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn invalid_scene_specs_are_rejected() {
        let outside = SceneSpec {
            center: (250.0, 100.0),
            ..Default::default()
        };
        assert!(outside.validated().is_err());
        let inverted = SceneSpec {
            peak: 0.1,
            background: 0.9,
            ..Default::default()
        };
        assert!(inverted.validated().is_err());
    }

    #[test]
    fn degrade_with_no_op_spec_is_identity() {
        let (img, _) = render_crosshair(&SceneSpec::default()).unwrap();
        assert_eq!(degrade(&img, &DegradeSpec::none()), img);
    }

    #[test]
    fn degrade_is_bit_reproducible() {
        let (img, _) = render_crosshair(&SceneSpec::default()).unwrap();
        let spec = DegradeSpec {
            seed: 1234,
            ..DegradeSpec::default_severity()
        };
        assert_eq!(degrade(&img, &spec), degrade(&img, &spec));
    }

    #[test]
    fn attenuation_scales_sharpness_quadratically() {
        // With blur and noise off, I = J t + A (1 - t) scales every local
        // difference by t, and the product measure by t^2.
        let (img, _) = render_crosshair(&SceneSpec::default()).unwrap();
        let base = smd2(&img).unwrap();
        let spec = DegradeSpec { t_value: 0.5, ..DegradeSpec::none() };
        let out = smd2(&degrade(&img, &spec)).unwrap();
        assert_relative_eq!(out, base * 0.25, max_relative = 1e-9);
    }

    #[test]
    fn blur_reduces_sharpness_of_texture() {
        // A crosshair is the wrong probe here: its arms have gradients in one
        // axis only, so blur can raise the product measure by spreading the
        // corners. A checkerboard has both gradients everywhere.
        let img = GrayImage::from_fn(40, 40, |x, y| {
            if (x / 2 + y / 2) % 2 == 0 { 0.8 } else { 0.2 }
        })
        .unwrap();
        let base = smd2(&img).unwrap();
        let spec = DegradeSpec { psf_sigma: 1.0, ..DegradeSpec::none() };
        assert!(smd2(&degrade(&img, &spec)).unwrap() < base);
    }

    #[test]
    fn degrade_then_recover_round_trips() {
        use crate::dehaze::{recover, TransmissionMap};
        let (img, _) = render_crosshair(&SceneSpec::default()).unwrap();
        let (t, a) = (0.4, 0.8);
        let spec = DegradeSpec {
            t_value: t,
            a_value: a,
            ..DegradeSpec::none()
        };
        let hazed = degrade(&img, &spec);
        let tmap = TransmissionMap::new(
            GrayImage::filled(img.width(), img.height(), t).unwrap(),
            0.1,
        );
        let back = recover(&hazed, &tmap, a).unwrap();
        let worst = back
            .samples()
            .iter()
            .zip(img.samples())
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "max abs diff {worst}");
    }

    #[test]
    fn blur_preserves_dyadic_constants() {
        let img = GrayImage::filled(12, 9, 0.5).unwrap();
        assert_eq!(gaussian_blur(&img, 1.5), img);
    }

    #[test]
    fn generated_scenes_are_deterministic_and_in_bounds() {
        let base = SceneSpec::default();
        let severity = DegradeSpec::default_severity();
        let a = generate_scenes(5, 42, &base, &severity).unwrap();
        let b = generate_scenes(5, 42, &base, &severity).unwrap();
        assert_eq!(a.len(), 5);
        for (sa, sb) in a.iter().zip(&b) {
            assert_eq!(sa.sharp, sb.sharp);
            assert_eq!(sa.degraded, sb.degraded);
            assert_eq!(sa.truth, sb.truth);
            let (cx, cy) = sa.truth.center;
            assert!((50.0..150.0).contains(&cx) && (50.0..150.0).contains(&cy));
        }
        let c = generate_scenes(5, 43, &base, &severity).unwrap();
        assert_ne!(
            a[0].truth.center, c[0].truth.center,
            "different seeds give different centers"
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// k = -1 with no high-order terms reduces the aberration to the
            /// parabola's closed form.
            #[test]
            fn paraboloid_identity(r0 in 1.0f64..100.0, h in 0.0f64..3.0) {
                let s = AsphericSurface::paraboloid(r0);
                let d = s.normal_aberration(h).unwrap();
                let expected = h * h / (2.0 * r0);
                prop_assert!((d - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }

            /// Whole-pixel translation of the center translates the render.
            #[test]
            fn crosshair_translation_equivariance(
                dx in 0usize..24, dy in 0usize..24,
                qx in 0u8..4, qy in 0u8..4,
            ) {
                let base = (30.0 + f64::from(qx) * 0.25, 30.0 + f64::from(qy) * 0.25);
                let mk = |(cx, cy)| render_crosshair(&SceneSpec {
                    image_w: 90,
                    image_h: 90,
                    center: (cx, cy),
                    ..Default::default()
                }).unwrap().0;
                let a = mk(base);
                let b = mk((base.0 + dx as f64, base.1 + dy as f64));
                for y in dy..90 {
                    for x in dx..90 {
                        prop_assert_eq!(a.get(x - dx, y - dy), b.get(x, y));
                    }
                }
            }

            #[test]
            fn degraded_samples_stay_in_range(
                t in 1u8..=100, a in 1u8..=100, sigma in 0u8..=30, noise in 0u8..=20, seed: u64,
            ) {
                let spec = DegradeSpec {
                    t_value: f64::from(t) / 100.0,
                    a_value: f64::from(a) / 100.0,
                    psf_sigma: f64::from(sigma) / 10.0,
                    noise_sigma: f64::from(noise) / 100.0,
                    seed,
                };
                let (img, _) = render_crosshair(&SceneSpec {
                    image_w: 32, image_h: 32, center: (16.0, 16.0), ..Default::default()
                }).unwrap();
                let out = degrade(&img, &spec);
                let (lo, hi) = out.min_max();
                prop_assert!(lo >= 0.0 && hi <= 1.0);
            }
        }
    }
}
