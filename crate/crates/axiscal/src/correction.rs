//! Eccentricity measurement and correction over a simulated spin rig.
//!
//! A crosshair fixed to the optical axis traces a circle about the spin axis
//! when the element is eccentric. The loop observes the center at evenly
//! spaced spin angles, fits a circle, estimates the eccentricity vector, and
//! commands compensating moves until the fitted radius falls below the
//! termination threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optics::{degrade, render_crosshair, DegradeSpec, OpticsError, SceneSpec};
use crate::pipeline::{extract_center, PipelineError};
use crate::raster::{Roi, ThresholdParams};

/// Errors from circle fitting and the correction loop.
#[derive(Debug, Error)]
pub enum CorrectionError {
    #[error("circle fit needs at least 3 points, got {got}")]
    TooFewPoints { got: usize },
    #[error("circle fit is degenerate: points are collinear or coincident")]
    Degenerate,
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Scene(#[from] OpticsError),
    #[error(transparent)]
    Extraction(#[from] PipelineError),
}

/// Algebraic least-squares circle fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleFitResult {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    /// Root-mean-square radial deviation of the points from the fit.
    pub rms_residual: f64,
}

/// Fits a circle by minimizing the algebraic distance: with the data
/// centered on its centroid, solve the 2x2 normal equations for the center
/// and recover the radius from the second moments. Linear, deterministic,
/// and needs no initial guess.
pub fn fit_circle(points: &[(f64, f64)]) -> Result<CircleFitResult, CorrectionError> {
    let n = points.len();
    if n < 3 {
        return Err(CorrectionError::TooFewPoints { got: n });
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    let (mut suuu, mut svvv, mut suvv, mut svuu) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let u = x - mean_x;
        let v = y - mean_y;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }
    let det = suu * svv - suv * suv;
    // Collinear or coincident points flatten the scatter matrix.
    if det.abs() <= 1e-12 * (suu + svv) * (suu + svv) || suu + svv == 0.0 {
        return Err(CorrectionError::Degenerate);
    }
    let rhs_u = 0.5 * (suuu + suvv);
    let rhs_v = 0.5 * (svvv + svuu);
    let uc = (rhs_u * svv - rhs_v * suv) / det;
    let vc = (rhs_v * suu - rhs_u * suv) / det;
    let r = (uc * uc + vc * vc + (suu + svv) / nf).sqrt();
    let (cx, cy) = (mean_x + uc, mean_y + vc);
    let rms = (points
        .iter()
        .map(|&(x, y)| {
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - r;
            d * d
        })
        .sum::<f64>()
        / nf)
        .sqrt();
    Ok(CircleFitResult {
        cx,
        cy,
        r,
        rms_residual: rms,
    })
}

/// Construction parameters for a rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    /// True eccentricity of the optical axis from the spin axis, micrometers.
    pub ecc_um: (f64, f64),
    /// Object-space micrometers per image pixel.
    pub scale_um_per_px: f64,
    /// Gaussian sigma of point-mode center observations, pixels.
    pub obs_noise_px: f64,
    /// Gaussian sigma of each actuation move component, micrometers.
    pub act_noise_um: f64,
    /// Pixel position the spin axis projects to.
    pub spin_axis_px: (f64, f64),
    pub seed: u64,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            ecc_um: (0.0, 0.0),
            scale_um_per_px: 1.375,
            obs_noise_px: 0.0,
            act_noise_um: 0.0,
            spin_axis_px: (128.0, 128.0),
            seed: 0,
        }
    }
}

/// The virtual rig: true eccentricity, current spin angle, noise levels, and
/// the seeded stream behind every stochastic draw it makes.
#[derive(Debug, Clone)]
pub struct RigState {
    pub ecc_um: (f64, f64),
    pub spin_deg: f64,
    pub scale_um_per_px: f64,
    pub obs_noise_px: f64,
    pub act_noise_um: f64,
    pub spin_axis_px: (f64, f64),
    rng: ChaCha8Rng,
}

/// How an observation turns rig geometry into a measured center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ObservationMode {
    /// Geometric center plus observation noise; no imagery involved.
    Point,
    /// Render the crosshair at the true center, degrade it, and run the
    /// thresholded extraction, measuring what the vision chain would see.
    FullImage(FullImageParams),
}

/// Scene and extraction settings for full-image observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullImageParams {
    /// Scene template; its center field is replaced per observation.
    pub scene: SceneSpec,
    /// Degradation applied before extraction; the seed field is replaced by
    /// a fresh draw from the rig stream per observation.
    pub severity: DegradeSpec,
    pub threshold: ThresholdParams,
    pub se_size: usize,
}

/// A thick stroke under a much wider threshold window keeps the junction in
/// the mask; see `extract_center` for the constraint.
impl Default for FullImageParams {
    fn default() -> Self {
        Self {
            scene: SceneSpec {
                image_w: 256,
                image_h: 256,
                center: (128.0, 128.0),
                line_sigma: 3.0,
                ..Default::default()
            },
            severity: DegradeSpec::none(),
            threshold: ThresholdParams::new(115, 0.0).expect("valid window"),
            se_size: 3,
        }
    }
}

impl RigState {
    pub fn new(cfg: RigConfig) -> Result<Self, CorrectionError> {
        if !(cfg.scale_um_per_px > 0.0) {
            return Err(CorrectionError::BadConfig(format!(
                "scale must be positive, got {}",
                cfg.scale_um_per_px
            )));
        }
        if cfg.obs_noise_px < 0.0 || cfg.act_noise_um < 0.0 {
            return Err(CorrectionError::BadConfig("noise sigma negative".into()));
        }
        Ok(Self {
            ecc_um: cfg.ecc_um,
            spin_deg: 0.0,
            scale_um_per_px: cfg.scale_um_per_px,
            obs_noise_px: cfg.obs_noise_px,
            act_noise_um: cfg.act_noise_um,
            spin_axis_px: cfg.spin_axis_px,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    /// Where the crosshair center truly sits at spin angle `angle_deg`.
    pub fn true_center_px(&self, angle_deg: f64) -> (f64, f64) {
        let phi = angle_deg.to_radians();
        let (ex, ey) = (
            self.ecc_um.0 / self.scale_um_per_px,
            self.ecc_um.1 / self.scale_um_per_px,
        );
        (
            self.spin_axis_px.0 + ex * phi.cos() - ey * phi.sin(),
            self.spin_axis_px.1 + ex * phi.sin() + ey * phi.cos(),
        )
    }

    /// Measures the crosshair center at `angle_deg`, also setting the rig's
    /// current spin angle.
    pub fn observe_center(
        &mut self,
        angle_deg: f64,
        mode: &ObservationMode,
    ) -> Result<(f64, f64), CorrectionError> {
        self.spin_deg = angle_deg;
        let (tx, ty) = self.true_center_px(angle_deg);
        match mode {
            ObservationMode::Point => {
                if self.obs_noise_px == 0.0 {
                    return Ok((tx, ty));
                }
                let normal = Normal::new(0.0, self.obs_noise_px).expect("finite sigma");
                Ok((tx + self.rng.sample(normal), ty + self.rng.sample(normal)))
            }
            ObservationMode::FullImage(params) => {
                let spec = SceneSpec {
                    center: (tx, ty),
                    ..params.scene
                };
                let (sharp, _) = render_crosshair(&spec)?;
                let severity = DegradeSpec {
                    seed: self.rng.random(),
                    ..params.severity
                };
                let img = degrade(&sharp, &severity);
                let frame = Roi {
                    x0: 0,
                    y0: 0,
                    width: img.width(),
                    height: img.height(),
                };
                Ok(extract_center(
                    &img,
                    &frame,
                    &params.threshold,
                    params.se_size,
                )?)
            }
        }
    }

    /// Applies a commanded element-frame move with actuation noise.
    fn apply_move_um(&mut self, delta_um: (f64, f64)) {
        self.ecc_um.0 += delta_um.0;
        self.ecc_um.1 += delta_um.1;
        if self.act_noise_um > 0.0 {
            let normal = Normal::new(0.0, self.act_noise_um).expect("finite sigma");
            self.ecc_um.0 += self.rng.sample(normal);
            self.ecc_um.1 += self.rng.sample(normal);
        }
    }
}

/// Correction-loop settings. The defaults measure 12 angles of 30 degrees,
/// terminate below 10 micrometers, and give up after 10 iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrectionConfig {
    pub steps_per_rev: usize,
    pub step_deg: f64,
    pub threshold_um: f64,
    pub max_iter: usize,
    pub mode: ObservationMode,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            steps_per_rev: 12,
            step_deg: 30.0,
            threshold_um: 10.0,
            max_iter: 10,
            mode: ObservationMode::Point,
        }
    }
}

impl CorrectionConfig {
    pub fn validated(self) -> Result<Self, CorrectionError> {
        if self.steps_per_rev < 3 {
            return Err(CorrectionError::BadConfig(format!(
                "need at least 3 observation angles, got {}",
                self.steps_per_rev
            )));
        }
        let turn = self.steps_per_rev as f64 * self.step_deg;
        if (turn - 360.0).abs() > 1e-9 {
            return Err(CorrectionError::BadConfig(format!(
                "{} steps of {} degrees span {turn}, not one revolution",
                self.steps_per_rev, self.step_deg
            )));
        }
        if !(self.threshold_um > 0.0) {
            return Err(CorrectionError::BadConfig(
                "termination threshold must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(CorrectionError::BadConfig("max_iter must be positive".into()));
        }
        Ok(self)
    }
}

/// One measurement pass of the loop: the fit, the eccentricity estimate it
/// implies, and the move commanded in response ((0, 0) when terminating).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub r_px: f64,
    pub center_px: (f64, f64),
    pub offset_um: (f64, f64),
    pub est_ecc_um: f64,
}

/// Full history of one correction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionLog {
    pub records: Vec<IterationRecord>,
    /// True when the loop saw the fitted radius drop below threshold.
    pub terminated: bool,
}

impl CorrectionLog {
    /// Measurement passes performed.
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// Corrective moves commanded (terminal confirmation passes move nothing).
    pub fn moves(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.offset_um != (0.0, 0.0))
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,R_px,offset_x_um,offset_y_um,residual_um\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                r.iteration, r.r_px, r.offset_um.0, r.offset_um.1, r.est_ecc_um
            ));
        }
        out
    }
}

/// Runs measurement passes until the fitted circle radius, converted to
/// micrometers, drops below the threshold or `max_iter` passes elapse.
///
/// Each pass observes `steps_per_rev` angles, fits the circle, and estimates
/// the eccentricity vector as the mean of the back-rotated point offsets
/// `R(-phi_k) (p_k - center)`; over a full revolution that average is exactly
/// independent of center-estimate error. The commanded move is the negated
/// estimate (unit gain).
pub fn correction_loop(
    rig: &mut RigState,
    cfg: &CorrectionConfig,
) -> Result<CorrectionLog, CorrectionError> {
    let cfg = cfg.clone().validated()?;
    let mut records = Vec::new();
    let mut terminated = false;
    for iteration in 1..=cfg.max_iter {
        let mut points = Vec::with_capacity(cfg.steps_per_rev);
        for k in 0..cfg.steps_per_rev {
            let angle = k as f64 * cfg.step_deg;
            points.push(rig.observe_center(angle, &cfg.mode)?);
        }
        let fit = match fit_circle(&points) {
            Ok(fit) => fit,
            // Near convergence the observations can collapse onto one or two
            // spots (exact move cancellation, or extraction quantization); a
            // spread already below threshold is a terminal point trace, not
            // a fit failure.
            Err(CorrectionError::Degenerate) => {
                let nf = points.len() as f64;
                let cx = points.iter().map(|p| p.0).sum::<f64>() / nf;
                let cy = points.iter().map(|p| p.1).sum::<f64>() / nf;
                let spread = points
                    .iter()
                    .map(|&(x, y)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt())
                    .fold(0.0, f64::max);
                if spread * rig.scale_um_per_px >= cfg.threshold_um {
                    return Err(CorrectionError::Degenerate);
                }
                CircleFitResult {
                    cx,
                    cy,
                    r: spread,
                    rms_residual: 0.0,
                }
            }
            Err(e) => return Err(e),
        };
        let est_ecc_um = fit.r * rig.scale_um_per_px;

        if est_ecc_um < cfg.threshold_um {
            records.push(IterationRecord {
                iteration,
                r_px: fit.r,
                center_px: (fit.cx, fit.cy),
                offset_um: (0.0, 0.0),
                est_ecc_um,
            });
            terminated = true;
            break;
        }

        let nf = cfg.steps_per_rev as f64;
        let (mut ex, mut ey) = (0.0, 0.0);
        for (k, &(px, py)) in points.iter().enumerate() {
            let phi = (k as f64 * cfg.step_deg).to_radians();
            let (dx, dy) = (px - fit.cx, py - fit.cy);
            ex += dx * phi.cos() + dy * phi.sin();
            ey += -dx * phi.sin() + dy * phi.cos();
        }
        let est_vec_um = (
            ex / nf * rig.scale_um_per_px,
            ey / nf * rig.scale_um_per_px,
        );
        let offset_um = (-est_vec_um.0, -est_vec_um.1);
        rig.apply_move_um(offset_um);
        records.push(IterationRecord {
            iteration,
            r_px: fit.r,
            center_px: (fit.cx, fit.cy),
            offset_um,
            est_ecc_um,
        });
    }
    Ok(CorrectionLog {
        records,
        terminated,
    })
}
