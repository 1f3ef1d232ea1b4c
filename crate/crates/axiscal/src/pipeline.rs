//! End-to-end orchestration: startup ROI and focus search, the adaptive
//! enhancement dispatcher, center extraction, and the benchmark harness.

use std::sync::mpsc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dehaze::{gfa_enhance, max_min_stretch, DehazeError, DehazeParams};
use crate::focus::{afa_best_focus, bdma, smd2, BlockSearchParams, FocusError, FocusStack};
use crate::mdcnet::{self, MdcError, MdcNet};
use crate::raster::{
    adaptive_gaussian_threshold, erode, largest_inscribed_circle, GrayImage, RasterError, Roi,
    ThresholdParams,
};

/// Errors from orchestration-level operations.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Focus(#[from] FocusError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Dehaze(#[from] DehazeError),
    #[error(transparent)]
    Net(#[from] MdcError),
    #[error("the network path was selected but no weights are loaded")]
    MissingWeights,
    #[error("roi is {roi_w}x{roi_h} but the image is {img_w}x{img_h}")]
    RoiMismatch {
        roi_w: usize,
        roi_h: usize,
        img_w: usize,
        img_h: usize,
    },
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// System startup: block search locates the crosshair ROI on the coarse
/// focus slice, then the focus search scores that ROI across the stack.
/// Returns the chosen ROI and the sharpest slice index.
pub fn system_init(
    stack: &FocusStack,
    params: &BlockSearchParams,
) -> Result<(Roi, usize), PipelineError> {
    let coarse = &stack.images()[stack.center_index()];
    let roi = bdma(coarse, params)?.head().0;
    let best = afa_best_focus(stack, &roi)?;
    Ok((roi, best))
}

/// `system_init` with the two phases on separate threads: the block search
/// runs on its own thread and hands its ROI over a channel; the focus search
/// consumes it as soon as it is ready. Results equal the sequential path
/// exactly, as both phases are pure over shared read-only data.
pub fn system_init_concurrent(
    stack: &FocusStack,
    params: &BlockSearchParams,
) -> Result<(Roi, usize), PipelineError> {
    if stack.is_empty() {
        return Err(FocusError::EmptyStack.into());
    }
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        scope.spawn(move || {
            let coarse = &stack.images()[stack.center_index()];
            let _ = tx.send(bdma(coarse, params));
        });
        let roi = rx.recv().expect("block-search thread always sends")?.head().0;
        let best = afa_best_focus(stack, &roi)?;
        Ok((roi, best))
    })
}

/// Which branch the dispatcher took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnhancePath {
    Direct,
    MdcNet,
    Gfa,
}

impl EnhancePath {
    pub fn label(self) -> &'static str {
        match self {
            EnhancePath::Direct => "direct",
            EnhancePath::MdcNet => "mdcnet",
            EnhancePath::Gfa => "gfa",
        }
    }
}

/// Dispatcher settings: the two sharpness thresholds and the resources each
/// enhancement path needs.
#[derive(Debug, Clone)]
pub struct AeaConfig {
    pub thr_direct: f64,
    pub thr_mdc: f64,
    pub dehaze_params: DehazeParams,
    pub weights: Option<MdcNet>,
    pub b_const: f64,
}

impl Default for AeaConfig {
    fn default() -> Self {
        Self {
            thr_direct: 0.5,
            thr_mdc: 0.1,
            dehaze_params: DehazeParams::default(),
            weights: None,
            b_const: 1.0,
        }
    }
}

impl AeaConfig {
    pub fn validated(self) -> Result<Self, PipelineError> {
        if !(0.0 < self.thr_mdc && self.thr_mdc < self.thr_direct) {
            return Err(PipelineError::BadConfig(format!(
                "need 0 < thr_mdc < thr_direct, got {} and {}",
                self.thr_mdc, self.thr_direct
            )));
        }
        Ok(self)
    }
}

/// Pure routing rule: sharp enough passes through untouched, moderate blur
/// goes to the network, heavy blur goes to the dark-channel enhancer. Both
/// comparisons are strict.
pub fn route_for_smd2(value: f64, cfg: &AeaConfig) -> EnhancePath {
    if value > cfg.thr_direct {
        EnhancePath::Direct
    } else if value > cfg.thr_mdc {
        EnhancePath::MdcNet
    } else {
        EnhancePath::Gfa
    }
}

/// Scores the image and routes it to the corresponding enhancement.
pub fn aea_dispatch(
    roi_img: &GrayImage,
    cfg: &AeaConfig,
) -> Result<(GrayImage, EnhancePath), PipelineError> {
    let value = smd2(roi_img)?;
    let path = route_for_smd2(value, cfg);
    let enhanced = match path {
        EnhancePath::Direct => roi_img.clone(),
        EnhancePath::MdcNet => {
            let net = cfg.weights.as_ref().ok_or(PipelineError::MissingWeights)?;
            mdcnet::enhance(net, roi_img, cfg.b_const)?
        }
        EnhancePath::Gfa => gfa_enhance(roi_img, &cfg.dehaze_params),
    };
    Ok((enhanced, path))
}

/// Thresholds the ROI image, erodes speckle, and takes the center of the
/// largest inscribed circle of the dominant component, which for a crosshair
/// mask is the arm intersection. Returns full-frame coordinates by adding
/// the ROI origin.
///
/// The threshold window must be much wider than the crosshair stroke,
/// otherwise the local mean near the intersection rises above the stroke
/// luminance and the junction drops out of the mask.
pub fn extract_center(
    roi_img: &GrayImage,
    roi: &Roi,
    thr: &ThresholdParams,
    se_size: usize,
) -> Result<(f64, f64), PipelineError> {
    if (roi.width, roi.height) != (roi_img.width(), roi_img.height()) {
        return Err(PipelineError::RoiMismatch {
            roi_w: roi.width,
            roi_h: roi.height,
            img_w: roi_img.width(),
            img_h: roi_img.height(),
        });
    }
    let mask = adaptive_gaussian_threshold(roi_img, thr)?;
    let eroded = erode(&mask, se_size);
    let circle = largest_inscribed_circle(&eroded)?;
    Ok((roi.x0 as f64 + circle.cx, roi.y0 as f64 + circle.cy))
}

/// An enhancement method under benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchMethod {
    MaxMin,
    Gfa,
    FastGfa,
    MdcNet,
}

impl BenchMethod {
    pub fn label(self) -> &'static str {
        match self {
            BenchMethod::MaxMin => "maxmin",
            BenchMethod::Gfa => "gfa",
            BenchMethod::FastGfa => "fast-gfa",
            BenchMethod::MdcNet => "mdcnet",
        }
    }
}

/// One benchmark cell: a method applied to one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub scale_px: usize,
    pub smd2_before: f64,
    pub smd2_after: f64,
    pub wall_ms: f64,
}

/// Benchmark settings; `repetitions` timed runs follow one discarded warm-up
/// and the median is reported.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dehaze_params: DehazeParams,
    pub weights: Option<MdcNet>,
    pub b_const: f64,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dehaze_params: DehazeParams::default(),
            weights: None,
            b_const: 1.0,
            repetitions: 5,
        }
    }
}

/// Times each method on each image with a monotonic clock: one warm-up run
/// is discarded, the median of the timed repetitions is reported, and the
/// sharpness score is recorded before and after.
pub fn bench_report(
    corpus: &[GrayImage],
    methods: &[BenchMethod],
    cfg: &BenchConfig,
) -> Result<Vec<BenchRow>, PipelineError> {
    if cfg.repetitions == 0 {
        return Err(PipelineError::BadConfig("repetitions must be positive".into()));
    }
    let fast_params = DehazeParams {
        subsample_s: 4,
        ..cfg.dehaze_params
    };
    let mut rows = Vec::new();
    for img in corpus {
        let before = smd2(img)?;
        for &method in methods {
            let run = |input: &GrayImage| -> Result<GrayImage, PipelineError> {
                Ok(match method {
                    BenchMethod::MaxMin => max_min_stretch(input),
                    BenchMethod::Gfa => gfa_enhance(input, &cfg.dehaze_params),
                    BenchMethod::FastGfa => gfa_enhance(input, &fast_params),
                    BenchMethod::MdcNet => {
                        let net = cfg.weights.as_ref().ok_or(PipelineError::MissingWeights)?;
                        mdcnet::enhance(net, input, cfg.b_const)?
                    }
                })
            };
            let output = run(img)?; // warm-up, result reused for scoring
            let mut times_ms: Vec<f64> = Vec::with_capacity(cfg.repetitions);
            for _ in 0..cfg.repetitions {
                let start = Instant::now();
                std::hint::black_box(run(std::hint::black_box(img))?);
                times_ms.push(start.elapsed().as_secs_f64() * 1e3);
            }
            times_ms.sort_by(f64::total_cmp);
            rows.push(BenchRow {
                method: method.label().to_string(),
                scale_px: img.width(),
                smd2_before: before,
                smd2_after: smd2(&output)?,
                wall_ms: times_ms[times_ms.len() / 2],
            });
        }
    }
    Ok(rows)
}

/// Per-cell rows as CSV.
pub fn bench_rows_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,scale_px,smd2_before,smd2_after,wall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.3}\n",
            r.method, r.scale_px, r.smd2_before, r.smd2_after, r.wall_ms
        ));
    }
    out
}

/// Mean sharpness and wall time per (method, scale), in first-seen order.
pub fn bench_summary_csv(rows: &[BenchRow]) -> String {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows {
        let key = (r.method.clone(), r.scale_px);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let mut out = String::from("method,scale_px,mean_smd2_before,mean_smd2_after,mean_wall_ms\n");
    for (method, scale) in keys {
        let group: Vec<&BenchRow> = rows
            .iter()
            .filter(|r| r.method == method && r.scale_px == scale)
            .collect();
        let n = group.len() as f64;
        let mean = |f: &dyn Fn(&BenchRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.3}\n",
            method,
            scale,
            mean(&|r| r.smd2_before),
            mean(&|r| r.smd2_after),
            mean(&|r| r.wall_ms),
        ));
    }
    out
}
