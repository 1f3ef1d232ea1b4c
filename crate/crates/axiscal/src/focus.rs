//! Sharpness metrics, block ROI search, and axial focus selection.
//!
//! The primary metric is SMD2 (product of absolute horizontal and vertical
//! differences). A block search ranks candidate regions by SMD2 to find the
//! crosshair neighborhood, an axial search picks the sharpest stack slice,
//! and a sensitivity report compares eight metrics on a common stack via the
//! differential gradient of their normalized score curves.

use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use crate::raster::{GrayImage, RasterError, Roi};

/// Errors from sharpness evaluation and focus search.
#[derive(Debug, Error)]
pub enum FocusError {
    #[error("image {width}x{height} is smaller than the {min_w}x{min_h} needed by {what}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_w: usize,
        min_h: usize,
        what: &'static str,
    },
    #[error("index {n} outside the interior of a series of length {len}")]
    IndexOutOfRange { n: usize, len: usize },
    #[error("focus stack is empty")]
    EmptyStack,
    #[error("stack images must share one shape: {0}x{1} vs {2}x{3}")]
    MismatchedShapes(usize, usize, usize, usize),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Grayscale sharpness measure: sum over interior pixels of
/// `|f(x,y)-f(x-1,y)| * |f(x,y)-f(x,y-1)|` on 0..255-scaled samples, divided
/// by `255 * width * height`. On `[0,1]` samples that reduces to
/// `255 / (w*h) * sum(|dx| * |dy|)`.
pub fn smd2(img: &GrayImage) -> Result<f64, FocusError> {
    require(img, 2, 2, "smd2")?;
    let (w, h) = (img.width(), img.height());
    let mut acc = 0.0;
    for y in 1..h {
        let row = img.row(y);
        let prev = img.row(y - 1);
        for x in 1..w {
            acc += (row[x] - row[x - 1]).abs() * (row[x] - prev[x]).abs();
        }
    }
    Ok(255.0 * acc / (w * h) as f64)
}

/// The eight sharpness metrics compared by the sensitivity report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum MetricKind {
    Smd2,
    Tenengrad,
    Laplacian,
    Smd,
    EnergyGradient,
    Vollath,
    Entropy,
    FftRatio,
}

impl MetricKind {
    pub const ALL: [MetricKind; 8] = [
        MetricKind::Smd2,
        MetricKind::Tenengrad,
        MetricKind::Laplacian,
        MetricKind::Smd,
        MetricKind::EnergyGradient,
        MetricKind::Vollath,
        MetricKind::Entropy,
        MetricKind::FftRatio,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            MetricKind::Smd2 => "smd2",
            MetricKind::Tenengrad => "tenengrad",
            MetricKind::Laplacian => "laplacian",
            MetricKind::Smd => "smd",
            MetricKind::EnergyGradient => "energy_gradient",
            MetricKind::Vollath => "vollath",
            MetricKind::Entropy => "entropy",
            MetricKind::FftRatio => "fft_ratio",
        }
    }
}

/// Evaluates the raw (unnormalized) metric; cross-stack normalization is a
/// separate step in the sensitivity report.
pub fn focus_metric(img: &GrayImage, kind: MetricKind) -> Result<f64, FocusError> {
    match kind {
        MetricKind::Smd2 => smd2(img),
        MetricKind::Tenengrad => tenengrad(img),
        MetricKind::Laplacian => laplacian(img),
        MetricKind::Smd => smd(img),
        MetricKind::EnergyGradient => energy_gradient(img),
        MetricKind::Vollath => vollath(img),
        MetricKind::Entropy => Ok(entropy(img)),
        MetricKind::FftRatio => fft_ratio(img),
    }
}

/// Sum of squared Sobel gradient magnitudes over interior pixels.
fn tenengrad(img: &GrayImage) -> Result<f64, FocusError> {
    require(img, 3, 3, "tenengrad")?;
    let (w, h) = (img.width(), img.height());
    let mut acc = 0.0;
    for y in 1..h - 1 {
        let (above, row, below) = (img.row(y - 1), img.row(y), img.row(y + 1));
        for x in 1..w - 1 {
            let gx = (above[x + 1] + 2.0 * row[x + 1] + below[x + 1])
                - (above[x - 1] + 2.0 * row[x - 1] + below[x - 1]);
            let gy = (below[x - 1] + 2.0 * below[x] + below[x + 1])
                - (above[x - 1] + 2.0 * above[x] + above[x + 1]);
            acc += gx * gx + gy * gy;
        }
    }
    Ok(acc)
}

/// Sum of squared 4-neighbor Laplacian responses over interior pixels.
fn laplacian(img: &GrayImage) -> Result<f64, FocusError> {
    require(img, 3, 3, "laplacian")?;
    let (w, h) = (img.width(), img.height());
    let mut acc = 0.0;
    for y in 1..h - 1 {
        let (above, row, below) = (img.row(y - 1), img.row(y), img.row(y + 1));
        for x in 1..w - 1 {
            let lap = above[x] + below[x] + row[x - 1] + row[x + 1] - 4.0 * row[x];
            acc += lap * lap;
        }
    }
    Ok(acc)
}

/// Sum of absolute horizontal plus absolute vertical differences.
fn smd(img: &GrayImage) -> Result<f64, FocusError> {
    require(img, 2, 2, "smd")?;
    let (w, h) = (img.width(), img.height());
    let mut acc = 0.0;
    for y in 0..h {
        let row = img.row(y);
        for x in 1..w {
            acc += (row[x] - row[x - 1]).abs();
        }
    }
    for y in 1..h {
        let (row, prev) = (img.row(y), img.row(y - 1));
        for x in 0..w {
            acc += (row[x] - prev[x]).abs();
        }
    }
    Ok(acc)
}

/// Sum of squared forward differences in both directions.
fn energy_gradient(img: &GrayImage) -> Result<f64, FocusError> {
    require(img, 2, 2, "energy gradient")?;
    let (w, h) = (img.width(), img.height());
    let mut acc = 0.0;
    for y in 0..h {
        let row = img.row(y);
        for x in 0..w - 1 {
            let d = row[x + 1] - row[x];
            acc += d * d;
        }
    }
    for y in 0..h - 1 {
        let (row, next) = (img.row(y), img.row(y + 1));
        for x in 0..w {
            let d = next[x] - row[x];
            acc += d * d;
        }
    }
    Ok(acc)
}

/// Autocorrelation difference: `sum f(x)f(x+1) - sum f(x)f(x+2)` along rows.
fn vollath(img: &GrayImage) -> Result<f64, FocusError> {
    require(img, 3, 1, "vollath")?;
    let (w, h) = (img.width(), img.height());
    let mut acc = 0.0;
    for y in 0..h {
        let row = img.row(y);
        for x in 0..w - 1 {
            acc += row[x] * row[x + 1];
        }
        for x in 0..w - 2 {
            acc -= row[x] * row[x + 2];
        }
    }
    Ok(acc)
}

/// Shannon entropy (bits) of the 256-bin quantized histogram.
fn entropy(img: &GrayImage) -> f64 {
    let mut hist = [0u64; 256];
    for &s in img.samples() {
        let bin = (s * 255.0).round().clamp(0.0, 255.0) as usize;
        hist[bin] += 1;
    }
    let total = img.samples().len() as f64;
    let mut acc = 0.0;
    for &count in &hist {
        if count > 0 {
            let p = count as f64 / total;
            acc -= p * p.log2();
        }
    }
    acc
}

/// Fraction of spectral energy above radial frequency 1/8 cycles per pixel
/// (equivalently, beyond bin w/8 along the width axis).
fn fft_ratio(img: &GrayImage) -> Result<f64, FocusError> {
    require(img, 2, 2, "fft ratio")?;
    let (w, h) = (img.width(), img.height());
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);

    let mut data: Vec<Complex<f64>> = img
        .samples()
        .iter()
        .map(|&s| Complex::new(s, 0.0))
        .collect();
    row_fft.process(&mut data);
    // Transpose so each column becomes contiguous; final layout is
    // spectrum[u * h + v] for horizontal bin u, vertical bin v.
    let mut spectrum = vec![Complex::new(0.0, 0.0); w * h];
    for v in 0..h {
        for u in 0..w {
            spectrum[u * h + v] = data[v * w + u];
        }
    }
    col_fft.process(&mut spectrum);

    let mut total = 0.0;
    let mut high = 0.0;
    for u in 0..w {
        let ru = u.min(w - u) as f64 / w as f64;
        for v in 0..h {
            let rv = v.min(h - v) as f64 / h as f64;
            let e = spectrum[u * h + v].norm_sqr();
            total += e;
            if (ru * ru + rv * rv).sqrt() > 0.125 {
                high += e;
            }
        }
    }
    Ok(if total > 0.0 { high / total } else { 0.0 })
}

fn require(
    img: &GrayImage,
    min_w: usize,
    min_h: usize,
    what: &'static str,
) -> Result<(), FocusError> {
    if img.width() < min_w || img.height() < min_h {
        return Err(FocusError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min_w,
            min_h,
            what,
        });
    }
    Ok(())
}

/// Second-difference magnitude of a score series at `n`:
/// `|2 f(n) - f(n-1) - f(n+1)| / 2`.
pub fn differential_gradient(series: &[f64], n: usize) -> Result<f64, FocusError> {
    if n == 0 || n + 1 >= series.len() {
        return Err(FocusError::IndexOutOfRange {
            n,
            len: series.len(),
        });
    }
    Ok((2.0 * series[n] - series[n - 1] - series[n + 1]).abs() / 2.0)
}

/// Block search geometry: block size and the stride between block origins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BlockSearchParams {
    pub block_w: usize,
    pub block_h: usize,
    pub step_t: usize,
}

impl Default for BlockSearchParams {
    fn default() -> Self {
        Self {
            block_w: 200,
            block_h: 200,
            step_t: 50,
        }
    }
}

/// Blocks ranked by SMD2, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedBlocks {
    entries: Vec<(Roi, f64)>,
}

impl RankedBlocks {
    /// Highest-scoring block; the region expected to contain the crosshair.
    pub fn head(&self) -> &(Roi, f64) {
        &self.entries[0]
    }

    pub fn entries(&self) -> &[(Roi, f64)] {
        &self.entries
    }
}

/// Block origins stepping by `step`, with the final origin clamped so the
/// last block ends exactly at the image edge.
fn block_origins(total: usize, block: usize, step: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut p = 0;
    while p + block < total {
        v.push(p);
        p += step;
    }
    v.push(total - block);
    v
}

/// Scores every block position by SMD2 and ranks them descending; ties break
/// by `(y0, x0)` ascending. Blocks are scored in parallel; the merge sorts by
/// a total key, so the ranking is independent of evaluation order.
pub fn bdma(img: &GrayImage, params: &BlockSearchParams) -> Result<RankedBlocks, FocusError> {
    assert!(params.step_t >= 1, "step must be at least 1");
    require(img, params.block_w.max(2), params.block_h.max(2), "bdma")?;
    let ys = block_origins(img.height(), params.block_h, params.step_t);
    let xs = block_origins(img.width(), params.block_w, params.step_t);
    let origins: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (y, x)))
        .collect();
    let mut entries = origins
        .par_iter()
        .map(|&(y0, x0)| {
            let roi = Roi::new(x0, y0, params.block_w, params.block_h);
            let score = smd2(&img.crop(&roi)?)?;
            Ok((roi, score))
        })
        .collect::<Result<Vec<_>, FocusError>>()?;
    entries.sort_by(|(ra, sa), (rb, sb)| {
        sb.total_cmp(sa)
            .then(ra.y0.cmp(&rb.y0))
            .then(ra.x0.cmp(&rb.x0))
    });
    Ok(RankedBlocks { entries })
}

/// Images captured at equally spaced axial positions around coarse focus.
#[derive(Debug, Clone)]
pub struct FocusStack {
    images: Vec<GrayImage>,
    axial_step_um: f64,
}

impl FocusStack {
    /// Default axial spacing between stack slices, in micrometers.
    pub const DEFAULT_AXIAL_STEP_UM: f64 = 10.0;

    pub fn new(images: Vec<GrayImage>, axial_step_um: f64) -> Result<Self, FocusError> {
        if let Some(first) = images.first() {
            for img in &images[1..] {
                if img.width() != first.width() || img.height() != first.height() {
                    return Err(FocusError::MismatchedShapes(
                        first.width(),
                        first.height(),
                        img.width(),
                        img.height(),
                    ));
                }
            }
        }
        Ok(Self {
            images,
            axial_step_um,
        })
    }

    pub fn images(&self) -> &[GrayImage] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn axial_step_um(&self) -> f64 {
        self.axial_step_um
    }

    /// Index of the coarse-focus slice: the middle of the stack.
    pub fn center_index(&self) -> usize {
        self.images.len().saturating_sub(1) / 2
    }

    /// Axial offset of slice `i` relative to the coarse-focus slice.
    pub fn axial_offset_um(&self, i: usize) -> f64 {
        (i as f64 - self.center_index() as f64) * self.axial_step_um
    }
}

/// Index of the stack slice whose ROI has maximal SMD2; ties break to the
/// smallest index.
pub fn afa_best_focus(stack: &FocusStack, roi: &Roi) -> Result<usize, FocusError> {
    if stack.is_empty() {
        return Err(FocusError::EmptyStack);
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, img) in stack.images().iter().enumerate() {
        let score = smd2(&img.crop(roi)?)?;
        if score > best.1 {
            best = (i, score);
        }
    }
    Ok(best.0)
}

/// One metric's trace through the stack.
#[derive(Debug, Clone)]
pub struct MetricCurve {
    pub kind: MetricKind,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Index of the maximal raw score (ties: smallest index).
    pub argmax: usize,
    /// Differential gradient at the consensus focus index; `None` when this
    /// metric's argmax disagrees with the majority.
    pub delta: Option<f64>,
}

/// Outcome of the metric-sensitivity comparison over a focus stack.
#[derive(Debug, Clone)]
pub struct SensitivityReport {
    pub curves: Vec<MetricCurve>,
    /// Focus index agreed on by the largest number of metrics.
    pub majority_argmax: usize,
    /// Metric with the largest differential gradient among the agreeing ones.
    pub selected: MetricKind,
}

impl SensitivityReport {
    /// One row per (metric, stack index, raw, normalized) plus a summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,index,raw,normalized\n");
        for curve in &self.curves {
            for (i, (&raw, &norm)) in curve.raw.iter().zip(&curve.normalized).enumerate() {
                out.push_str(&format!("{},{},{},{}\n", curve.kind.label(), i, raw, norm));
            }
        }
        out.push_str(&format!("selected,{},,\n", self.selected.label()));
        out
    }
}

/// Min-max normalization; a flat curve maps to all zeros.
fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        raw.iter().map(|&s| (s - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Compares `kinds` on the stack: scores each metric per slice on the ROI,
/// min-max normalizes, finds each argmax and the majority argmax, then ranks
/// the agreeing metrics by the differential gradient of their normalized
/// curves at that index. The metric with the largest gradient is the most
/// sensitive. An argmax on the stack boundary is clamped one slot inward for
/// the gradient evaluation.
pub fn metric_sensitivity_report(
    stack: &FocusStack,
    roi: &Roi,
    kinds: &[MetricKind],
) -> Result<SensitivityReport, FocusError> {
    if stack.is_empty() || kinds.is_empty() {
        return Err(FocusError::EmptyStack);
    }
    let crops = stack
        .images()
        .iter()
        .map(|img| img.crop(roi))
        .collect::<Result<Vec<_>, _>>()?;
    let mut curves = kinds
        .iter()
        .map(|&kind| {
            let raw = crops
                .par_iter()
                .map(|c| focus_metric(c, kind))
                .collect::<Result<Vec<_>, _>>()?;
            let normalized = min_max_normalize(&raw);
            let argmax = argmax(&raw);
            Ok(MetricCurve {
                kind,
                raw,
                normalized,
                argmax,
                delta: None,
            })
        })
        .collect::<Result<Vec<MetricCurve>, FocusError>>()?;

    // Majority argmax; ties break to the smallest index.
    let mut votes = std::collections::BTreeMap::new();
    for curve in &curves {
        *votes.entry(curve.argmax).or_insert(0usize) += 1;
    }
    let majority_argmax = votes
        .iter()
        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
        .map(|(&i, _)| i)
        .expect("nonempty votes");

    let eval_at = majority_argmax.clamp(1, stack.len().saturating_sub(2).max(1));
    let mut selected = None;
    for curve in &mut curves {
        if curve.argmax != majority_argmax {
            continue;
        }
        let delta = differential_gradient(&curve.normalized, eval_at)?;
        curve.delta = Some(delta);
        let better = match selected {
            None => true,
            Some((_, best)) => delta > best,
        };
        if better {
            selected = Some((curve.kind, delta));
        }
    }
    let (selected, _) = selected.expect("majority argmax has at least one voter");
    Ok(SensitivityReport {
        curves,
        majority_argmax,
        selected,
    })
}
