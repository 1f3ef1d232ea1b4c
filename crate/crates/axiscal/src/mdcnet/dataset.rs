//! Training-pair construction from the scene simulator.
//!
//! Each pair is a degraded ROI and its dark-channel-enhanced counterpart,
//! so the network distills the slower enhancement into one forward pass and
//! its quality ceiling is that enhancement by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MdcError;
use crate::dehaze::{gfa_enhance, DehazeParams};
use crate::optics::SimulatedScene;
use crate::raster::{GrayImage, Roi};

/// One training example: a degraded crop, its enhanced target, and where in
/// the source scene the crop came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub input: GrayImage,
    pub target: GrayImage,
    pub roi: Roi,
}

/// Picks a square ROI origin uniformly among all positions that keep
/// `center` strictly inside the crop. The interval is never empty when the
/// crop fits the image and the center is in bounds.
fn roi_origin_containing(
    rng: &mut impl Rng,
    center: f64,
    extent: usize,
    roi_size: usize,
) -> usize {
    let anchor = center.floor() as usize; // center is in [0, extent)
    let lo = anchor.saturating_sub(roi_size - 1);
    let hi = anchor.min(extent - roi_size);
    rng.random_range(lo..=hi)
}

/// Builds `count` pairs by cycling the scenes, cropping a seeded random ROI
/// around each scene's true center from the degraded image, and enhancing
/// that crop as the target.
pub fn build_dataset(
    scenes: &[SimulatedScene],
    count: usize,
    roi_size: usize,
    params: &DehazeParams,
    seed: u64,
) -> Result<Vec<DatasetPair>, MdcError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if scenes.is_empty() {
        return Err(MdcError::BadConfig("no scenes to sample from".into()));
    }
    if roi_size == 0 {
        return Err(MdcError::BadConfig("roi_size must be positive".into()));
    }
    let params = params
        .validated()
        .map_err(|e| MdcError::BadConfig(e.to_string()))?;
    for scene in scenes {
        if roi_size > scene.degraded.width() || roi_size > scene.degraded.height() {
            return Err(MdcError::BadConfig(format!(
                "roi {roi_size} exceeds a {}x{} scene",
                scene.degraded.width(),
                scene.degraded.height()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let scene = &scenes[i % scenes.len()];
        let (cx, cy) = scene.truth.center;
        let roi = Roi {
            x0: roi_origin_containing(&mut rng, cx, scene.degraded.width(), roi_size),
            y0: roi_origin_containing(&mut rng, cy, scene.degraded.height(), roi_size),
            width: roi_size,
            height: roi_size,
        };
        let input = scene
            .degraded
            .crop(&roi)
            .expect("origin selection keeps the roi in bounds");
        let target = gfa_enhance(&input, &params);
        pairs.push(DatasetPair { input, target, roi });
    }
    Ok(pairs)
}
