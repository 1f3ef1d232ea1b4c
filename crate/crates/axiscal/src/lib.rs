//! Measurement and correction of optical-axis eccentricity on a spin table.
//!
//! A lens element spinning on a motorized table traces its optical-axis
//! eccentricity as a circle in the camera image. This crate provides the
//! building blocks of that measurement chain and a synthetic rig to exercise
//! it end to end:
//!
//! * [`raster`]: grayscale image container, box/min filters, adaptive
//!   thresholding, erosion, largest-inscribed-circle extraction, PGM I/O.
//! * [`focus`]: sharpness metrics, block-wise region-of-interest search,
//!   axial focus search, and metric sensitivity comparison.
//! * [`dehaze`]: dark-channel defocus compensation with a guided filter,
//!   including the subsampled fast variant.
//! * [`mdcnet`]: a minimal dehazing convolutional network (1978 parameters)
//!   with analytic gradients, trained from scratch with momentum SGD.
//! * [`optics`]: aspheric surface geometry, sampling windows, and the
//!   synthetic crosshair scene generator with controlled degradation.
//! * [`correction`]: least-squares circle fitting, simulated observation of
//!   the crosshair center, and the iterative eccentricity correction loop.
//! * [`pipeline`]: system initialization, adaptive enhancement dispatch,
//!   center extraction, and benchmarking glue.
//!
//! All randomness flows through seeded [`rand_chacha::ChaCha8Rng`] streams;
//! every public entry point is deterministic given its seed. Parallel code
//! paths (rayon) only split work over independent outputs so results are
//! bit-identical to the sequential equivalents.

// `!(v > 0.0)` in validation deliberately rejects NaN along with the
// out-of-range values; the distance-transform loops index several arrays in
// lockstep where an iterator chain reads worse.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod correction;
pub mod dehaze;
pub mod focus;
pub mod mdcnet;
pub mod optics;
pub mod pipeline;
pub mod raster;
