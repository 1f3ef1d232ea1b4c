//! Loss, analytic backprop, gradient checking, and the SGD training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{reconstruct_linear, ConvLayer, DatasetPair, ForwardPass, MdcError, MdcNet};

/// Parameter-shaped gradient accumulator mirroring the network topology.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGradients(MdcNet);

impl NetGradients {
    fn zeros() -> Self {
        Self(MdcNet::zeros())
    }

    /// Gradients in the same documented order as `MdcNet::params`.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.0.params()
    }

    /// Per-layer views, conv1 through conv5.
    pub fn layers(&self) -> [&ConvLayer; 5] {
        self.0.layers()
    }

    fn add_assign(&mut self, other: &NetGradients) {
        for (a, b) in self.0.params_mut().zip(other.0.params()) {
            *a += b;
        }
    }
}

/// Training hyperparameters. The defaults are the reference recipe: 200
/// epochs of batch-20 SGD, momentum 0.99, cosine-annealed learning rate from
/// 4e-4 down to 1e-5, reconstruction constant b = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub momentum: f64,
    pub b_const: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 20,
            lr_start: 4e-4,
            lr_end: 1e-5,
            momentum: 0.99,
            b_const: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validated(self) -> Result<Self, MdcError> {
        if !(self.lr_start >= self.lr_end && self.lr_end > 0.0) {
            return Err(MdcError::BadConfig(format!(
                "need lr_start >= lr_end > 0, got {} and {}",
                self.lr_start, self.lr_end
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(MdcError::BadConfig(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(MdcError::BadConfig("batch size must be positive".into()));
        }
        if !self.b_const.is_finite() {
            return Err(MdcError::BadConfig("b_const must be finite".into()));
        }
        Ok(self)
    }

    /// Cosine-annealed learning rate at `epoch` of `self.epochs`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let progress = epoch as f64 / self.epochs.max(1) as f64;
        self.lr_end
            + (self.lr_start - self.lr_end) * (1.0 + (std::f64::consts::PI * progress).cos()) / 2.0
    }
}

/// Mirror of the forward loops: scatters `d_out` into weight, bias, and
/// (optионally) input gradients for one layer.
fn conv2d_backward_raw(
    input: &[f64],
    h: usize,
    w: usize,
    layer: &ConvLayer,
    d_out: &[f64],
    d_layer: &mut ConvLayer,
    mut d_input: Option<&mut [f64]>,
) {
    let k = layer.kernel_size();
    let pad = k / 2;
    let plane = h * w;
    for o in 0..layer.out_channels() {
        let d_plane = &d_out[o * plane..(o + 1) * plane];
        d_layer.biases_mut()[o] += d_plane.iter().sum::<f64>();
        for i in 0..layer.in_channels() {
            let in_plane = &input[i * plane..(i + 1) * plane];
            let w_base = (o * layer.in_channels() + i) * k * k;
            for ky in 0..k {
                for kx in 0..k {
                    let y_lo = pad.saturating_sub(ky);
                    let y_hi = (h + pad).saturating_sub(ky).min(h);
                    let x_lo = pad.saturating_sub(kx);
                    let x_hi = (w + pad).saturating_sub(kx).min(w);
                    let weight = layer.weights()[w_base + ky * k + kx];
                    let mut dw = 0.0;
                    for y in y_lo..y_hi {
                        let src = (y + ky - pad) * w;
                        let dst = y * w;
                        if let Some(d_in) = d_input.as_deref_mut() {
                            let d_in_plane = &mut d_in[i * plane..(i + 1) * plane];
                            for x in x_lo..x_hi {
                                let g = d_plane[dst + x];
                                dw += g * in_plane[src + x + kx - pad];
                                d_in_plane[src + x + kx - pad] += weight * g;
                            }
                        } else {
                            for x in x_lo..x_hi {
                                dw += d_plane[dst + x] * in_plane[src + x + kx - pad];
                            }
                        }
                    }
                    d_layer.weights_mut()[w_base + ky * k + kx] += dw;
                }
            }
        }
    }
}

/// Zeroes gradient entries whose stored post-activation feature is not
/// strictly positive: the ReLU subgradient, with 0 at the kink.
fn relu_backward(features: &[f64], grads: &mut [f64]) {
    for (g, &f) in grads.iter_mut().zip(features) {
        if f <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Squared-error sum for one pair under the linear (unclamped)
/// reconstruction, plus everything backprop needs.
fn item_forward(net: &MdcNet, pair: &DatasetPair, b_const: f64) -> Result<(ForwardPass, Vec<f64>, f64), MdcError> {
    let pass = net.forward_pass(&pair.input)?;
    let j = reconstruct_linear(&pass.f.to_image(0), &pair.input, b_const)?;
    if (pair.target.width(), pair.target.height()) != (pair.input.width(), pair.input.height()) {
        return Err(MdcError::ShapeMismatch(format!(
            "target {}x{} vs input {}x{}",
            pair.target.width(),
            pair.target.height(),
            pair.input.width(),
            pair.input.height()
        )));
    }
    let diff: Vec<f64> = j
        .samples()
        .iter()
        .zip(pair.target.samples())
        .map(|(&a, &b)| a - b)
        .collect();
    let sq_sum = diff.iter().map(|d| d * d).sum::<f64>();
    Ok((pass, diff, sq_sum))
}

fn item_gradients(
    net: &MdcNet,
    pair: &DatasetPair,
    b_const: f64,
    inv_n: f64,
) -> Result<(f64, NetGradients), MdcError> {
    let (pass, diff, sq_sum) = item_forward(net, pair, b_const)?;
    let (h, w) = (pass.input.height(), pass.input.width());
    let plane = h * w;
    let mut grads = NetGradients::zeros();

    // d loss / d F = 2 (J - target) (I - 1) / n; the clamp is not part of
    // the training objective, so this is exact.
    let d_f: Vec<f64> = diff
        .iter()
        .zip(pass.input.samples())
        .map(|(&d, &i)| 2.0 * d * inv_n * (i - 1.0))
        .collect();

    let mut d_feats = vec![0.0; 12 * plane];
    let [g1, g2, g3, g4, g5] = grads.0.layers_mut();
    conv2d_backward_raw(
        pass.features.samples(),
        h,
        w,
        &net.conv5,
        &d_f,
        g5,
        Some(&mut d_feats),
    );
    // Walk the dense connections backward. Each block's gradient is complete
    // once every later layer has scattered into it; then the ReLU gate
    // applies and the block propagates into the channels before it.
    for (layer, grad_layer, consumed) in
        [(&net.conv4, g4, 9usize), (&net.conv3, g3, 6), (&net.conv2, g2, 3)]
    {
        let (head, tail) = d_feats.split_at_mut(consumed * plane);
        let block = &mut tail[..layer.out_channels() * plane];
        relu_backward(
            &pass.features.samples()[consumed * plane..(consumed + layer.out_channels()) * plane],
            block,
        );
        conv2d_backward_raw(
            &pass.features.samples()[..consumed * plane],
            h,
            w,
            layer,
            block,
            grad_layer,
            Some(head),
        );
    }
    relu_backward(&pass.features.samples()[..3 * plane], &mut d_feats[..3 * plane]);
    conv2d_backward_raw(
        pass.input.samples(),
        h,
        w,
        &net.conv1,
        &d_feats[..3 * plane],
        g1,
        None,
    );
    Ok((sq_sum * inv_n, grads))
}

fn total_pixels(batch: &[&DatasetPair]) -> usize {
    batch
        .iter()
        .map(|p| p.input.width() * p.input.height())
        .sum()
}

/// Mean squared error of the batch under the linear reconstruction, plus
/// exact analytic gradients for every weight and bias. Items are processed
/// in parallel and reduced in index order, so results are bit-stable.
pub fn loss_and_gradients(
    net: &MdcNet,
    batch: &[&DatasetPair],
    b_const: f64,
) -> Result<(f64, NetGradients), MdcError> {
    if batch.is_empty() {
        return Err(MdcError::EmptyDataset);
    }
    let inv_n = 1.0 / total_pixels(batch) as f64;
    let parts: Vec<Result<(f64, NetGradients), MdcError>> = batch
        .par_iter()
        .map(|pair| item_gradients(net, pair, b_const, inv_n))
        .collect();
    let mut loss = 0.0;
    let mut grads = NetGradients::zeros();
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}

/// Forward-only batch loss with the same normalization as
/// `loss_and_gradients`.
pub fn batch_loss(net: &MdcNet, batch: &[&DatasetPair], b_const: f64) -> Result<f64, MdcError> {
    if batch.is_empty() {
        return Err(MdcError::EmptyDataset);
    }
    let inv_n = 1.0 / total_pixels(batch) as f64;
    let sums: Vec<Result<f64, MdcError>> = batch
        .par_iter()
        .map(|pair| item_forward(net, pair, b_const).map(|(_, _, s)| s))
        .collect();
    let mut loss = 0.0;
    for s in sums {
        loss += s? * inv_n;
    }
    Ok(loss)
}

/// Compares analytic gradients against central finite differences on a
/// seeded subsample of at least `sample_count` parameters and returns the
/// maximum relative error `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    net: &MdcNet,
    pair: &DatasetPair,
    b_const: f64,
    epsilon: f64,
    sample_count: usize,
    seed: u64,
) -> Result<f64, MdcError> {
    let (_, analytic) = loss_and_gradients(net, &[pair], b_const)?;
    let analytic: Vec<f64> = analytic.params().copied().collect();
    let total = analytic.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = if sample_count >= total {
        (0..total).collect()
    } else {
        rand::seq::index::sample(&mut rng, total, sample_count).into_vec()
    };

    let mut scratch = net.clone();
    let mut worst = 0.0f64;
    for idx in indices {
        let original = *scratch.params().nth(idx).expect("index in range");
        let mut eval = |value: f64| -> Result<f64, MdcError> {
            *scratch.params_mut().nth(idx).expect("index in range") = value;
            batch_loss(&scratch, &[pair], b_const)
        };
        let plus = eval(original + epsilon)?;
        let minus = eval(original - epsilon)?;
        *scratch.params_mut().nth(idx).expect("index in range") = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Runs seeded SGD with momentum and a cosine-annealed learning rate over
/// `data`, updating `net` in place. Returns the per-epoch mean training
/// loss. The epoch order is a fresh seeded shuffle each time; the last
/// partial batch is kept. Velocity update: v = momentum*v + g; w -= lr*v.
pub fn train(
    net: &mut MdcNet,
    data: &[DatasetPair],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, MdcError> {
    let cfg = cfg.validated()?;
    if data.is_empty() {
        return Err(MdcError::EmptyDataset);
    }
    let mut velocity = MdcNet::zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        indices.shuffle(&mut rng);
        let mut loss_weighted = 0.0;
        let mut pixels_seen = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<&DatasetPair> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = loss_and_gradients(net, &batch, cfg.b_const)?;
            let batch_pixels = total_pixels(&batch);
            loss_weighted += loss * batch_pixels as f64;
            pixels_seen += batch_pixels;
            for ((w, v), g) in net
                .params_mut()
                .zip(velocity.params_mut())
                .zip(grads.params())
            {
                *v = cfg.momentum * *v + g;
                *w -= lr * *v;
            }
        }
        history.push(loss_weighted / pixels_seen as f64);
    }
    Ok(history)
}
