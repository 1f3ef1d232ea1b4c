//! Largest inscribed circle of a binary mask.
//!
//! The center is the foreground pixel with maximal Euclidean distance to the
//! nearest background pixel or image edge, computed with an exact two-pass
//! squared distance transform (lower parabola envelope per row, then per
//! column). Only the largest 8-connected foreground component is considered;
//! ties on the distance maximum break to the smallest row, then column.

use super::{BitMask, Circle, RasterError};

/// Squared distances far beyond any in-image distance; stands in for
/// "no background site anywhere" and is always dominated by the border term.
fn far(w: usize, h: usize) -> f64 {
    let d = (w + h + 1) as f64;
    d * d
}

/// One-dimensional squared Euclidean distance transform (lower envelope of
/// parabolas rooted at `(i, f[i])`).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    // v: parabola apex positions, z: envelope breakpoints.
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                if k == 0 {
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

/// Exact squared distance from every pixel to the nearest background pixel;
/// `far` where the mask has no background at all.
fn squared_distance_to_background(mask: &BitMask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let far = far(w, h);
    let mut dist = vec![0.0f64; w * h];
    // Row pass: distance along x to nearest background in the same row.
    let mut line = vec![0.0f64; w.max(h)];
    let mut out_line = vec![0.0f64; w.max(h)];
    for y in 0..h {
        for x in 0..w {
            line[x] = if mask.get(x, y) { far } else { 0.0 };
        }
        edt_1d(&line[..w], &mut out_line[..w]);
        dist[y * w..(y + 1) * w].copy_from_slice(&out_line[..w]);
    }
    // Column pass combines the row results.
    for x in 0..w {
        for y in 0..h {
            line[y] = dist[y * w + x];
        }
        edt_1d(&line[..h], &mut out_line[..h]);
        for y in 0..h {
            dist[y * w + x] = out_line[y];
        }
    }
    dist
}

/// Labels 8-connected foreground components; returns per-pixel labels
/// (`usize::MAX` = background) and the label of the largest component.
/// Size ties break to the component discovered first in row-major order.
fn largest_component(mask: &BitMask) -> Option<(Vec<usize>, usize)> {
    let (w, h) = (mask.width(), mask.height());
    const BG: usize = usize::MAX;
    let mut labels = vec![BG; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits()[start] || labels[start] != BG {
            continue;
        }
        let label = sizes.len();
        let mut size = 0usize;
        stack.push(start);
        labels[start] = label;
        while let Some(idx) = stack.pop() {
            size += 1;
            let (x, y) = (idx % w, idx / w);
            let x_lo = x.saturating_sub(1);
            let y_lo = y.saturating_sub(1);
            for yy in y_lo..=(y + 1).min(h - 1) {
                for xx in x_lo..=(x + 1).min(w - 1) {
                    let nidx = yy * w + xx;
                    if mask.bits()[nidx] && labels[nidx] == BG {
                        labels[nidx] = label;
                        stack.push(nidx);
                    }
                }
            }
        }
        sizes.push(size);
    }
    if sizes.is_empty() {
        return None;
    }
    let best = sizes
        .iter()
        .enumerate()
        .max_by(|(ia, sa), (ib, sb)| sa.cmp(sb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("nonempty sizes");
    Some((labels, best))
}

/// Largest circle inscribed in the largest 8-connected foreground component.
///
/// The image boundary acts as background half a pixel beyond the outermost
/// pixel centers, so a full mask yields radius `min(w, h) / 2` rather than an
/// unbounded one.
pub fn largest_inscribed_circle(mask: &BitMask) -> Result<Circle, RasterError> {
    let (labels, target) = largest_component(mask).ok_or(RasterError::NoForeground)?;
    let (w, h) = (mask.width(), mask.height());
    let dist2 = squared_distance_to_background(mask);
    let mut best = f64::NEG_INFINITY;
    let mut best_xy = (0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            if labels[y * w + x] != target {
                continue;
            }
            let border = x.min(y).min(w - 1 - x).min(h - 1 - y) as f64 + 0.5;
            let d = dist2[y * w + x].sqrt().min(border);
            if d > best {
                best = d;
                best_xy = (x, y);
            }
        }
    }
    Ok(Circle {
        cx: best_xy.0 as f64,
        cy: best_xy.1 as f64,
        r: best,
    })
}
