//! Felzenszwalb-style HOG: 18 contrast-sensitive orientations, 9 insensitive ones and 4
//! texture energies per cell.

use super::image::Patch;
use crate::error::{Error, Result};
use crate::spectral::RealGrid;

pub const HOG_CHANNELS: usize = 31;
pub const ORIENTATIONS: usize = 18;

const TRUNCATION: f64 = 0.2;
const TEXTURE_SCALE: f64 = 0.2357;
const NORM_EPS: f64 = 1e-4;

/// Raw per-cell orientation histograms, before block normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientationHistograms {
    pub rows: usize,
    pub cols: usize,
    pub bins: Vec<[f64; ORIENTATIONS]>,
}

impl OrientationHistograms {
    pub fn cell(&self, r: usize, c: usize) -> &[f64; ORIENTATIONS] {
        &self.bins[r * self.cols + c]
    }

    /// Sum over sensitive bins of the squared contrast-insensitive magnitudes.
    fn energy(&self, r: usize, c: usize) -> f64 {
        let h = self.cell(r, c);
        (0..ORIENTATIONS / 2)
            .map(|o| (h[o] + h[o + 9]).powi(2))
            .sum()
    }
}

/// Per-pixel gradient (magnitude, angle in [0, 2π)) taken from the channel with the
/// largest magnitude. Intensities are scaled to [0, 1].
fn gradients(patch: &Patch) -> Vec<(f64, f64)> {
    let (w, h, ch) = (patch.width, patch.height, patch.channels);
    let stride = w * ch;
    let row = |y: usize| &patch.data[y * stride..(y + 1) * stride];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (above, here, below) = (row(y.saturating_sub(1)), row(y), row((y + 1).min(h - 1)));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1) * ch, (x + 1).min(w - 1) * ch);
            let mut best = (0.0, 0.0, 0.0);
            for c in 0..ch {
                let dx = (here[xp + c] - here[xm + c]) / 255.0;
                let dy = (below[x * ch + c] - above[x * ch + c]) / 255.0;
                let m2 = dx * dx + dy * dy;
                if m2 > best.0 {
                    best = (m2, dx, dy);
                }
            }
            let (m2, dx, dy) = best;
            if m2 == 0.0 {
                out.push((0.0, 0.0));
            } else {
                let a = dy.atan2(dx);
                out.push((
                    m2.sqrt(),
                    if a < 0.0 {
                        a + std::f64::consts::TAU
                    } else {
                        a
                    },
                ));
            }
        }
    }
    out
}

/// Lower neighbouring cell (offset by one for padding) and its bilinear weight, per pixel
/// coordinate along one axis.
fn cell_weights(n: usize, cell: usize) -> Vec<(usize, f64)> {
    let cs = cell as f64;
    (0..n)
        .map(|i| {
            let c = (i as f64 + 0.5) / cs - 0.5;
            let c0 = c.floor();
            ((c0 + 1.0) as usize, c - c0)
        })
        .collect()
}

/// Soft-binned 18-bin orientation histograms with bilinear spatial voting into cells of
/// `cell × cell` pixels. The grid is `⌊h / cell⌋ × ⌊w / cell⌋`.
pub fn orientation_histograms(patch: &Patch, cell: usize) -> Result<OrientationHistograms> {
    if cell == 0 {
        return Err(Error::invalid("cell size must be positive"));
    }
    let (rows, cols) = (patch.height / cell, patch.width / cell);
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "patch {}x{} smaller than one {cell}px cell",
            patch.width, patch.height
        )));
    }
    let grads = gradients(patch);
    // one ring of padding cells absorbs votes that fall outside the grid
    let pc = cols + 2;
    let mut padded = vec![[0.0; ORIENTATIONS]; (rows + 2) * pc];
    let bin_width = std::f64::consts::TAU / ORIENTATIONS as f64;
    let ys = cell_weights(rows * cell, cell);
    let xs = cell_weights(cols * cell, cell);
    for (y, &(r0, fy)) in ys.iter().enumerate() {
        let line = &grads[y * patch.width..];
        for (&(mag, angle), &(c0, fx)) in line.iter().zip(&xs) {
            if mag == 0.0 {
                continue;
            }
            let o = angle / bin_width;
            let o0 = o.floor();
            let fo = o - o0;
            let o0 = (o0 as usize).min(ORIENTATIONS - 1);
            let o1 = if o0 + 1 == ORIENTATIONS { 0 } else { o0 + 1 };
            let (lo, hi) = (mag * (1.0 - fo), mag * fo);
            for (r, wy) in [(r0, 1.0 - fy), (r0 + 1, fy)] {
                for (c, wx) in [(c0, 1.0 - fx), (c0 + 1, fx)] {
                    let wgt = wy * wx;
                    let bin = &mut padded[r * pc + c];
                    bin[o0] += lo * wgt;
                    bin[o1] += hi * wgt;
                }
            }
        }
    }
    let bins = (0..rows)
        .flat_map(|r| padded[(r + 1) * pc + 1..(r + 1) * pc + 1 + cols].to_vec())
        .collect();
    Ok(OrientationHistograms { rows, cols, bins })
}

/// 31-channel HOG maps on a `⌊h / cell⌋ × ⌊w / cell⌋` grid.
pub fn compute_hog(patch: &Patch, cell: usize) -> Result<Vec<RealGrid>> {
    let hist = orientation_histograms(patch, cell)?;
    let (rows, cols) = (hist.rows, hist.cols);
    let energy = RealGrid::from_fn(rows, cols, |r, c| hist.energy(r, c));
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut out = vec![RealGrid::zeros(rows, cols); HOG_CHANNELS];
    for r in 0..rows {
        for c in 0..cols {
            // the four 2x2 blocks containing this cell
            let mut norms = [0.0; 4];
            for (k, (dr, dc)) in [(-1, -1), (-1, 0), (0, -1), (0, 0)].into_iter().enumerate() {
                let mut e = 0.0;
                for (br, bc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let rr = clamp(r as isize + dr + br, rows);
                    let cc = clamp(c as isize + dc + bc, cols);
                    e += energy[(rr, cc)];
                }
                norms[k] = 1.0 / (e + NORM_EPS).sqrt();
            }
            let h = hist.cell(r, c);
            let mut texture = [0.0; 4];
            for o in 0..ORIENTATIONS {
                let mut sum = 0.0;
                for (k, n) in norms.iter().enumerate() {
                    let v = (h[o] * n).min(TRUNCATION);
                    sum += v;
                    texture[k] += v;
                }
                out[o][(r, c)] = 0.5 * sum;
            }
            for o in 0..ORIENTATIONS / 2 {
                let s = h[o] + h[o + 9];
                let sum: f64 = norms.iter().map(|n| (s * n).min(TRUNCATION)).sum();
                out[ORIENTATIONS + o][(r, c)] = 0.5 * sum;
            }
            for k in 0..4 {
                out[27 + k][(r, c)] = TEXTURE_SCALE * texture[k];
            }
        }
    }
    Ok(out)
}
