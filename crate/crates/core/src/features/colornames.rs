//! Color-name features: an 11-way probability lookup over a 15-bit quantized RGB cube,
//! averaged over cells.

use std::path::Path;
use std::sync::OnceLock;

use super::image::Patch;
use crate::error::{Error, Result};
use crate::spectral::RealGrid;

pub const COLOR_NAMES: [&str; 11] = [
    "black", "blue", "brown", "grey", "green", "orange", "pink", "purple", "red", "white", "yellow",
];
pub const CN_CHANNELS: usize = 11;
pub const TABLE_ROWS: usize = 32 * 32 * 32;
pub const TABLE_BYTES: usize = TABLE_ROWS * CN_CHANNELS * 4;

static EMBEDDED: &[u8] = include_bytes!("../../assets/colornames.bin");

/// sRGB prototypes of the eleven names, in table column order.
const PROTOTYPES: [[f64; 3]; CN_CHANNELS] = [
    [0.0, 0.0, 0.0],
    [30.0, 60.0, 210.0],
    [120.0, 70.0, 30.0],
    [128.0, 128.0, 128.0],
    [40.0, 160.0, 40.0],
    [255.0, 140.0, 0.0],
    [255.0, 150.0, 190.0],
    [130.0, 40.0, 150.0],
    [220.0, 20.0, 20.0],
    [255.0, 255.0, 255.0],
    [255.0, 230.0, 0.0],
];
/// Softmax temperature on CIELAB distance.
const TEMPERATURE: f64 = 15.0;

/// 32768 × 11 probability table indexed by `(r>>3)<<10 | (g>>3)<<5 | (b>>3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorNameTable {
    rows: Vec<[f32; CN_CHANNELS]>,
}

fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = |v: f64| {
        let v = v / 255.0;
        if v <= 0.04045 {
            v / 12.92
        } else {
            ((v + 0.055) / 1.055).powf(2.4)
        }
    };
    let (r, g, b) = (lin(rgb[0]), lin(rgb[1]), lin(rgb[2]));
    let x = (0.4124 * r + 0.3576 * g + 0.1805 * b) / 0.95047;
    let y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    let z = (0.0193 * r + 0.1192 * g + 0.9505 * b) / 1.08883;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

impl ColorNameTable {
    pub fn index(r: u8, g: u8, b: u8) -> usize {
        ((r as usize >> 3) << 10) | ((g as usize >> 3) << 5) | (b as usize >> 3)
    }

    /// Generate the table: each quantized color's bin center gets a softmax over negative
    /// squared CIELAB distances to the name prototypes.
    pub fn synthesize() -> Self {
        let protos: Vec<[f64; 3]> = PROTOTYPES.iter().map(|&p| srgb_to_lab(p)).collect();
        let rows = (0..TABLE_ROWS)
            .map(|idx| {
                let center = |q: usize| (q * 8 + 4) as f64;
                let lab =
                    srgb_to_lab([center(idx >> 10), center((idx >> 5) & 31), center(idx & 31)]);
                let d2: Vec<f64> = protos
                    .iter()
                    .map(|p| (0..3).map(|k| (lab[k] - p[k]).powi(2)).sum())
                    .collect();
                let best = d2.iter().cloned().fold(f64::INFINITY, f64::min);
                let e: Vec<f64> = d2
                    .iter()
                    .map(|d| (-(d - best) / (2.0 * TEMPERATURE * TEMPERATURE)).exp())
                    .collect();
                let total: f64 = e.iter().sum();
                let mut row = [0f32; CN_CHANNELS];
                for (r, v) in row.iter_mut().zip(&e) {
                    *r = (v / total) as f32;
                }
                row
            })
            .collect();
        Self { rows }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != TABLE_BYTES {
            return Err(Error::Config(format!(
                "color-name table must be {TABLE_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let rows = bytes
            .chunks_exact(CN_CHANNELS * 4)
            .map(|chunk| {
                let mut row = [0f32; CN_CHANNELS];
                for (r, b) in row.iter_mut().zip(chunk.chunks_exact(4)) {
                    *r = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
                }
                row
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::Config(format!(
                "cannot read color-name table {}: {e}",
                path.display()
            ))
        })?;
        Self::from_bytes(&bytes)
    }

    /// The table bundled with the crate.
    pub fn embedded() -> &'static Self {
        static TABLE: OnceLock<ColorNameTable> = OnceLock::new();
        TABLE.get_or_init(|| Self::from_bytes(EMBEDDED).expect("bundled table is well formed"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.rows
            .iter()
            .flat_map(|row| row.iter().flat_map(|v| v.to_le_bytes()))
            .collect()
    }

    pub fn lookup(&self, r: u8, g: u8, b: u8) -> &[f32; CN_CHANNELS] {
        &self.rows[Self::index(r, g, b)]
    }
}

/// Cell-averaged color-name probabilities, or `None` for single-channel patches.
pub fn compute_colornames(
    patch: &Patch,
    cell: usize,
    table: &ColorNameTable,
) -> Result<Option<Vec<RealGrid>>> {
    if !patch.is_color() {
        return Ok(None);
    }
    if cell == 0 {
        return Err(Error::invalid("cell size must be positive"));
    }
    let (rows, cols) = (patch.height / cell, patch.width / cell);
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("patch smaller than one cell"));
    }
    let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let inv = 1.0 / (cell * cell) as f64;
    let mut acc = vec![[0.0_f64; CN_CHANNELS]; rows * cols];
    for y in 0..rows * cell {
        let line = &patch.data[y * patch.width * 3..];
        let cells = &mut acc[(y / cell) * cols..(y / cell + 1) * cols];
        for (x, px) in line.chunks_exact(3).take(cols * cell).enumerate() {
            let probs = table.lookup(q(px[0]), q(px[1]), q(px[2]));
            for (a, &p) in cells[x / cell].iter_mut().zip(probs) {
                *a += p as f64;
            }
        }
    }
    let out = (0..CN_CHANNELS)
        .map(|k| RealGrid::from_fn(rows, cols, |r, c| acc[r * cols + c][k] * inv))
        .collect();
    Ok(Some(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argmax(row: &[f32; CN_CHANNELS]) -> usize {
        (0..CN_CHANNELS)
            .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
            .unwrap()
    }

    #[test]
    fn embedded_matches_generator() {
        assert_eq!(ColorNameTable::embedded(), &ColorNameTable::synthesize());
    }

    #[test]
    fn rows_are_distributions() {
        let t = ColorNameTable::embedded();
        for row in &t.rows {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn primary_colors_named() {
        let t = ColorNameTable::embedded();
        let name = |r, g, b| COLOR_NAMES[argmax(t.lookup(r, g, b))];
        assert_eq!(name(255, 0, 0), "red");
        assert_eq!(name(0, 0, 0), "black");
        assert_eq!(name(255, 255, 255), "white");
        assert_eq!(name(128, 128, 128), "grey");
        assert_eq!(name(255, 255, 0), "yellow");
        assert_eq!(name(0, 0, 255), "blue");
        assert_eq!(name(0, 170, 0), "green");
    }

    #[test]
    fn index_layout() {
        assert_eq!(ColorNameTable::index(255, 0, 0), 31 << 10);
        assert_eq!(ColorNameTable::index(0, 255, 0), 31 << 5);
        assert_eq!(ColorNameTable::index(0, 0, 255), 31);
        assert_eq!(ColorNameTable::index(7, 7, 7), 0);
    }

    #[test]
    fn solid_red_patch() {
        let patch = Patch {
            width: 8,
            height: 8,
            channels: 3,
            data: [255.0, 0.0, 0.0].repeat(64),
        };
        let t = ColorNameTable::embedded();
        let cn = compute_colornames(&patch, 4, t).unwrap().unwrap();
        let red = COLOR_NAMES.iter().position(|&n| n == "red").unwrap();
        for (k, g) in cn.iter().enumerate() {
            for &v in g.as_slice() {
                assert!((v - t.lookup(255, 0, 0)[k] as f64).abs() < 1e-12);
            }
        }
        assert!(cn[red].as_slice().iter().all(|&v| v > 0.5));
    }

    #[test]
    fn gray_patch_skipped_and_bad_file_rejected() {
        let patch = Patch {
            width: 4,
            height: 4,
            channels: 1,
            data: vec![10.0; 16],
        };
        assert!(compute_colornames(&patch, 4, ColorNameTable::embedded())
            .unwrap()
            .is_none());
        assert!(matches!(
            ColorNameTable::from_file(Path::new("/nonexistent/w2c.bin")),
            Err(Error::Config(_))
        ));
        assert!(ColorNameTable::from_bytes(&[0u8; 12]).is_err());
    }
}
