//! Feature extraction: HOG, color names and intensity, PCA-compressed, windowed and
//! energy-normalized into a multi-channel stack on the cell grid.

pub mod colornames;
pub mod hog;
pub mod image;
pub mod pca;

use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

pub use self::colornames::{compute_colornames, ColorNameTable, COLOR_NAMES};
pub use self::hog::{compute_hog, orientation_histograms, OrientationHistograms, HOG_CHANNELS};
pub use self::image::{extract_patch, Frame, Patch};
pub use self::pca::{fit_pca, project, GroupBasis, PcaProjection};

use crate::error::{Error, Result};
use crate::spectral::RealGrid;

/// Which penalty schedule a channel follows in the solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PenaltyGroup {
    /// Semantic channels (color names).
    High,
    /// Gradient and intensity channels.
    Low,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelGroup {
    pub name: String,
    pub range: Range<usize>,
    pub penalty: PenaltyGroup,
}

/// Equally sized channels on one cell grid, partitioned into contiguous groups.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack {
    pub channels: Vec<RealGrid>,
    /// Pixels per cell edge at the canonical patch resolution.
    pub cell_size: usize,
    pub groups: Vec<ChannelGroup>,
}

impl FeatureStack {
    pub fn new(
        channels: Vec<RealGrid>,
        cell_size: usize,
        groups: Vec<ChannelGroup>,
    ) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("feature stack needs at least one channel"))?;
        let dims = first.dims();
        if let Some(bad) = channels.iter().find(|c| c.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: bad.dims(),
            });
        }
        let mut next = 0;
        for g in &groups {
            if g.range.start != next || g.range.is_empty() {
                return Err(Error::invalid(format!(
                    "group {} is not contiguous",
                    g.name
                )));
            }
            next = g.range.end;
        }
        if next != channels.len() {
            return Err(Error::invalid("groups do not cover every channel"));
        }
        Ok(Self {
            channels,
            cell_size,
            groups,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().map(RealGrid::norm_sqr).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.channels.iter_mut().for_each(|c| c.scale_in_place(s));
    }

    /// Penalty group of every channel, in channel order.
    pub fn channel_penalties(&self) -> Vec<PenaltyGroup> {
        let mut out = Vec::with_capacity(self.len());
        for g in &self.groups {
            out.extend(std::iter::repeat_n(g.penalty, g.range.len()));
        }
        out
    }

    /// Circularly shift every channel by `(dr, dc)` cells.
    pub fn circular_shift(&self, dr: isize, dc: isize) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|c| c.circular_shift(dr, dc))
                .collect(),
            cell_size: self.cell_size,
            groups: self.groups.clone(),
        }
    }
}

/// Feature-map pooling applied after extraction (ablation variants only).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapPooling {
    None,
    Average(usize),
    Max(usize),
}

impl MapPooling {
    pub fn factor(&self) -> usize {
        match *self {
            MapPooling::None => 1,
            MapPooling::Average(k) | MapPooling::Max(k) => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub cell_size: usize,
    pub use_hog: bool,
    pub use_colornames: bool,
    pub hog_dims: usize,
    pub cn_dims: usize,
    pub pooling: MapPooling,
    /// Squared magnitude the reference stack is scaled to; see
    /// [`FeatureExtractor::normalization_gain`].
    pub energy: f64,
    /// Optional external color-name table; the bundled one is used otherwise.
    pub colornames_path: Option<PathBuf>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            cell_size: 4,
            use_hog: true,
            use_colornames: true,
            hog_dims: 10,
            cn_dims: 3,
            pooling: MapPooling::None,
            energy: 1.0,
            colornames_path: None,
        }
    }
}

/// Separable Hann window with zero endpoints.
pub fn hann_window(rows: usize, cols: usize) -> RealGrid {
    let hann = |n: usize| -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        (0..n)
            .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (n - 1) as f64).cos()))
            .collect()
    };
    let (hr, hc) = (hann(rows), hann(cols));
    RealGrid::from_fn(rows, cols, |r, c| hr[r] * hc[c])
}

/// Non-overlapping `k × k` pooling; trailing rows and columns that do not fill a block
/// are dropped.
pub fn pool_map(grid: &RealGrid, pooling: MapPooling) -> Result<RealGrid> {
    let k = pooling.factor();
    if k == 0 {
        return Err(Error::invalid("pooling factor must be positive"));
    }
    if k == 1 {
        return Ok(grid.clone());
    }
    let (rows, cols) = (grid.rows() / k, grid.cols() / k);
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("grid smaller than one pooling block"));
    }
    Ok(RealGrid::from_fn(rows, cols, |r, c| {
        let block = (0..k).flat_map(|i| (0..k).map(move |j| (r * k + i, c * k + j)));
        match pooling {
            MapPooling::Max(_) => block.map(|p| grid[p]).fold(f64::NEG_INFINITY, f64::max),
            _ => block.map(|p| grid[p]).sum::<f64>() / (k * k) as f64,
        }
    }))
}

/// Cell-mean intensity in [-0.5, 0.5].
fn intensity_cells(patch: &Patch, cell: usize) -> RealGrid {
    let (rows, cols) = (patch.height / cell, patch.width / cell);
    let mut out = RealGrid::zeros(rows, cols);
    let inv = 1.0 / (cell * cell * patch.channels) as f64 / 255.0;
    for y in 0..rows * cell {
        for x in 0..cols * cell {
            let v: f64 = (0..patch.channels).map(|c| patch.get(x, y, c)).sum();
            out[(y / cell, x / cell)] += v * inv;
        }
    }
    out.map(|v| v - 0.5)
}

/// Turns patches into finished feature stacks.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    config: FeatureConfig,
    table: Arc<ColorNameTable>,
}

impl FeatureExtractor {
    pub fn new(config: FeatureConfig) -> Result<Self> {
        if config.cell_size == 0 {
            return Err(Error::Config("cell_size must be positive".into()));
        }
        if !(config.energy > 0.0) {
            return Err(Error::Config("feature energy must be positive".into()));
        }
        if config.hog_dims == 0 || config.hog_dims > HOG_CHANNELS {
            return Err(Error::Config(format!(
                "hog_dims must be in 1..={HOG_CHANNELS}"
            )));
        }
        if config.cn_dims == 0 || config.cn_dims > colornames::CN_CHANNELS {
            return Err(Error::Config("cn_dims must be in 1..=11".into()));
        }
        let table = match &config.colornames_path {
            Some(path) => Arc::new(ColorNameTable::from_file(path)?),
            None => Arc::new(ColorNameTable::embedded().clone()),
        };
        Ok(Self { config, table })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    /// Grid edge in canonical pixels after map pooling.
    pub fn stride(&self) -> usize {
        self.config.cell_size * self.config.pooling.factor()
    }

    /// Uncompressed channels of a patch. Color names are used for three-channel patches,
    /// a single intensity channel otherwise.
    pub fn raw_features(&self, patch: &Patch) -> Result<FeatureStack> {
        let cell = self.config.cell_size;
        let mut channels = Vec::new();
        let mut groups = Vec::new();
        let mut push = |name: &str, maps: Vec<RealGrid>, penalty, channels: &mut Vec<RealGrid>| {
            let start = channels.len();
            channels.extend(maps);
            groups.push(ChannelGroup {
                name: name.to_string(),
                range: start..channels.len(),
                penalty,
            });
        };
        if self.config.use_hog {
            push(
                "hog",
                compute_hog(patch, cell)?,
                PenaltyGroup::Low,
                &mut channels,
            );
        }
        let cn = if self.config.use_colornames {
            compute_colornames(patch, cell, &self.table)?
        } else {
            None
        };
        match cn {
            Some(maps) => push("cn", maps, PenaltyGroup::High, &mut channels),
            None => {
                if patch.height / cell == 0 || patch.width / cell == 0 {
                    return Err(Error::invalid("patch smaller than one cell"));
                }
                push(
                    "gray",
                    vec![intensity_cells(patch, cell)],
                    PenaltyGroup::Low,
                    &mut channels,
                )
            }
        }
        FeatureStack::new(channels, cell, groups)
    }

    /// Output dimension of every group of `raw`.
    pub fn kept_dims(&self, raw: &FeatureStack) -> Vec<usize> {
        raw.groups
            .iter()
            .map(|g| match g.name.as_str() {
                "hog" => self.config.hog_dims.min(g.range.len()),
                "cn" => self.config.cn_dims.min(g.range.len()),
                _ => g.range.len(),
            })
            .collect()
    }

    pub fn fit_projection(&self, raw: &FeatureStack) -> Result<PcaProjection> {
        fit_pca(std::slice::from_ref(raw), &self.kept_dims(raw))
    }

    /// Project, pool and window a raw stack.
    pub fn finish(&self, raw: &FeatureStack, projection: &PcaProjection) -> Result<FeatureStack> {
        let projected = project(raw, projection)?;
        let pooled: Vec<RealGrid> = projected
            .channels
            .iter()
            .map(|c| pool_map(c, self.config.pooling))
            .collect::<Result<_>>()?;
        let (rows, cols) = pooled[0].dims();
        let window = hann_window(rows, cols);
        let channels: Vec<RealGrid> = pooled.iter().map(|c| c.hadamard(&window)).collect();
        FeatureStack::new(channels, self.stride(), projected.groups)
    }

    /// Gain that scales `reference` to the configured energy. A tracker fixes it on the
    /// first frame and applies the same gain to every later stack, at every scale.
    pub fn normalization_gain(&self, reference: &FeatureStack) -> f64 {
        let energy = reference.energy();
        if energy > 0.0 {
            (self.config.energy / energy).sqrt()
        } else {
            1.0
        }
    }

    /// Raw extraction followed by [`finish`](Self::finish).
    pub fn build(&self, patch: &Patch, projection: &PcaProjection) -> Result<FeatureStack> {
        self.finish(&self.raw_features(patch)?, projection)
    }
}
