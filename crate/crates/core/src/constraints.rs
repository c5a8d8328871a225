//! Label, crop mask, spatial regularizer and the pooling equality constraints.
//!
//! All grids here live in the filter frame: the target center sits at cell `(0, 0)` and
//! offsets wrap around, so "centered" means centered on the origin.
//!
//! ROI average pooling with an `e×e` kernel is equivalent to forcing the filter weights
//! inside each kernel to share one value. The constraint set lists every unordered pair
//! of cells within a kernel; `V w` stacks the pairwise differences `w(i) - w(j)`.

use crate::error::{Error, Result};
use crate::spectral::{wrapped_offset, RealGrid};

/// Desired Gaussian-shaped response, peaked at the origin.
#[derive(Clone, Debug)]
pub struct GaussianLabel {
    pub y: RealGrid,
    pub sigma: f64,
}

/// `y(m, n) = exp(-(m̃² + ñ²) / (2σ²))` with `σ = sigma_factor · √(h·w)`.
pub fn build_label(
    dims: (usize, usize),
    target_cells: (usize, usize),
    sigma_factor: f64,
) -> Result<GaussianLabel> {
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::invalid("label grid must be non-empty"));
    }
    if target_cells.0 > dims.0 || target_cells.1 > dims.1 {
        return Err(Error::invalid(format!(
            "target {target_cells:?} exceeds grid {dims:?}"
        )));
    }
    let sigma = sigma_factor * ((target_cells.0 * target_cells.1) as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::invalid("label bandwidth must be positive"));
    }
    let denom = 2.0 * sigma * sigma;
    let y = RealGrid::from_fn(dims.0, dims.1, |m, n| {
        let dm = wrapped_offset(m, dims.0) as f64;
        let dn = wrapped_offset(n, dims.1) as f64;
        (-(dm * dm + dn * dn) / denom).exp()
    });
    Ok(GaussianLabel { y, sigma })
}

/// Binary mask selecting the filter coefficients of the target region.
#[derive(Clone, Debug)]
pub struct CropMask {
    pub p: RealGrid,
    /// Target extent requested, in cells.
    pub target_cells: (usize, usize),
    /// Extent after padding to a multiple of the kernel size.
    pub padded_cells: (usize, usize),
    /// Pooling kernel extent along each axis (1 along singleton axes).
    pub kernel_shape: (usize, usize),
    /// Number of nonzero cells.
    pub nonzeros: usize,
    /// The padded extent had to be clipped to fit the grid.
    pub clipped: bool,
}

impl CropMask {
    pub fn dims(&self) -> (usize, usize) {
        self.p.dims()
    }

    /// Grid indices covered by the mask along one axis, from the most negative offset up.
    fn axis_indices(extent: usize, n: usize) -> Vec<usize> {
        let start = -((extent / 2) as isize);
        (0..extent as isize)
            .map(|k| (start + k).rem_euclid(n as isize) as usize)
            .collect()
    }

    pub fn row_indices(&self) -> Vec<usize> {
        Self::axis_indices(self.padded_cells.0, self.p.rows())
    }

    pub fn col_indices(&self) -> Vec<usize> {
        Self::axis_indices(self.padded_cells.1, self.p.cols())
    }
}

fn kernel_extent(axis_len: usize, e: usize) -> usize {
    if axis_len == 1 {
        1
    } else {
        e
    }
}

fn padded_extent(target: usize, dim: usize, kernel: usize) -> Result<(usize, bool)> {
    if kernel > dim {
        return Err(Error::invalid(format!(
            "pooling kernel {kernel} larger than grid axis {dim}"
        )));
    }
    let padded = target.div_ceil(kernel) * kernel;
    if padded > dim {
        Ok(((dim / kernel) * kernel, true))
    } else {
        Ok((padded, false))
    }
}

/// Centered rectangle of ones, each side rounded up to a multiple of `e`.
pub fn build_mask(
    dims: (usize, usize),
    target_cells: (usize, usize),
    e: usize,
) -> Result<CropMask> {
    if e == 0 {
        return Err(Error::invalid("pooling kernel size must be at least 1"));
    }
    if target_cells.0 == 0 || target_cells.1 == 0 {
        return Err(Error::invalid("target must cover at least one cell"));
    }
    if target_cells.0 > dims.0 || target_cells.1 > dims.1 {
        return Err(Error::invalid(format!(
            "target {target_cells:?} exceeds grid {dims:?}"
        )));
    }
    let kernel_shape = (kernel_extent(dims.0, e), kernel_extent(dims.1, e));
    let (ph, clip_r) = padded_extent(target_cells.0, dims.0, kernel_shape.0)?;
    let (pw, clip_c) = padded_extent(target_cells.1, dims.1, kernel_shape.1)?;
    let clipped = clip_r || clip_c;
    if clipped {
        log::warn!("padded target {ph}x{pw} clipped to grid {dims:?}");
    }
    let mut p = RealGrid::zeros(dims.0, dims.1);
    let rows = CropMask::axis_indices(ph, dims.0);
    let cols = CropMask::axis_indices(pw, dims.1);
    for &r in &rows {
        for &c in &cols {
            p[(r, c)] = 1.0;
        }
    }
    Ok(CropMask {
        p,
        target_cells,
        padded_cells: (ph, pw),
        kernel_shape,
        nonzeros: ph * pw,
        clipped,
    })
}

/// Quadratic-bowl spatial regularization weights.
#[derive(Clone, Debug)]
pub struct SpatialRegularizer {
    pub g: RealGrid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizerParams {
    pub g_min: f64,
    pub g_slope: f64,
}

impl Default for RegularizerParams {
    fn default() -> Self {
        Self {
            g_min: 0.1,
            g_slope: 3.0,
        }
    }
}

/// `g(m, n) = g_min + g_slope · ((m̃/h)² + (ñ/w)²)`.
pub fn build_regularizer(
    dims: (usize, usize),
    target_cells: (usize, usize),
    params: RegularizerParams,
) -> Result<SpatialRegularizer> {
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::invalid("regularizer grid must be non-empty"));
    }
    if target_cells.0 == 0 || target_cells.1 == 0 {
        return Err(Error::invalid("target must cover at least one cell"));
    }
    if !(params.g_min > 0.0) || params.g_slope < 0.0 {
        return Err(Error::invalid(
            "regularizer requires g_min > 0 and g_slope >= 0",
        ));
    }
    let (h, w) = (target_cells.0 as f64, target_cells.1 as f64);
    let g = RealGrid::from_fn(dims.0, dims.1, |m, n| {
        let a = wrapped_offset(m, dims.0) as f64 / h;
        let b = wrapped_offset(n, dims.1) as f64 / w;
        params.g_min + params.g_slope * (a * a + b * b)
    });
    Ok(SpatialRegularizer { g })
}

/// Within-kernel index pairs `(i_η, j_η)` on linear cell indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintPairSet {
    dims: (usize, usize),
    pairs: Vec<(usize, usize)>,
    kernels: Vec<Vec<usize>>,
    kernel_shape: (usize, usize),
}

impl ConstraintPairSet {
    /// Pair set from explicit pairs; each pair becomes its own two-cell kernel.
    pub fn from_pairs(dims: (usize, usize), pairs: Vec<(usize, usize)>) -> Result<Self> {
        let n = dims.0 * dims.1;
        for &(i, j) in &pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::invalid(format!(
                    "invalid constraint pair ({i}, {j})"
                )));
            }
        }
        let kernels = pairs.iter().map(|&(i, j)| vec![i, j]).collect();
        Ok(Self {
            dims,
            pairs,
            kernels,
            kernel_shape: (1, 2),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of constraints `K`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Cells of each pooling kernel, top-left first.
    pub fn kernels(&self) -> &[Vec<usize>] {
        &self.kernels
    }

    pub fn kernel_shape(&self) -> (usize, usize) {
        self.kernel_shape
    }

    /// Kernel-mean pooled features `U v / |kernel|`.
    pub fn pool_average(&self, v: &RealGrid) -> Vec<f64> {
        let data = v.as_slice();
        self.kernels
            .iter()
            .map(|k| k.iter().map(|&i| data[i]).sum::<f64>() / k.len() as f64)
            .collect()
    }

    /// Pooled-space weights `w'` such that a constraint-satisfying `w` equals `Uᵀw' / |kernel|`.
    pub fn pooled_weights(&self, w: &RealGrid) -> Vec<f64> {
        let data = w.as_slice();
        self.kernels
            .iter()
            .map(|k| k.iter().map(|&i| data[i]).sum::<f64>())
            .collect()
    }

    /// Replace every kernel by its mean value (projection onto the constraint set).
    pub fn project(&self, w: &RealGrid) -> RealGrid {
        let mut out = w.clone();
        let data = out.as_mut_slice();
        for k in &self.kernels {
            let mean = k.iter().map(|&i| w.as_slice()[i]).sum::<f64>() / k.len() as f64;
            for &i in k {
                data[i] = mean;
            }
        }
        out
    }

    /// `max_η |w(i_η) - w(j_η)| / (max|w| + 1e-12)`.
    pub fn relative_residual(&self, w: &RealGrid) -> f64 {
        let worst = apply_v(self, w)
            .into_iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        worst / (w.max_abs() + 1e-12)
    }
}

/// Number of constraints for a 1-D mask of `nonzeros` cells: `C(e, 2) · (⌊(L - e)/e⌋ + 1)`.
pub fn one_dimensional_count(nonzeros: usize, e: usize) -> usize {
    if e < 2 || nonzeros < e {
        return 0;
    }
    e * (e - 1) / 2 * ((nonzeros - e) / e + 1)
}

/// Tile the mask's nonzero region with disjoint kernels and list all within-kernel pairs.
pub fn build_constraint_pairs(mask: &CropMask, e: usize) -> Result<ConstraintPairSet> {
    let dims = mask.dims();
    let kernel_shape = (kernel_extent(dims.0, e), kernel_extent(dims.1, e));
    let (ph, pw) = mask.padded_cells;
    if ph % kernel_shape.0 != 0 || pw % kernel_shape.1 != 0 {
        return Err(Error::invalid(format!(
            "masked region {ph}x{pw} not divisible by kernel {kernel_shape:?}"
        )));
    }
    let rows = mask.row_indices();
    let cols = mask.col_indices();
    let mut kernels = Vec::new();
    let mut pairs = Vec::new();
    for kr in (0..ph).step_by(kernel_shape.0) {
        for kc in (0..pw).step_by(kernel_shape.1) {
            let mut cells = Vec::with_capacity(kernel_shape.0 * kernel_shape.1);
            for r in &rows[kr..kr + kernel_shape.0] {
                for c in &cols[kc..kc + kernel_shape.1] {
                    cells.push(r * dims.1 + c);
                }
            }
            for a in 0..cells.len() {
                for b in a + 1..cells.len() {
                    let (i, j) = (cells[a].min(cells[b]), cells[a].max(cells[b]));
                    pairs.push((i, j));
                }
            }
            kernels.push(cells);
        }
    }
    pairs.sort_unstable();
    Ok(ConstraintPairSet {
        dims,
        pairs,
        kernels,
        kernel_shape,
    })
}

/// `V w`: the η-th entry is `w(i_η) - w(j_η)`.
pub fn apply_v(pairs: &ConstraintPairSet, w: &RealGrid) -> Vec<f64> {
    let data = w.as_slice();
    pairs
        .pairs
        .iter()
        .map(|&(i, j)| data[i] - data[j])
        .collect()
}

/// `Vᵀ z`: scatter `+z_η` to `i_η` and `-z_η` to `j_η`.
pub fn apply_vt(pairs: &ConstraintPairSet, z: &[f64]) -> Result<RealGrid> {
    if z.len() != pairs.len() {
        return Err(Error::invalid(format!(
            "multiplier length {} does not match {} constraints",
            z.len(),
            pairs.len()
        )));
    }
    let mut out = RealGrid::zeros(pairs.dims.0, pairs.dims.1);
    let data = out.as_mut_slice();
    for (&(i, j), &v) in pairs.pairs.iter().zip(z) {
        data[i] += v;
        data[j] -= v;
    }
    Ok(out)
}

/// `VᵀV w`, accumulated pair by pair.
pub fn apply_vtv(pairs: &ConstraintPairSet, w: &RealGrid) -> RealGrid {
    let src = w.as_slice();
    let mut out = RealGrid::zeros(pairs.dims.0, pairs.dims.1);
    let data = out.as_mut_slice();
    for &(i, j) in &pairs.pairs {
        let d = src[i] - src[j];
        data[i] += d;
        data[j] -= d;
    }
    out
}
