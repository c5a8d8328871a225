//! Two-dimensional DFT utilities shared by the solver, the features and the tracker.
//!
//! Convention: the forward transform is unnormalized and the inverse carries the
//! `1/(H·W)` factor, so `‖x‖² = ‖x̂‖² / (H·W)`. Spectra are stored in full (no
//! half-spectrum packing), row-major, with bin `(0, 0)` holding the DC term.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Index, IndexMut};

use rustfft::{FftDirection, FftPlanner};

pub use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used when checking Hermitian symmetry before an inverse transform.
pub const HERMITIAN_TOLERANCE: f64 = 1e-6;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Real-valued grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "grid data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// First non-finite entry, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite {
                row: i / self.cols,
                col: i % self.cols,
            }),
            None => Ok(()),
        }
    }

    pub fn dot(&self, other: &RealGrid) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealGrid {
        RealGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise product; panics on dimension mismatch.
    pub fn hadamard(&self, other: &RealGrid) -> RealGrid {
        assert_eq!(self.dims(), other.dims());
        RealGrid {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `out(r, c) = self((r - dr) mod H, (c - dc) mod W)`, i.e. content moves by `(dr, dc)`.
    pub fn circular_shift(&self, dr: isize, dc: isize) -> RealGrid {
        let (h, w) = (self.rows as isize, self.cols as isize);
        RealGrid::from_fn(self.rows, self.cols, |r, c| {
            let sr = (r as isize - dr).rem_euclid(h) as usize;
            let sc = (c as isize - dc).rem_euclid(w) as usize;
            self.data[sr * self.cols + sc]
        })
    }
}

impl Index<(usize, usize)> for RealGrid {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for RealGrid {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Complex 2-D spectrum, full (unpacked) storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "spectrum data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// `Σ conj(self) · other`.
    pub fn inner(&self, other: &Spectrum) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn hadamard(&self, other: &Spectrum) -> Spectrum {
        assert_eq!(self.dims(), other.dims());
        Spectrum {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn conj(&self) -> Spectrum {
        Spectrum {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += factor · other`.
    pub fn axpy(&mut self, factor: Complex64, other: &Spectrum) {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += factor * b);
    }

    /// Largest relative violation of `X(u, v) = conj(X(-u, -v))` and the bin where it occurs.
    pub fn hermitian_deviation(&self) -> (f64, (usize, usize)) {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut worst = (0.0, (0, 0));
        for r in 0..self.rows {
            let mr = (self.rows - r) % self.rows;
            for c in 0..self.cols {
                let mc = (self.cols - c) % self.cols;
                let dev = (self[(r, c)] - self[(mr, mc)].conj()).norm() / scale;
                if dev > worst.0 {
                    worst = (dev, (r, c));
                }
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Spectrum {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Spectrum {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Transform the first `count` columns of a row-major block in one batch.
fn column_pass(
    planner: &mut FftPlanner<f64>,
    data: &mut [Complex64],
    (rows, cols): (usize, usize),
    count: usize,
    direction: FftDirection,
) {
    if rows < 2 || count == 0 {
        return;
    }
    let mut t = vec![ZERO; rows * count];
    for r in 0..rows {
        for (c, &v) in data[r * cols..r * cols + count].iter().enumerate() {
            t[c * rows + r] = v;
        }
    }
    planner.plan_fft(rows, direction).process(&mut t);
    for r in 0..rows {
        for (c, v) in data[r * cols..r * cols + count].iter_mut().enumerate() {
            *v = t[c * rows + r];
        }
    }
}

fn fft2_in_place(data: &mut [Complex64], rows: usize, cols: usize, direction: FftDirection) {
    if rows == 0 || cols == 0 {
        return;
    }
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        if cols > 1 {
            planner.plan_fft(cols, direction).process(data);
        }
        column_pass(&mut planner, data, (rows, cols), cols, direction);
    });
}

pub(crate) fn forward_unchecked(x: &RealGrid) -> Spectrum {
    let (rows, cols) = x.dims();
    let mut data = vec![ZERO; rows * cols];
    if data.is_empty() {
        return Spectrum { rows, cols, data };
    }
    let half = half_cols(cols);
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        // Two real rows per complex transform: a + ib.
        let pairs = rows / 2;
        let mut z = vec![ZERO; rows.div_ceil(2) * cols];
        for p in 0..pairs {
            let a = &x.data[2 * p * cols..(2 * p + 1) * cols];
            let b = &x.data[(2 * p + 1) * cols..(2 * p + 2) * cols];
            for (c, v) in z[p * cols..(p + 1) * cols].iter_mut().enumerate() {
                *v = Complex64::new(a[c], b[c]);
            }
        }
        if rows % 2 == 1 {
            let a = &x.data[(rows - 1) * cols..];
            for (v, &re) in z[pairs * cols..].iter_mut().zip(a) {
                *v = Complex64::new(re, 0.0);
            }
        }
        planner
            .plan_fft(cols, FftDirection::Forward)
            .process(&mut z);
        for p in 0..pairs {
            let zp = &z[p * cols..(p + 1) * cols];
            for k in 0..half {
                let (zk, zm) = (zp[k], zp[(cols - k) % cols].conj());
                let d = zk - zm;
                data[2 * p * cols + k] = (zk + zm) * 0.5;
                data[(2 * p + 1) * cols + k] = Complex64::new(d.im * 0.5, -d.re * 0.5);
            }
        }
        if rows % 2 == 1 {
            data[(rows - 1) * cols..(rows - 1) * cols + half]
                .copy_from_slice(&z[pairs * cols..pairs * cols + half]);
        }
        column_pass(
            &mut planner,
            &mut data,
            (rows, cols),
            half,
            FftDirection::Forward,
        );
    });
    let mut s = Spectrum { rows, cols, data };
    fill_hermitian(&mut s);
    s
}

/// Complex inverse transform including the `1/(H·W)` factor.
pub(crate) fn inverse_complex(x: &Spectrum) -> Spectrum {
    let mut data = x.data.clone();
    fft2_in_place(&mut data, x.rows, x.cols, FftDirection::Inverse);
    let norm = 1.0 / (x.rows * x.cols) as f64;
    data.iter_mut().for_each(|v| *v *= norm);
    Spectrum {
        rows: x.rows,
        cols: x.cols,
        data,
    }
}

pub(crate) fn forward_complex(x: &Spectrum) -> Spectrum {
    let mut data = x.data.clone();
    fft2_in_place(&mut data, x.rows, x.cols, FftDirection::Forward);
    Spectrum {
        rows: x.rows,
        cols: x.cols,
        data,
    }
}

/// Real part of the inverse transform, without the symmetry check.
pub(crate) fn inverse_unchecked(x: &Spectrum) -> RealGrid {
    let (rows, cols) = x.dims();
    let mut out = vec![0.0; rows * cols];
    if out.is_empty() {
        return RealGrid {
            rows,
            cols,
            data: out,
        };
    }
    let half = half_cols(cols);
    // The real part only sees the Hermitian part of the spectrum.
    let mut h = vec![ZERO; rows * cols];
    for r in 0..rows {
        let mr = (rows - r) % rows;
        for c in 0..half {
            let mc = (cols - c) % cols;
            h[r * cols + c] = (x.data[r * cols + c] + x.data[mr * cols + mc].conj()) * 0.5;
        }
    }
    let norm = 1.0 / (rows * cols) as f64;
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        column_pass(
            &mut planner,
            &mut h,
            (rows, cols),
            half,
            FftDirection::Inverse,
        );
        // Each row is now the spectrum of a real row; two rows per complex transform.
        let pairs = rows.div_ceil(2);
        let mut z = vec![ZERO; pairs * cols];
        for p in 0..pairs {
            let a = &h[2 * p * cols..(2 * p + 1) * cols];
            let b = (2 * p + 1 < rows).then(|| &h[(2 * p + 1) * cols..(2 * p + 2) * cols]);
            for (c, v) in z[p * cols..(p + 1) * cols].iter_mut().enumerate() {
                let (ac, bc) = if c < half {
                    (a[c], b.map_or(ZERO, |b| b[c]))
                } else {
                    (a[cols - c].conj(), b.map_or(ZERO, |b| b[cols - c].conj()))
                };
                *v = ac + Complex64::new(-bc.im, bc.re);
            }
        }
        planner
            .plan_fft(cols, FftDirection::Inverse)
            .process(&mut z);
        for (r, row) in out.chunks_mut(cols).enumerate() {
            let zp = &z[(r / 2) * cols..(r / 2 + 1) * cols];
            for (o, v) in row.iter_mut().zip(zp) {
                *o = if r % 2 == 0 { v.re } else { v.im } * norm;
            }
        }
    });
    RealGrid {
        rows,
        cols,
        data: out,
    }
}

/// Unnormalized forward 2-D DFT of a finite real grid.
pub fn forward(x: &RealGrid) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::invalid("cannot transform an empty grid"));
    }
    x.check_finite()?;
    Ok(forward_unchecked(x))
}

/// Inverse 2-D DFT of a Hermitian-symmetric spectrum.
///
/// Fails with the offending bin when the spectrum is not the transform of a real grid.
pub fn inverse(x: &Spectrum) -> Result<RealGrid> {
    if x.is_empty() {
        return Err(Error::invalid("cannot transform an empty spectrum"));
    }
    let (deviation, (row, col)) = x.hermitian_deviation();
    if deviation > HERMITIAN_TOLERANCE {
        return Err(Error::NotHermitian {
            row,
            col,
            deviation,
        });
    }
    Ok(inverse_unchecked(x))
}

fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

/// Circular convolution `(a * b)(m, n) = Σ a(p, q) b(m - p, n - q)`, evaluated spectrally.
pub fn circular_convolve(a: &RealGrid, b: &RealGrid) -> Result<RealGrid> {
    ensure_same_dims(a.dims(), b.dims())?;
    let product = forward(a)?.hadamard(&forward(b)?);
    inverse(&product)
}

/// `F(m ⊙ F⁻¹ v̂)`: the action of the Toeplitz matrix built from `m̂` (scaled by `1/(H·W)`)
/// on `v̂`, computed through the convolution theorem.
pub fn spectral_mask_multiply(m: &RealGrid, v: &Spectrum) -> Result<Spectrum> {
    ensure_same_dims(m.dims(), v.dims())?;
    Ok(mask_multiply_unchecked(m, v))
}

pub(crate) fn mask_multiply_unchecked(m: &RealGrid, v: &Spectrum) -> Spectrum {
    let mut spatial = inverse_complex(v);
    spatial
        .data
        .iter_mut()
        .zip(&m.data)
        .for_each(|(s, &mv)| *s *= mv);
    forward_complex(&spatial)
}

/// Number of leading columns that determine a Hermitian spectrum.
pub(crate) fn half_cols(cols: usize) -> usize {
    cols / 2 + 1
}

/// Weight of column `c` when a sum over the full plane is taken over the leading half:
/// self-mirrored columns count once, the others twice.
pub(crate) fn half_weight(c: usize, cols: usize) -> f64 {
    if c == 0 || 2 * c == cols {
        1.0
    } else {
        2.0
    }
}

/// Overwrite the trailing columns with the conjugate mirror of the leading half.
pub(crate) fn fill_hermitian(s: &mut Spectrum) {
    let (rows, cols) = s.dims();
    for r in 0..rows {
        let mr = (rows - r) % rows;
        for c in half_cols(cols)..cols {
            s.data[r * cols + c] = s.data[mr * cols + (cols - c)].conj();
        }
    }
}

/// Signed offset of index `i` on a circle of length `n`, in `(-n/2, n/2]`.
pub fn wrapped_offset(i: usize, n: usize) -> isize {
    let i = i as isize;
    let n = n as isize;
    if 2 * i > n {
        i - n
    } else {
        i
    }
}

/// Wrap a fractional coordinate into `(-n/2, n/2]`.
pub fn wrap_fractional(v: f64, n: usize) -> f64 {
    let n = n as f64;
    let mut w = v.rem_euclid(n);
    if w > n / 2.0 {
        w -= n;
    }
    w
}

/// Peak of a response map located on the trigonometric interpolant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub dy: f64,
    pub dx: f64,
    pub value: f64,
    /// Set when the map is flat and the peak is meaningless.
    pub degenerate: bool,
}

/// Frequency terms of one axis of the trigonometric interpolant: `(bin, signed frequency, weight)`.
/// For even lengths the Nyquist bin is split evenly between `±n/2` so the interpolant stays real.
fn axis_terms(n: usize) -> Vec<(usize, f64, f64)> {
    let mut terms = Vec::with_capacity(n + 1);
    for k in 0..n {
        if n.is_multiple_of(2) && 2 * k == n {
            terms.push((k, (n / 2) as f64, 0.5));
            terms.push((k, -((n / 2) as f64), 0.5));
        } else {
            terms.push((k, wrapped_offset(k, n) as f64, 1.0));
        }
    }
    terms
}

struct Interpolant {
    rows: usize,
    cols: usize,
    spectrum: Spectrum,
    row_terms: Vec<(usize, f64, f64)>,
    col_terms: Vec<(usize, f64, f64)>,
}

impl Interpolant {
    fn new(spectrum: Spectrum) -> Self {
        let (rows, cols) = spectrum.dims();
        Self {
            rows,
            cols,
            row_terms: axis_terms(rows),
            col_terms: axis_terms(cols),
            spectrum,
        }
    }

    /// Value, gradient `(fy, fx)` and Hessian `(fyy, fxx, fxy)` at `(y, x)`.
    fn eval(&self, y: f64, x: f64) -> (f64, [f64; 2], [f64; 3]) {
        let norm = 1.0 / (self.rows * self.cols) as f64;
        // Σ_l c_kl e^{iθ_l(x)} and its first two x-derivatives, per row bin k.
        let col_phase: Vec<(usize, Complex64, f64)> = self
            .col_terms
            .iter()
            .map(|&(l, f, w)| {
                let b = 2.0 * PI * f / self.cols as f64;
                (l, Complex64::from_polar(w, b * x), b)
            })
            .collect();
        let mut inner = vec![[Complex64::new(0.0, 0.0); 3]; self.rows];
        for (k, acc) in inner.iter_mut().enumerate() {
            for &(l, e, b) in &col_phase {
                let v = self.spectrum[(k, l)] * e;
                acc[0] += v;
                acc[1] += v * Complex64::new(0.0, b);
                acc[2] += v * (-b * b);
            }
        }
        let (mut f, mut fy, mut fx, mut fyy, mut fxx, mut fxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for &(k, fr, w) in &self.row_terms {
            let a = 2.0 * PI * fr / self.rows as f64;
            let e = Complex64::from_polar(w, a * y);
            let [s0, s1, s2] = inner[k];
            f += (e * s0).re;
            fy += (e * s0 * Complex64::new(0.0, a)).re;
            fyy += (e * s0).re * (-a * a);
            fx += (e * s1).re;
            fxy += (e * s1 * Complex64::new(0.0, a)).re;
            fxx += (e * s2).re;
        }
        (
            f * norm,
            [fy * norm, fx * norm],
            [fyy * norm, fxx * norm, fxy * norm],
        )
    }

    fn value(&self, y: f64, x: f64) -> f64 {
        self.eval(y, x).0
    }
}

/// Zero-padded spectral upsampling of a real grid by an integer factor.
fn upsample(spectrum: &Spectrum, factor: usize) -> RealGrid {
    let (rows, cols) = spectrum.dims();
    let (up_rows, up_cols) = (rows * factor, cols * factor);
    let mut padded = Spectrum::zeros(up_rows, up_cols);
    let row_terms = axis_terms(rows);
    let col_terms = axis_terms(cols);
    for &(k, fk, wk) in &row_terms {
        let pr = (fk as isize).rem_euclid(up_rows as isize) as usize;
        for &(l, fl, wl) in &col_terms {
            let pc = (fl as isize).rem_euclid(up_cols as isize) as usize;
            padded[(pr, pc)] += spectrum[(k, l)] * (wk * wl);
        }
    }
    let gain = (factor * factor) as f64;
    let full = inverse_complex(&padded);
    RealGrid {
        rows: up_rows,
        cols: up_cols,
        data: full.data.iter().map(|v| v.re * gain).collect(),
    }
}

/// Locate the maximum of the trigonometric interpolant of `r`.
///
/// A coarse search on a grid upsampled by `upsample` is followed by up to `newton_iters`
/// Newton steps on the interpolant. Offsets are wrapped to `(-H/2, H/2] × (-W/2, W/2]`.
pub fn subpixel_peak(r: &RealGrid, upsample_factor: usize, newton_iters: usize) -> Result<Peak> {
    if r.is_empty() {
        return Err(Error::invalid("empty response map"));
    }
    if upsample_factor == 0 {
        return Err(Error::invalid("upsample factor must be at least 1"));
    }
    r.check_finite()?;
    let (rows, cols) = r.dims();
    let max = r.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = r.data.iter().cloned().fold(f64::INFINITY, f64::min);
    if max - min <= 1e-12 * max.abs().max(1.0) {
        return Ok(Peak {
            dy: 0.0,
            dx: 0.0,
            value: r[(0, 0)],
            degenerate: true,
        });
    }

    let spectrum = forward_unchecked(r);
    let fine = if upsample_factor == 1 {
        r.clone()
    } else {
        upsample(&spectrum, upsample_factor)
    };
    let step = 1.0 / upsample_factor as f64;

    // Coarse argmax; ties go to the smallest wrapped offset in row-major order.
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for i in 0..fine.rows {
        for j in 0..fine.cols {
            let v = fine[(i, j)];
            let y = wrap_fractional(i as f64 * step, rows);
            let x = wrap_fractional(j as f64 * step, cols);
            let dist = y * y + x * x;
            best = match best {
                None => Some((v, y, x, dist)),
                Some(b) if v > b.0 || (v == b.0 && dist < b.3) => Some((v, y, x, dist)),
                keep => keep,
            };
        }
    }
    let (mut value, mut y, mut x, _) = best.expect("non-empty grid");

    let interp = Interpolant::new(spectrum);
    if newton_iters > 0 {
        value = interp.value(y, x);
    }
    for _ in 0..newton_iters {
        let (_, g, h) = interp.eval(y, x);
        let [hyy, hxx, hxy] = h;
        let det = hyy * hxx - hxy * hxy;
        // Newton only where the interpolant is locally concave.
        if !(hyy < 0.0 && det > 0.0) {
            break;
        }
        let mut sy = -(hxx * g[0] - hxy * g[1]) / det;
        let mut sx = -(-hxy * g[0] + hyy * g[1]) / det;
        let len = (sy * sy + sx * sx).sqrt();
        if len > step {
            sy *= step / len;
            sx *= step / len;
        }
        let candidate = interp.value(y + sy, x + sx);
        if candidate < value {
            break;
        }
        y += sy;
        x += sx;
        value = candidate;
        if len < 1e-4 {
            break;
        }
    }

    Ok(Peak {
        dy: wrap_fractional(y, rows),
        dx: wrap_fractional(x, cols),
        value,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rows: usize, cols: usize, seed: u64) -> RealGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RealGrid::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Direct O(N²) DFT.
    fn naive_dft(x: &RealGrid) -> Spectrum {
        let (h, w) = x.dims();
        let mut out = Spectrum::zeros(h, w);
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..h {
                    for n in 0..w {
                        let phase =
                            -2.0 * PI * ((u * m) as f64 / h as f64 + (v * n) as f64 / w as f64);
                        acc += Complex64::from_polar(x[(m, n)], phase);
                    }
                }
                out[(u, v)] = acc;
            }
        }
        out
    }

    #[test]
    fn zeros_transform_to_zeros() {
        let s = forward(&RealGrid::zeros(4, 4)).unwrap();
        assert!(s.as_slice().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn delta_transforms_to_constant() {
        let mut x = RealGrid::zeros(4, 4);
        x[(0, 0)] = 1.0;
        let s = forward(&x).unwrap();
        for v in s.as_slice() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let back = inverse(&s).unwrap();
        assert!((back[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(back.as_slice()[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn parseval_against_direct_dft() {
        let x = random_grid(8, 8, 3);
        let fast = forward(&x).unwrap();
        let slow = naive_dft(&x);
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).norm() < 1e-10);
        }
        let lhs = x.norm_sqr();
        let rhs = slow.norm_sqr() / 64.0;
        assert!((lhs - rhs).abs() <= 1e-10 * lhs);
    }

    #[test]
    fn matches_direct_dft_on_odd_and_degenerate_shapes() {
        for (i, (h, w)) in [(1, 1), (1, 7), (7, 1), (5, 6), (6, 5), (3, 3), (2, 9)]
            .into_iter()
            .enumerate()
        {
            let x = random_grid(h, w, 10 + i as u64);
            let slow = naive_dft(&x);
            for (a, b) in forward(&x).unwrap().as_slice().iter().zip(slow.as_slice()) {
                assert!((a - b).norm() < 1e-10, "{h}x{w}");
            }
            let back = inverse(&slow).unwrap();
            for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
                assert!((a - b).abs() < 1e-12, "{h}x{w}");
            }
        }
    }

    #[test]
    fn real_part_of_non_hermitian_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (h, w) in [(4, 4), (5, 3), (1, 6)] {
            let data = (0..h * w)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let s = Spectrum::from_vec(h, w, data).unwrap();
            let full = inverse_complex(&s);
            for (a, b) in inverse_unchecked(&s).as_slice().iter().zip(full.as_slice()) {
                assert!((a - b.re).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip() {
        let x = random_grid(8, 8, 4);
        let back = inverse(&forward(&x).unwrap()).unwrap();
        let err: f64 = x
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-10 * x.norm_sqr().sqrt());
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut x = RealGrid::zeros(3, 3);
        x[(1, 2)] = f64::NAN;
        assert!(matches!(
            forward(&x),
            Err(Error::NonFinite { row: 1, col: 2 })
        ));
    }

    #[test]
    fn asymmetric_spectrum_rejected() {
        let mut s = Spectrum::zeros(4, 4);
        s[(1, 1)] = Complex64::new(1.0, 0.0);
        match inverse(&s) {
            Err(Error::NotHermitian { row, col, .. }) => {
                assert!((row, col) == (1, 1) || (row, col) == (3, 3))
            }
            other => panic!("expected symmetry error, got {other:?}"),
        }
    }

    #[test]
    fn convolve_with_delta_is_identity() {
        let a = random_grid(5, 6, 5);
        let mut d = RealGrid::zeros(5, 6);
        d[(0, 0)] = 1.0;
        let out = circular_convolve(&a, &d).unwrap();
        for (x, y) in a.as_slice().iter().zip(out.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_one_dimensional_shift() {
        let a = RealGrid::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = RealGrid::from_vec(1, 4, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let out = circular_convolve(&a, &k).unwrap();
        let expected = [4.0, 1.0, 2.0, 3.0];
        for (x, y) in out.as_slice().iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_matches_direct_sum() {
        let a = random_grid(6, 6, 6);
        let b = random_grid(6, 6, 7);
        let fast = circular_convolve(&a, &b).unwrap();
        let direct = RealGrid::from_fn(6, 6, |m, n| {
            let mut acc = 0.0;
            for p in 0..6 {
                for q in 0..6 {
                    acc += a[(p, q)] * b[((m + 6 - p) % 6, (n + 6 - q) % 6)];
                }
            }
            acc
        });
        let scale = direct.max_abs();
        for (x, y) in fast.as_slice().iter().zip(direct.as_slice()) {
            assert!((x - y).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn convolve_rejects_mismatch() {
        assert!(matches!(
            circular_convolve(&RealGrid::zeros(2, 2), &RealGrid::zeros(2, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mask_identity_and_zero() {
        let v = forward(&random_grid(4, 4, 8)).unwrap();
        let same = spectral_mask_multiply(&RealGrid::filled(4, 4, 1.0), &v).unwrap();
        for (a, b) in same.as_slice().iter().zip(v.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
        let zero = spectral_mask_multiply(&RealGrid::zeros(4, 4), &v).unwrap();
        assert!(zero.max_abs() == 0.0);
    }

    #[test]
    fn mask_multiply_matches_dense_toeplitz() {
        let n = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = RealGrid::from_fn(1, n, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let v = forward(&random_grid(1, n, 10)).unwrap();
        let m_hat = naive_dft(&m);
        let fast = spectral_mask_multiply(&m, &v).unwrap();
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += m_hat[(0, (n + i - j) % n)] * v[(0, j)];
            }
            acc /= n as f64;
            assert!((acc - fast[(0, i)]).norm() <= 1e-8 * v.max_abs().max(1.0));
        }
    }

    #[test]
    fn subpixel_on_grid_delta() {
        let mut r = RealGrid::zeros(8, 8);
        r[(2, 3)] = 1.0;
        let p = subpixel_peak(&r, 4, 5).unwrap();
        assert!(!p.degenerate);
        assert!((p.dy - 2.0).abs() < 1e-9, "{p:?}");
        assert!((p.dx - 3.0).abs() < 1e-9, "{p:?}");
        assert!(p.value >= 1.0 - 1e-9);
    }

    #[test]
    fn subpixel_cosine_peak() {
        let n = 16;
        let w = 2.0 * PI / n as f64;
        let r = RealGrid::from_fn(n, n, |m, k| {
            (w * (m as f64 - 1.5)).cos() + (w * (k as f64 - 0.25)).cos()
        });
        let p = subpixel_peak(&r, 4, 5).unwrap();
        assert!((p.dy - 1.5).abs() < 1e-3, "{p:?}");
        assert!((p.dx - 0.25).abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn subpixel_wraps_negative_offsets() {
        let mut r = RealGrid::zeros(8, 8);
        r[(7, 6)] = 1.0;
        let p = subpixel_peak(&r, 4, 5).unwrap();
        assert!(
            (p.dy + 1.0).abs() < 1e-9 && (p.dx + 2.0).abs() < 1e-9,
            "{p:?}"
        );
    }

    #[test]
    fn subpixel_flat_map_is_degenerate() {
        let p = subpixel_peak(&RealGrid::filled(6, 6, 0.3), 4, 5).unwrap();
        assert!(p.degenerate);
        assert_eq!((p.dy, p.dx), (0.0, 0.0));
    }

    #[test]
    fn wrapped_offsets() {
        assert_eq!(wrapped_offset(0, 8), 0);
        assert_eq!(wrapped_offset(4, 8), 4);
        assert_eq!(wrapped_offset(5, 8), -3);
        assert_eq!(wrapped_offset(2, 5), 2);
        assert_eq!(wrapped_offset(3, 5), -2);
        assert_eq!(wrap_fractional(7.5, 8), -0.5);
        assert_eq!(wrap_fractional(4.0, 8), 4.0);
    }
}
