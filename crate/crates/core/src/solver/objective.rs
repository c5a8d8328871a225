use super::{SpectralFilter, TrainingProblem};
use crate::error::{Error, Result};
use crate::memory::SampleMemory;
use crate::spectral::{
    half_cols, half_weight, inverse, mask_multiply_unchecked, Complex64, RealGrid, Spectrum,
};

/// Loss of one filter on one sample, with the constraint violation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveValue {
    /// `½‖y - Σ_d (p ⊙ w_d) * x_d‖² + λ/2 Σ_d ‖g ⊙ w_d‖²`, summed in the spatial domain.
    pub loss: f64,
    /// The same quantity evaluated from spectra.
    pub fourier_loss: f64,
    /// Worst relative within-kernel discrepancy.
    pub constraint_residual: f64,
}

/// Direct O(N²) circular convolution.
fn convolve_direct(a: &RealGrid, b: &RealGrid) -> RealGrid {
    let (h, w) = a.dims();
    RealGrid::from_fn(h, w, |m, n| {
        let mut acc = 0.0;
        for p in 0..h {
            let row = (m + h - p) % h;
            for q in 0..w {
                acc += a[(p, q)] * b[(row, (n + w - q) % w)];
            }
        }
        acc
    })
}

fn check_sample(
    filter: &SpectralFilter,
    sample: &[Spectrum],
    problem: &TrainingProblem,
) -> Result<()> {
    if filter.len() != sample.len() || filter.len() != problem.channels() {
        return Err(Error::invalid(format!(
            "channel mismatch: filter {}, sample {}, problem {}",
            filter.len(),
            sample.len(),
            problem.channels()
        )));
    }
    for s in filter.channels.iter().chain(sample) {
        if s.dims() != problem.dims() {
            return Err(Error::DimensionMismatch {
                expected: problem.dims(),
                actual: s.dims(),
            });
        }
    }
    Ok(())
}

fn reg_fourier(filter: &SpectralFilter, problem: &TrainingProblem, lambda: f64) -> f64 {
    let n = (problem.dims().0 * problem.dims().1) as f64;
    let reg: f64 = filter
        .channels
        .iter()
        .map(|w| mask_multiply_unchecked(&problem.regularizer.g, w).norm_sqr())
        .sum();
    0.5 * lambda * reg / n
}

fn data_fourier(masked: &[Spectrum], sample: &[Spectrum], label_hat: &Spectrum) -> f64 {
    let (rows, cols) = label_hat.dims();
    let half = half_cols(cols);
    let mut residual = vec![Complex64::new(0.0, 0.0); half];
    let mut total = 0.0;
    for r in 0..rows {
        let span = r * cols..r * cols + half;
        residual.copy_from_slice(&label_hat.as_slice()[span.clone()]);
        for (x, m) in sample.iter().zip(masked) {
            let (x, m) = (&x.as_slice()[span.clone()], &m.as_slice()[span.clone()]);
            for ((e, xv), mv) in residual.iter_mut().zip(x).zip(m) {
                *e -= xv * mv;
            }
        }
        total += residual
            .iter()
            .enumerate()
            .map(|(c, e)| half_weight(c, cols) * e.norm_sqr())
            .sum::<f64>();
    }
    0.5 * total / label_hat.len() as f64
}

/// Single-sample loss computed entirely from spectra (Parseval form).
pub fn objective_fourier(
    filter: &SpectralFilter,
    sample: &[Spectrum],
    problem: &TrainingProblem,
    lambda: f64,
) -> Result<f64> {
    check_sample(filter, sample, problem)?;
    let masked: Vec<Spectrum> = filter
        .channels
        .iter()
        .map(|w| mask_multiply_unchecked(&problem.mask.p, w))
        .collect();
    Ok(data_fourier(&masked, sample, &problem.label_hat) + reg_fourier(filter, problem, lambda))
}

/// Sample-weighted loss over the whole memory, from spectra.
pub fn weighted_objective(
    memory: &SampleMemory,
    problem: &TrainingProblem,
    filter: &SpectralFilter,
    lambda: f64,
) -> Result<f64> {
    if memory.is_empty() {
        return Err(Error::EmptyMemory);
    }
    let masked: Vec<Spectrum> = filter
        .channels
        .iter()
        .map(|w| mask_multiply_unchecked(&problem.mask.p, w))
        .collect();
    let data: f64 = memory
        .samples()
        .iter()
        .map(|s| s.weight * data_fourier(&masked, &s.spectra, &problem.label_hat))
        .sum();
    Ok(data + reg_fourier(filter, problem, lambda))
}

/// Evaluate the loss in the spatial domain (direct convolution sums) and cross-check it
/// against the spectral evaluation.
pub fn objective_eval(
    filter: &SpectralFilter,
    sample: &[Spectrum],
    problem: &TrainingProblem,
    lambda: f64,
) -> Result<ObjectiveValue> {
    check_sample(filter, sample, problem)?;
    let (h, w) = problem.dims();
    let weights: Vec<RealGrid> = filter.channels.iter().map(inverse).collect::<Result<_>>()?;
    let features: Vec<RealGrid> = sample.iter().map(inverse).collect::<Result<_>>()?;
    let mut residual = problem.label.y.clone();
    for (wd, xd) in weights.iter().zip(&features) {
        let response = convolve_direct(&wd.hadamard(&problem.mask.p), xd);
        residual
            .as_mut_slice()
            .iter_mut()
            .zip(response.as_slice())
            .for_each(|(r, v)| *r -= v);
    }
    let reg: f64 = weights
        .iter()
        .map(|wd| wd.hadamard(&problem.regularizer.g).norm_sqr())
        .sum();
    let loss = 0.5 * residual.norm_sqr() + 0.5 * lambda * reg;
    debug_assert_eq!(residual.dims(), (h, w));
    let constraint_residual = weights
        .iter()
        .map(|wd| problem.pairs.relative_residual(wd))
        .fold(0.0, f64::max);
    Ok(ObjectiveValue {
        loss,
        fourier_loss: objective_fourier(filter, sample, problem, lambda)?,
        constraint_residual,
    })
}
