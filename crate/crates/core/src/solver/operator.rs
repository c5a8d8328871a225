//! Matrix-free action of the normal-equation operator
//! `Σ_t μ_t Â^t + F V̄ᵀV̄ F⁻¹ + λ ĜᴴĜ` and its right-hand side.
//!
//! Mask and regularizer products go through the convolution theorem (spatial
//! multiplication), and `VᵀV` is a pair-wise scatter. No dense Toeplitz matrix is formed.

use super::cg::LinearOperator;
use super::TrainingProblem;
use crate::constraints::{apply_vt, apply_vtv, ConstraintPairSet, CropMask, SpatialRegularizer};
use crate::error::{Error, Result};
use crate::memory::SampleMemory;
use crate::spectral::{
    fill_hermitian, forward_unchecked, half_cols, inverse_unchecked, mask_multiply_unchecked,
    Complex64, RealGrid, Spectrum,
};

fn check_block(u: &[Spectrum], channels: usize, dims: (usize, usize)) -> Result<()> {
    if u.len() != channels {
        return Err(Error::invalid(format!(
            "expected {channels} channel spectra, got {}",
            u.len()
        )));
    }
    for s in u {
        if s.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: s.dims(),
            });
        }
    }
    Ok(())
}

fn memory_layout(memory: &SampleMemory) -> Result<(usize, (usize, usize))> {
    memory.layout().ok_or(Error::EmptyMemory)
}

/// `Σ_t μ_t conj(x̂_d^t) ⊙ s^t` with `s^t = Σ_j x̂_j^t ⊙ m̂_j`, for every channel `d`.
/// Only the leading half of each row is computed; the rest follows by symmetry.
fn correlate_samples(memory: &SampleMemory, masked: &[Spectrum]) -> Vec<Spectrum> {
    let (rows, cols) = masked[0].dims();
    let half = half_cols(cols);
    let mut acc = vec![Spectrum::zeros(rows, cols); masked.len()];
    let mut s = vec![Complex64::new(0.0, 0.0); half];
    for sample in memory.samples() {
        for r in 0..rows {
            let span = r * cols..r * cols + half;
            s.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (x, m) in sample.spectra.iter().zip(masked) {
                let (x, m) = (&x.as_slice()[span.clone()], &m.as_slice()[span.clone()]);
                for ((sv, xv), mv) in s.iter_mut().zip(x).zip(m) {
                    *sv += xv * mv;
                }
            }
            for (a, x) in acc.iter_mut().zip(&sample.spectra) {
                let a = &mut a.as_mut_slice()[span.clone()];
                for ((av, xv), sv) in a.iter_mut().zip(&x.as_slice()[span.clone()]).zip(&s) {
                    *av += sample.weight * xv.conj() * sv;
                }
            }
        }
    }
    acc.iter_mut().for_each(fill_hermitian);
    acc
}

/// Data term `Σ_t μ_t P̂ᴴ X̂_tᴴ Σ_j X̂_j^t P̂ û_j`.
pub fn apply_data_term(
    memory: &SampleMemory,
    mask: &CropMask,
    u: &[Spectrum],
) -> Result<Vec<Spectrum>> {
    let (channels, dims) = memory_layout(memory)?;
    check_block(u, channels, dims)?;
    if mask.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: mask.dims(),
        });
    }
    let masked: Vec<Spectrum> = u
        .iter()
        .map(|v| mask_multiply_unchecked(&mask.p, v))
        .collect();
    Ok(correlate_samples(memory, &masked)
        .iter()
        .map(|a| mask_multiply_unchecked(&mask.p, a))
        .collect())
}

/// Constraint term `γ_d F VᵀV F⁻¹ û_d`.
pub fn apply_constraint_term(
    pairs: &ConstraintPairSet,
    gamma: &[f64],
    u: &[Spectrum],
) -> Result<Vec<Spectrum>> {
    check_block(u, gamma.len(), pairs.dims())?;
    Ok(u.iter()
        .zip(gamma)
        .map(|(v, &g)| {
            let mut vtv = apply_vtv(pairs, &inverse_unchecked(v));
            vtv.scale_in_place(g);
            forward_unchecked(&vtv)
        })
        .collect())
}

/// Regularization term `λ F (g ⊙ g ⊙ F⁻¹ û_d)`.
pub fn apply_reg_term(
    regularizer: &SpatialRegularizer,
    lambda: f64,
    u: &[Spectrum],
) -> Result<Vec<Spectrum>> {
    let dims = regularizer.g.dims();
    check_block(u, u.len(), dims)?;
    let weight = regularizer.g.hadamard(&regularizer.g).map(|v| lambda * v);
    Ok(u.iter()
        .map(|v| forward_unchecked(&inverse_unchecked(v).hadamard(&weight)))
        .collect())
}

/// Right-hand side `b_d = Σ_t μ_t P̂ᴴ (conj(x̂_d^t) ⊙ ŷ) - F Vᵀ ξ_d`.
pub fn build_rhs(
    memory: &SampleMemory,
    mask: &CropMask,
    pairs: &ConstraintPairSet,
    xi: &[Vec<f64>],
    label_hat: &Spectrum,
) -> Result<Vec<Spectrum>> {
    let (channels, dims) = memory_layout(memory)?;
    if xi.len() != channels {
        return Err(Error::invalid(format!(
            "expected {channels} multiplier vectors, got {}",
            xi.len()
        )));
    }
    if label_hat.dims() != dims || mask.dims() != dims {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: label_hat.dims(),
        });
    }
    let (rows, cols) = dims;
    let half = half_cols(cols);
    let mut acc = vec![Spectrum::zeros(rows, cols); channels];
    for sample in memory.samples() {
        for (a, x) in acc.iter_mut().zip(&sample.spectra) {
            for r in 0..rows {
                let span = r * cols..r * cols + half;
                for ((av, xv), yv) in a.as_mut_slice()[span.clone()]
                    .iter_mut()
                    .zip(&x.as_slice()[span.clone()])
                    .zip(&label_hat.as_slice()[span])
                {
                    *av += sample.weight * xv.conj() * yv;
                }
            }
        }
    }
    acc.iter_mut().for_each(fill_hermitian);
    acc.iter()
        .zip(xi)
        .map(|(a, z)| {
            let mut b = mask_multiply_unchecked(&mask.p, a);
            if !z.is_empty() {
                let vt = forward_unchecked(&apply_vt(pairs, z)?);
                b.axpy(Complex64::new(-1.0, 0.0), &vt);
            }
            Ok(b)
        })
        .collect()
}

/// The full normal-equation operator for one ADMM step.
pub struct NormalSystem<'a> {
    memory: &'a SampleMemory,
    problem: &'a TrainingProblem,
    lambda: f64,
    gamma: &'a [f64],
}

impl<'a> NormalSystem<'a> {
    pub fn new(
        memory: &'a SampleMemory,
        problem: &'a TrainingProblem,
        lambda: f64,
        gamma: &'a [f64],
    ) -> Result<Self> {
        let (channels, dims) = memory_layout(memory)?;
        if channels != problem.channels() || gamma.len() != channels {
            return Err(Error::invalid(format!(
                "channel count mismatch: memory {channels}, problem {}, penalties {}",
                problem.channels(),
                gamma.len()
            )));
        }
        if dims != problem.dims() {
            return Err(Error::DimensionMismatch {
                expected: problem.dims(),
                actual: dims,
            });
        }
        Ok(Self {
            memory,
            problem,
            lambda,
            gamma,
        })
    }
}

impl LinearOperator for NormalSystem<'_> {
    /// Fused evaluation: four transforms per channel regardless of the number of samples.
    fn apply(&self, u: &[Spectrum]) -> Result<Vec<Spectrum>> {
        let dims = self.problem.dims();
        check_block(u, self.gamma.len(), dims)?;
        let mask = &self.problem.mask.p;
        let spatial: Vec<RealGrid> = u.iter().map(inverse_unchecked).collect();
        let masked: Vec<Spectrum> = spatial
            .iter()
            .map(|s| forward_unchecked(&s.hadamard(mask)))
            .collect();
        let acc = correlate_samples(self.memory, &masked);
        Ok(acc
            .iter()
            .zip(&spatial)
            .zip(self.gamma)
            .map(|((a, s), &gamma)| {
                let data = inverse_unchecked(a);
                let vtv = apply_vtv(&self.problem.pairs, s);
                let combined: Vec<f64> = data
                    .as_slice()
                    .iter()
                    .zip(mask.as_slice())
                    .zip(self.problem.reg_sq.as_slice())
                    .zip(s.as_slice())
                    .zip(vtv.as_slice())
                    .map(|((((d, m), g2), sv), c)| d * m + self.lambda * g2 * sv + gamma * c)
                    .collect();
                forward_unchecked(
                    &RealGrid::from_vec(dims.0, dims.1, combined).expect("dims match"),
                )
            })
            .collect())
    }
}
