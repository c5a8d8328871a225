//! Preconditioner-free conjugate-gradient solver for Hermitian positive semidefinite
//! operators acting on blocks of spectra.
//!
//! The iteration is the conjugate-residual form of CG: each step length minimizes the
//! residual norm along the search direction, so `‖r‖` never increases, even when the first
//! direction is carried over from a previous solve.

use crate::error::{Error, Result};
use crate::spectral::{Complex64, Spectrum};

pub trait LinearOperator {
    fn apply(&self, x: &[Spectrum]) -> Result<Vec<Spectrum>>;
}

/// Search direction and its curvature `⟨r, Ar⟩` left by a finished solve.
#[derive(Clone, Debug)]
pub struct CgDirection {
    pub direction: Vec<Spectrum>,
    pub rho: f64,
}

#[derive(Clone, Debug)]
pub struct CgReport {
    pub solution: Vec<Spectrum>,
    pub iterations: usize,
    /// Relative residual `‖b - A x₀‖ / ‖b‖` before the first step.
    pub initial_residual: f64,
    /// Relative residuals, starting with the initial one.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub direction: Option<CgDirection>,
}

fn dot(a: &[Spectrum], b: &[Spectrum]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.inner(y).re).sum()
}

fn norm(a: &[Spectrum]) -> f64 {
    a.iter().map(Spectrum::norm_sqr).sum::<f64>().sqrt()
}

/// `y += s · x`
fn axpy(y: &mut [Spectrum], s: f64, x: &[Spectrum]) {
    for (a, b) in y.iter_mut().zip(x) {
        a.axpy(Complex64::new(s, 0.0), b);
    }
}

/// `y = x + s · y`
fn xpay(y: &mut [Spectrum], s: f64, x: &[Spectrum]) {
    for (a, b) in y.iter_mut().zip(x) {
        for (av, bv) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
            *av = bv + *av * s;
        }
    }
}

/// Solve `A x = b` from `x0` (zeros when `None`), stopping after `max_iters` steps or
/// when the relative residual falls below `tol`.
pub fn cg_solve(
    op: &dyn LinearOperator,
    rhs: &[Spectrum],
    x0: Option<Vec<Spectrum>>,
    warm_direction: Option<&CgDirection>,
    max_iters: usize,
    tol: f64,
) -> Result<CgReport> {
    let mut x = match x0 {
        Some(x) => {
            if x.len() != rhs.len() || x.iter().zip(rhs).any(|(a, b)| a.dims() != b.dims()) {
                return Err(Error::invalid(
                    "initial guess does not match right-hand side",
                ));
            }
            x
        }
        None => rhs
            .iter()
            .map(|s| Spectrum::zeros(s.rows(), s.cols()))
            .collect(),
    };
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        let zeros = rhs
            .iter()
            .map(|s| Spectrum::zeros(s.rows(), s.cols()))
            .collect();
        return Ok(CgReport {
            solution: zeros,
            iterations: 0,
            initial_residual: 0.0,
            residuals: vec![0.0],
            converged: true,
            direction: None,
        });
    }

    let mut r: Vec<Spectrum> = rhs.to_vec();
    if x.iter().any(|s| s.max_abs() > 0.0) {
        let ax = op.apply(&x)?;
        axpy(&mut r, -1.0, &ax);
    }
    let initial_residual = norm(&r) / b_norm;
    let mut residuals = vec![initial_residual];
    if !initial_residual.is_finite() {
        return Err(Error::SolverNonFinite { iteration: 0 });
    }
    if initial_residual < tol || max_iters == 0 {
        return Ok(CgReport {
            solution: x,
            iterations: 0,
            initial_residual,
            residuals,
            converged: initial_residual < tol,
            direction: warm_direction.cloned(),
        });
    }

    let ar = op.apply(&r)?;
    let mut rho = dot(&r, &ar);
    let (mut p, mut ap) = match warm_direction {
        Some(warm) if warm.rho > 0.0 && warm.direction.len() == r.len() => {
            let mut p = warm.direction.clone();
            xpay(&mut p, rho / warm.rho, &r);
            let ap = op.apply(&p)?;
            (p, ap)
        }
        _ => (r.clone(), ar),
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let denom = dot(&ap, &ap);
        if !(denom > 0.0) || !(rho > 0.0) {
            break;
        }
        let step = dot(&ap, &r) / denom;
        axpy(&mut x, step, &p);
        axpy(&mut r, -step, &ap);
        iterations += 1;

        let res = norm(&r) / b_norm;
        if !res.is_finite() || !step.is_finite() {
            return Err(Error::SolverNonFinite {
                iteration: iterations,
            });
        }
        residuals.push(res);
        if res < tol {
            converged = true;
            break;
        }
        if iterations == max_iters {
            break;
        }

        let ar = op.apply(&r)?;
        let rho_next = dot(&r, &ar);
        let beta = rho_next / rho;
        rho = rho_next;
        xpay(&mut p, beta, &r);
        xpay(&mut ap, beta, &ar);
    }

    Ok(CgReport {
        solution: x,
        iterations,
        initial_residual,
        residuals,
        converged,
        direction: Some(CgDirection { direction: p, rho }),
    })
}
