//! Fourier-domain training of the constrained filter.
//!
//! The augmented Lagrangian is minimized by alternating a conjugate-gradient solve of the
//! normal equations in `ŵ` with a multiplier step on `ξ` and a geometric penalty increase.

mod admm;
mod cg;
mod objective;
mod operator;

pub use admm::{
    admm_solve, split_budget, update_multipliers, update_penalty, AdmmReport, AdmmState, OuterStep,
    WarmStart,
};
pub use cg::{cg_solve, CgDirection, CgReport, LinearOperator};
pub use objective::{objective_eval, objective_fourier, weighted_objective, ObjectiveValue};
pub use operator::{
    apply_constraint_term, apply_data_term, apply_reg_term, build_rhs, NormalSystem,
};

use crate::constraints::{
    build_constraint_pairs, build_label, build_mask, build_regularizer, ConstraintPairSet,
    CropMask, GaussianLabel, RegularizerParams, SpatialRegularizer,
};
use crate::error::{Error, Result};
use crate::features::PenaltyGroup;
use crate::spectral::{forward, inverse_unchecked, RealGrid, Spectrum};

/// Learned filter spectra `ŵ_d`, one per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFilter {
    pub channels: Vec<Spectrum>,
}

impl SpectralFilter {
    pub fn zeros(channels: usize, dims: (usize, usize)) -> Self {
        Self {
            channels: vec![Spectrum::zeros(dims.0, dims.1); channels],
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels.first().map(|c| c.dims()).unwrap_or((0, 0))
    }

    /// Spatial filter weights `w_d`.
    pub fn spatial(&self) -> Vec<RealGrid> {
        self.channels.iter().map(inverse_unchecked).collect()
    }

    /// Worst relative Hermitian-symmetry deviation over channels.
    pub fn hermitian_deviation(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.hermitian_deviation().0)
            .fold(0.0, f64::max)
    }
}

/// Solver hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Initial penalty of the high-level channel group.
    pub gamma1: f64,
    /// Penalty multiplier of the remaining channels relative to `gamma1`.
    pub gamma_ratio: f64,
    pub gamma_max: f64,
    pub alpha: f64,
    pub admm_iters_first: usize,
    pub admm_iters_update: usize,
    pub cg_budget_first: usize,
    pub cg_budget_update: usize,
    pub cg_tol: f64,
    /// Clear `ξ` and `γ` before every model update instead of carrying them over.
    pub reset_duals: bool,
    /// Reuse the last search direction of the previous update.
    pub carry_direction: bool,
    /// Abort when the objective grows by more than this factor between outer iterations.
    pub divergence_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-2,
            gamma1: 0.1,
            gamma_ratio: 3.0,
            gamma_max: 1000.0,
            alpha: 10.0,
            admm_iters_first: 3,
            admm_iters_update: 2,
            cg_budget_first: 200,
            cg_budget_update: 6,
            cg_tol: 1e-6,
            reset_duals: false,
            carry_direction: true,
            divergence_factor: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn first_frame_schedule(&self) -> Vec<usize> {
        split_budget(self.cg_budget_first, self.admm_iters_first)
    }

    pub fn update_schedule(&self) -> Vec<usize> {
        split_budget(self.cg_budget_update, self.admm_iters_update)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("gamma1", self.gamma1),
            ("gamma_ratio", self.gamma_ratio),
            ("gamma_max", self.gamma_max),
            ("alpha", self.alpha),
            ("cg_tol", self.cg_tol),
            ("divergence_factor", self.divergence_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.admm_iters_first == 0 || self.admm_iters_update == 0 {
            return Err(Error::Config(
                "ADMM needs at least one outer iteration".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the solver needs besides the samples: label, mask, regularizer, pairs and
/// the penalty group of every channel.
#[derive(Clone, Debug)]
pub struct TrainingProblem {
    pub label: GaussianLabel,
    pub label_hat: Spectrum,
    pub mask: CropMask,
    pub regularizer: SpatialRegularizer,
    /// `g ⊙ g`, cached for the regularization term.
    pub reg_sq: RealGrid,
    pub pairs: ConstraintPairSet,
    pub channel_groups: Vec<PenaltyGroup>,
}

impl TrainingProblem {
    /// Assemble a problem from explicit pieces.
    pub fn new(
        label: GaussianLabel,
        mask: CropMask,
        regularizer: SpatialRegularizer,
        pairs: ConstraintPairSet,
        channel_groups: Vec<PenaltyGroup>,
    ) -> Result<Self> {
        let dims = label.y.dims();
        for other in [mask.p.dims(), regularizer.g.dims(), pairs.dims()] {
            if other != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: other,
                });
            }
        }
        if channel_groups.is_empty() {
            return Err(Error::invalid("problem needs at least one channel"));
        }
        let label_hat = forward(&label.y)?;
        let reg_sq = regularizer.g.hadamard(&regularizer.g);
        Ok(Self {
            label,
            label_hat,
            mask,
            regularizer,
            reg_sq,
            pairs,
            channel_groups,
        })
    }

    /// Standard construction from grid dims, target extent and kernel size.
    pub fn build(
        dims: (usize, usize),
        target_cells: (usize, usize),
        kernel: usize,
        sigma_factor: f64,
        reg: RegularizerParams,
        channel_groups: Vec<PenaltyGroup>,
    ) -> Result<Self> {
        let label = build_label(dims, target_cells, sigma_factor)?;
        let mask = build_mask(dims, target_cells, kernel)?;
        let regularizer = build_regularizer(dims, target_cells, reg)?;
        let pairs = build_constraint_pairs(&mask, kernel)?;
        Self::new(label, mask, regularizer, pairs, channel_groups)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.label.y.dims()
    }

    pub fn channels(&self) -> usize {
        self.channel_groups.len()
    }

    /// Worst per-channel relative within-kernel discrepancy of a filter.
    pub fn constraint_residual(&self, filter: &SpectralFilter) -> f64 {
        filter
            .spatial()
            .iter()
            .map(|w| self.pairs.relative_residual(w))
            .fold(0.0, f64::max)
    }
}
