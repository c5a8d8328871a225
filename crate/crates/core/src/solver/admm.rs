use super::cg::{cg_solve, CgDirection};
use super::objective::weighted_objective;
use super::operator::{build_rhs, NormalSystem};
use super::{SolverConfig, SpectralFilter, TrainingProblem};
use crate::constraints::{apply_v, ConstraintPairSet};
use crate::error::{Error, Result};
use crate::features::PenaltyGroup;
use crate::memory::SampleMemory;
use crate::spectral::inverse_unchecked;

/// Multipliers `ξ_d` and penalties `γ_d` of the augmented Lagrangian.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub xi: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub gamma_max: f64,
    pub alpha: f64,
    pub iteration: usize,
}

impl AdmmState {
    /// Zero multipliers; `gamma1` for high-level channels and `gamma_ratio · gamma1` for the rest.
    pub fn new(groups: &[PenaltyGroup], constraints: usize, config: &SolverConfig) -> Self {
        let gamma = groups
            .iter()
            .map(|g| match g {
                PenaltyGroup::High => config.gamma1,
                PenaltyGroup::Low => config.gamma1 * config.gamma_ratio,
            })
            .map(|g| g.min(config.gamma_max))
            .collect();
        Self {
            xi: vec![vec![0.0; constraints]; groups.len()],
            gamma,
            gamma_max: config.gamma_max,
            alpha: config.alpha,
            iteration: 0,
        }
    }
}

/// `ξ_d ← ξ_d + γ_d V_d F⁻¹ ŵ_d`.
pub fn update_multipliers(
    state: &mut AdmmState,
    pairs: &ConstraintPairSet,
    filter: &SpectralFilter,
) -> Result<()> {
    if filter.len() != state.xi.len() {
        return Err(Error::invalid(format!(
            "filter has {} channels, state has {}",
            filter.len(),
            state.xi.len()
        )));
    }
    for ((xi, &gamma), w_hat) in state.xi.iter_mut().zip(&state.gamma).zip(&filter.channels) {
        if gamma == 0.0 || pairs.is_empty() {
            continue;
        }
        let residual = apply_v(pairs, &inverse_unchecked(w_hat));
        if xi.len() != residual.len() {
            return Err(Error::invalid(
                "multiplier length does not match constraints",
            ));
        }
        xi.iter_mut()
            .zip(residual)
            .for_each(|(x, v)| *x += gamma * v);
    }
    Ok(())
}

/// `γ_d ← min(γ_max, α γ_d)` and advance the iteration counter.
pub fn update_penalty(state: &mut AdmmState) {
    let (alpha, cap) = (state.alpha, state.gamma_max);
    state
        .gamma
        .iter_mut()
        .for_each(|g| *g = (alpha * *g).min(cap));
    state.iteration += 1;
}

/// Split a total CG budget over outer iterations: half to the first, the rest evenly.
pub fn split_budget(total: usize, outer: usize) -> Vec<usize> {
    match outer {
        0 => Vec::new(),
        1 => vec![total],
        _ => {
            let first = total / 2;
            let rest = total - first;
            let n = outer - 1;
            let mut out = vec![first];
            out.extend((0..n).map(|i| rest / n + usize::from(i < rest % n)));
            out
        }
    }
}

/// Optional starting point carried over from a previous solve.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    pub filter: Option<SpectralFilter>,
    pub state: Option<AdmmState>,
    pub direction: Option<CgDirection>,
}

/// Trace of one outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterStep {
    pub cg_iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    /// Weighted data + regularization loss after the CG solve.
    pub objective: f64,
    /// Same loss evaluated at the kernel-averaged (feasible) filter.
    pub feasible_objective: f64,
    pub constraint_residual: f64,
}

#[derive(Clone, Debug)]
pub struct AdmmReport {
    pub filter: SpectralFilter,
    pub state: AdmmState,
    pub steps: Vec<OuterStep>,
    pub direction: Option<CgDirection>,
    pub constraint_residual: f64,
}

/// Alternate CG solves in `ŵ` with multiplier and penalty updates, one outer iteration
/// per entry of `schedule` (the CG budget of that iteration).
pub fn admm_solve(
    memory: &SampleMemory,
    problem: &TrainingProblem,
    config: &SolverConfig,
    schedule: &[usize],
    warm: WarmStart,
) -> Result<AdmmReport> {
    let (channels, dims) = memory.layout().ok_or(Error::EmptyMemory)?;
    if channels != problem.channels() {
        return Err(Error::invalid(format!(
            "memory has {channels} channels, problem {}",
            problem.channels()
        )));
    }
    let mut state = match warm.state {
        Some(s) if !config.reset_duals => s,
        _ => AdmmState::new(&problem.channel_groups, problem.pairs.len(), config),
    };
    let mut filter = warm
        .filter
        .unwrap_or_else(|| SpectralFilter::zeros(channels, dims));
    let mut carried = if config.carry_direction {
        warm.direction
    } else {
        None
    };
    let mut direction = None;

    let mut steps: Vec<OuterStep> = Vec::with_capacity(schedule.len());
    for &budget in schedule {
        let rhs = build_rhs(
            memory,
            &problem.mask,
            &problem.pairs,
            &state.xi,
            &problem.label_hat,
        )?;
        let system = NormalSystem::new(memory, problem, config.lambda, &state.gamma)?;
        let report = cg_solve(
            &system,
            &rhs,
            Some(filter.channels),
            carried.take().as_ref(),
            budget,
            config.cg_tol,
        )?;
        filter = SpectralFilter {
            channels: report.solution,
        };
        direction = report.direction;

        let objective = weighted_objective(memory, problem, &filter, config.lambda)?;
        let feasible = SpectralFilter {
            channels: filter
                .spatial()
                .iter()
                .map(|w| crate::spectral::forward_unchecked(&problem.pairs.project(w)))
                .collect(),
        };
        let feasible_objective = weighted_objective(memory, problem, &feasible, config.lambda)?;
        if let Some(prev) = steps.last() {
            if objective > config.divergence_factor * prev.objective && objective > 1e-12 {
                return Err(Error::Divergence(format!(
                    "objective grew from {:.6e} to {:.6e}",
                    prev.objective, objective
                )));
            }
        }
        steps.push(OuterStep {
            cg_iterations: report.iterations,
            initial_residual: report.initial_residual,
            final_residual: *report.residuals.last().unwrap_or(&0.0),
            objective,
            feasible_objective,
            constraint_residual: problem.constraint_residual(&filter),
        });

        update_multipliers(&mut state, &problem.pairs, &filter)?;
        update_penalty(&mut state);
    }

    let constraint_residual = problem.constraint_residual(&filter);
    Ok(AdmmReport {
        filter,
        state,
        steps,
        direction,
        constraint_residual,
    })
}
