//! Dense reference computations for small problems.
//!
//! Every matrix here is assembled entry by entry from the spatial definitions (circulant
//! convolution matrices, diagonal mask and regularizer, explicit pair differences), so it
//! shares no code path with the Fourier-domain operator it is compared against.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{build_constraint_pairs, build_mask, RegularizerParams};
use crate::error::{Error, Result};
use crate::features::PenaltyGroup;
use crate::memory::SampleMemory;
use crate::solver::{
    admm_solve, apply_constraint_term, apply_data_term, apply_reg_term, build_rhs, objective_eval,
    LinearOperator, NormalSystem, SolverConfig, SpectralFilter, TrainingProblem, WarmStart,
};
use crate::spectral::{forward, inverse, RealGrid, Spectrum};

/// A random training problem with its sample memory.
pub struct RandomProblem {
    pub memory: SampleMemory,
    pub problem: TrainingProblem,
    pub samples: Vec<Vec<RealGrid>>,
}

impl RandomProblem {
    /// Same problem with an empty sample list, for assembling the sample-free terms.
    fn without_samples(rp: &RandomProblem) -> Result<RandomProblem> {
        Ok(RandomProblem {
            memory: rp.memory.clone(),
            problem: rp.problem.clone(),
            samples: Vec::new(),
        })
    }
}

fn random_grid(rng: &mut ChaCha8Rng, dims: (usize, usize)) -> RealGrid {
    RealGrid::from_fn(dims.0, dims.1, |_, _| rng.random_range(-1.0..1.0))
}

/// Random problem on a `dims` grid: `channels` channels alternating High/Low, a target of
/// half the grid, and `samples` random samples inserted with learning rate 0.3.
pub fn random_problem(
    dims: (usize, usize),
    channels: usize,
    kernel: usize,
    samples: usize,
    seed: u64,
) -> Result<RandomProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = (0..channels)
        .map(|d| {
            if d % 2 == 0 {
                PenaltyGroup::High
            } else {
                PenaltyGroup::Low
            }
        })
        .collect();
    let problem = TrainingProblem::build(
        dims,
        (dims.0.div_ceil(2), dims.1.div_ceil(2)),
        kernel,
        0.1,
        RegularizerParams::default(),
        groups,
    )?;
    let mut memory = SampleMemory::new(samples.max(1), 0.3, 1)?;
    let mut raw = Vec::with_capacity(samples);
    for t in 0..samples {
        let grids: Vec<RealGrid> = (0..channels).map(|_| random_grid(&mut rng, dims)).collect();
        let spectra = grids.iter().map(forward).collect::<Result<Vec<_>>>()?;
        memory.insert(spectra, t)?;
        raw.push(grids);
    }
    Ok(RandomProblem {
        memory,
        problem,
        samples: raw,
    })
}

/// Circulant matrix of `x`: `(C_x w)[m] = Σ_n x[m - n] w[n]` on the 2-D torus.
fn circulant(x: &RealGrid) -> DMatrix<f64> {
    let (rows, cols) = x.dims();
    let n = rows * cols;
    DMatrix::from_fn(n, n, |m, k| {
        let (rm, cm) = (m / cols, m % cols);
        let (rk, ck) = (k / cols, k % cols);
        x[((rm + rows - rk) % rows, (cm + cols - ck) % cols)]
    })
}

/// Dense spatial normal equations `A w = b` stacked over channels.
pub struct DenseSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Assemble `A = Σ_t μ_t P C_dᵀ C_j P + δ_dj (γ_d VᵀV + λ G²)` and
/// `b_d = Σ_t μ_t P C_dᵀ y - Vᵀ ξ_d`.
pub fn dense_normal_system(
    rp: &RandomProblem,
    lambda: f64,
    gamma: &[f64],
    xi: &[Vec<f64>],
) -> DenseSystem {
    let problem = &rp.problem;
    let (rows, cols) = problem.dims();
    let n = rows * cols;
    let channels = problem.channels();
    let p = DMatrix::from_diagonal(&DVector::from_column_slice(problem.mask.p.as_slice()));
    let g2 = DMatrix::from_diagonal(&DVector::from_iterator(
        n,
        problem.regularizer.g.as_slice().iter().map(|v| v * v),
    ));
    let mut v = DMatrix::<f64>::zeros(problem.pairs.len(), n);
    for (k, &(i, j)) in problem.pairs.pairs().iter().enumerate() {
        v[(k, i)] += 1.0;
        v[(k, j)] -= 1.0;
    }
    let vtv = v.transpose() * &v;
    let y = DVector::from_column_slice(problem.label.y.as_slice());

    let mut a = DMatrix::<f64>::zeros(channels * n, channels * n);
    let mut b = DVector::<f64>::zeros(channels * n);
    let weights = rp.memory.weights();
    for (sample, mu) in rp.samples.iter().zip(&weights) {
        let cp: Vec<DMatrix<f64>> = sample.iter().map(|x| circulant(x) * &p).collect();
        for d in 0..channels {
            let cpt = cp[d].transpose();
            for j in 0..channels {
                let block = &cpt * &cp[j] * *mu;
                let mut view = a.view_mut((d * n, j * n), (n, n));
                view += block;
            }
            let mut bd = b.rows_mut(d * n, n);
            bd += &cpt * &y * *mu;
        }
    }
    for d in 0..channels {
        let mut view = a.view_mut((d * n, d * n), (n, n));
        view += &vtv * gamma[d] + &g2 * lambda;
        if !xi[d].is_empty() {
            let mut bd = b.rows_mut(d * n, n);
            bd -= v.transpose() * DVector::from_column_slice(&xi[d]);
        }
    }
    DenseSystem { matrix: a, rhs: b }
}

fn stack(grids: &[RealGrid]) -> DVector<f64> {
    DVector::from_iterator(
        grids.iter().map(RealGrid::len).sum(),
        grids.iter().flat_map(|g| g.as_slice().iter().copied()),
    )
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Relative errors of each Fourier-domain operator piece against its dense counterpart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorErrors {
    pub data: f64,
    pub constraint: f64,
    pub regularization: f64,
    pub combined: f64,
    pub rhs: f64,
}

impl OperatorErrors {
    pub fn max(&self) -> f64 {
        [
            self.data,
            self.constraint,
            self.regularization,
            self.combined,
            self.rhs,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn spatial_stack(spectra: &[Spectrum]) -> Result<DVector<f64>> {
    Ok(stack(
        &spectra.iter().map(inverse).collect::<Result<Vec<_>>>()?,
    ))
}

/// Compare the operator terms, the fused operator and the right-hand side with the dense
/// spatial system for a random filter, penalties and multipliers.
pub fn operator_oracle(
    dims: (usize, usize),
    channels: usize,
    kernel: usize,
    seed: u64,
) -> Result<OperatorErrors> {
    let rp = random_problem(dims, channels, kernel, 3, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let gamma: Vec<f64> = (0..channels).map(|_| rng.random_range(0.1..10.0)).collect();
    let xi: Vec<Vec<f64>> = (0..channels)
        .map(|_| {
            (0..rp.problem.pairs.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let lambda = 0.05;
    let w: Vec<RealGrid> = (0..channels).map(|_| random_grid(&mut rng, dims)).collect();
    let w_hat = w.iter().map(forward).collect::<Result<Vec<_>>>()?;
    let wv = stack(&w);

    let no_xi = vec![Vec::new(); channels];
    let zeros = vec![0.0; channels];
    let data_only = dense_normal_system(&rp, 0.0, &zeros, &no_xi).matrix;
    let reg_only = dense_normal_system(
        &RandomProblem::without_samples(&rp)?,
        lambda,
        &zeros,
        &no_xi,
    )
    .matrix;
    let constraint_only =
        dense_normal_system(&RandomProblem::without_samples(&rp)?, 0.0, &gamma, &no_xi).matrix;
    let full = dense_normal_system(&rp, lambda, &gamma, &xi);

    let problem = &rp.problem;
    let system = NormalSystem::new(&rp.memory, problem, lambda, &gamma)?;
    let rhs = build_rhs(
        &rp.memory,
        &problem.mask,
        &problem.pairs,
        &xi,
        &problem.label_hat,
    )?;
    Ok(OperatorErrors {
        data: rel(
            &spatial_stack(&apply_data_term(&rp.memory, &problem.mask, &w_hat)?)?,
            &(&data_only * &wv),
        ),
        constraint: rel(
            &spatial_stack(&apply_constraint_term(&problem.pairs, &gamma, &w_hat)?)?,
            &(&constraint_only * &wv),
        ),
        regularization: rel(
            &spatial_stack(&apply_reg_term(&problem.regularizer, lambda, &w_hat)?)?,
            &(&reg_only * &wv),
        ),
        combined: rel(
            &spatial_stack(&system.apply(&w_hat)?)?,
            &(&full.matrix * &wv),
        ),
        rhs: rel(&spatial_stack(&rhs)?, &full.rhs),
    })
}

/// Minimizer of the constrained objective from the dense system, parametrized by one
/// shared value per kernel plus the free entries outside kernels.
pub fn kkt_solution(rp: &RandomProblem, lambda: f64) -> Result<Vec<RealGrid>> {
    let problem = &rp.problem;
    let (rows, cols) = problem.dims();
    let n = rows * cols;
    let channels = problem.channels();
    let zero_xi = vec![Vec::new(); channels];
    let dense = dense_normal_system(rp, lambda, &vec![0.0; channels], &zero_xi);

    let mut owner = vec![None; n];
    for (k, kernel) in problem.pairs.kernels().iter().enumerate() {
        for &i in kernel {
            owner[i] = Some(k);
        }
    }
    let kernels = problem.pairs.kernels().len();
    let mut free = Vec::new();
    for (i, o) in owner.iter().enumerate() {
        if o.is_none() {
            free.push(i);
        }
    }
    let m = kernels + free.len();
    let mut basis = DMatrix::<f64>::zeros(channels * n, channels * m);
    for d in 0..channels {
        for (i, o) in owner.iter().enumerate() {
            let col = match o {
                Some(k) => *k,
                None => kernels + free.binary_search(&i).expect("free index"),
            };
            basis[(d * n + i, d * m + col)] = 1.0;
        }
    }
    let bt = basis.transpose();
    let reduced = &bt * &dense.matrix * &basis;
    let u = reduced
        .cholesky()
        .ok_or_else(|| Error::invalid("reduced system is not positive definite"))?
        .solve(&(&bt * &dense.rhs));
    let w = basis * u;
    (0..channels)
        .map(|d| RealGrid::from_vec(rows, cols, w.rows(d * n, n).iter().copied().collect()))
        .collect()
}

/// Relative distance between the ADMM solution after `outer` iterations and the dense
/// constrained minimizer, for a single random sample.
pub fn kkt_oracle_error(
    dims: (usize, usize),
    channels: usize,
    kernel: usize,
    outer: usize,
    seed: u64,
) -> Result<f64> {
    let rp = random_problem(dims, channels, kernel, 1, seed)?;
    let config = SolverConfig {
        cg_tol: 1e-13,
        ..SolverConfig::default()
    };
    let schedule = vec![4 * dims.0 * dims.1 * channels; outer];
    let report = admm_solve(
        &rp.memory,
        &rp.problem,
        &config,
        &schedule,
        WarmStart::default(),
    )?;
    let expected = kkt_solution(&rp, config.lambda)?;
    let got = report.filter.spatial();
    Ok(rel(&stack(&got), &stack(&expected)))
}

/// Relative gap between the spatial and spectral evaluation of the loss on a random
/// instance.
pub fn parseval_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.random_range(4..=12);
    let channels = rng.random_range(1..=3);
    let rp = random_problem((side, side), channels, 2, 1, seed)?;
    let filter = SpectralFilter {
        channels: (0..channels)
            .map(|_| forward(&random_grid(&mut rng, (side, side))))
            .collect::<Result<Vec<Spectrum>>>()?,
    };
    let lambda = rng.random_range(1e-3..1.0);
    let v = objective_eval(
        &filter,
        &rp.memory.samples()[0].spectra,
        &rp.problem,
        lambda,
    )?;
    Ok((v.loss - v.fourier_loss).abs() / v.loss.abs().max(f64::MIN_POSITIVE))
}

/// Gap between the full-resolution response `wᵀ(p ⊙ v)` of a constraint-satisfying
/// filter and the pooled-space response `w'ᵀ(U v / e²)`, on random inputs.
pub fn pooled_response_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = (rng.random_range(6..=16), rng.random_range(6..=16));
    let target = (
        rng.random_range(2..=dims.0 - 2),
        rng.random_range(2..=dims.1 - 2),
    );
    let kernel = rng.random_range(2..=3);
    let mask = build_mask(dims, target, kernel)?;
    let pairs = build_constraint_pairs(&mask, kernel)?;
    let w = pairs
        .project(&random_grid(&mut rng, dims))
        .hadamard(&mask.p);
    let v = random_grid(&mut rng, dims);
    let full = w.dot(&v.hadamard(&mask.p));
    let pooled: f64 = pairs
        .pooled_weights(&w)
        .iter()
        .zip(pairs.pool_average(&v))
        .map(|(a, b)| a * b)
        .sum();
    Ok((full - pooled).abs())
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value.is_finite() && self.value <= self.threshold
    }
}

/// The numerical checks run by the command-line `selftest`.
pub fn run_all() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, threshold: f64| {
        checks.push(Check {
            name: name.to_string(),
            value,
            threshold,
        })
    };
    let mut worst = 0.0_f64;
    for seed in 0..4 {
        worst = worst.max(operator_oracle((8, 8), 2, 2, seed)?.max());
        worst = worst.max(operator_oracle((1, 8), 2, 2, seed)?.max());
    }
    push("operator vs dense normal equations", worst, 1e-8);
    let mut worst = 0.0_f64;
    for seed in 0..100 {
        worst = worst.max(parseval_error(seed)?);
    }
    push("spatial vs spectral loss", worst, 1e-8);
    let mut worst = 0.0_f64;
    for seed in 0..100 {
        worst = worst.max(pooled_response_error(seed)?);
    }
    push("pooled vs full-resolution response", worst, 1e-10);
    let mut worst = 0.0_f64;
    for n in [8, 16] {
        for channels in [1, 2] {
            worst = worst.max(kkt_oracle_error((1, n), channels, 2, 20, 7)?);
        }
    }
    push("ADMM vs constrained minimizer", worst, 1e-3);
    Ok(checks)
}
