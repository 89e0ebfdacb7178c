//! Experiment engine: sparse problem generation, single trials, recovery
//! curves, phase-transition grids and online scenario drivers.

pub mod cli;
pub mod io;

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::ensembles::{generate, Ensemble, RegressionProblem};
use crate::error::{Result, SparseError};
use crate::operators::top_k_indices;
use crate::rng::{derive_seed, rng_from_seed};
use crate::solvers_batch::{self, BatchConfig, InnerSolver, RecoveryResult};
use crate::solvers_online::{run_stream, OnlineAlgo, OnlineConfig, OnlineScenario};

/// Distribution of the nonzero entries of a synthetic sparse vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    /// Constant amplitude random selection: values are +-1 equiprobably.
    Cars,
    Gaussian,
    Uniform,
    DoubleExponential,
    Cauchy,
}

impl std::fmt::Display for VectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VectorKind::Cars => "cars",
            VectorKind::Gaussian => "gaussian",
            VectorKind::Uniform => "uniform",
            VectorKind::DoubleExponential => "double-exponential",
            VectorKind::Cauchy => "cauchy",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for VectorKind {
    type Err = SparseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cars" => Ok(VectorKind::Cars),
            "gaussian" => Ok(VectorKind::Gaussian),
            "uniform" => Ok(VectorKind::Uniform),
            "double-exponential" => Ok(VectorKind::DoubleExponential),
            "cauchy" => Ok(VectorKind::Cauchy),
            other => Err(SparseError::Parse(format!("unknown vector kind '{other}'"))),
        }
    }
}

/// How the support of a synthetic sparse vector is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportRule {
    /// Exactly k positions, chosen uniformly.
    ExactK,
    /// Each position independently nonzero with probability k/l.
    Bernoulli,
}

impl std::fmt::Display for SupportRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SupportRule::ExactK => write!(f, "exact-k"),
            SupportRule::Bernoulli => write!(f, "bernoulli"),
        }
    }
}

impl std::str::FromStr for SupportRule {
    type Err = SparseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-k" => Ok(SupportRule::ExactK),
            "bernoulli" => Ok(SupportRule::Bernoulli),
            other => Err(SparseError::Parse(format!("unknown support rule '{other}'"))),
        }
    }
}

/// Specification of a sparse-vector generator.
#[derive(Debug, Clone, Copy)]
pub struct VectorEnsemble {
    pub kind: VectorKind,
    pub sparsity_k: usize,
    pub support_rule: SupportRule,
}

fn draw_value(kind: VectorKind, rng: &mut impl Rng) -> f64 {
    match kind {
        VectorKind::Cars => {
            if rng.gen::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        VectorKind::Gaussian => StandardNormal.sample(rng),
        VectorKind::Uniform => rng.gen_range(-1.0..1.0),
        VectorKind::DoubleExponential => {
            // inverse-CDF sample of the unit Laplace distribution
            let u: f64 = rng.gen_range(-0.5..0.5);
            -u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
        VectorKind::Cauchy => Cauchy::new(0.0, 1.0).unwrap().sample(rng),
    }
}

/// Generate a sparse vector of length `l` under the ensemble, seeded.
pub fn gen_sparse_vector(ens: &VectorEnsemble, l: usize, seed: u64) -> Result<DVector<f64>> {
    if ens.sparsity_k > l {
        return Err(SparseError::InvalidParameter(format!(
            "sparsity {} exceeds length {l}",
            ens.sparsity_k
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut theta = DVector::zeros(l);
    match ens.support_rule {
        SupportRule::ExactK => {
            // partial Fisher-Yates over the index set
            let mut idx: Vec<usize> = (0..l).collect();
            for slot in 0..ens.sparsity_k {
                let j = rng.gen_range(slot..l);
                idx.swap(slot, j);
            }
            for &i in idx.iter().take(ens.sparsity_k) {
                theta[i] = draw_value(ens.kind, &mut rng);
            }
        }
        SupportRule::Bernoulli => {
            let p = ens.sparsity_k as f64 / l as f64;
            for i in 0..l {
                if rng.gen::<f64>() < p {
                    theta[i] = draw_value(ens.kind, &mut rng);
                }
            }
        }
    }
    Ok(theta)
}

/// Which batch solver a harness run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Omp,
    Cosamp,
    Sp,
    Ista,
    /// l1 minimization approximated by coordinate-descent LASSO with
    /// lambda continuation to a vanishing value.
    IstTuned,
    Fista,
    Iht,
    Cd,
    Tst,
    Rwl1,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolverKind::Omp => "omp",
            SolverKind::Cosamp => "cosamp",
            SolverKind::Sp => "sp",
            SolverKind::Ista => "ista",
            SolverKind::IstTuned => "ist-tuned",
            SolverKind::Fista => "fista",
            SolverKind::Iht => "iht",
            SolverKind::Cd => "cd",
            SolverKind::Tst => "tst",
            SolverKind::Rwl1 => "rwl1",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for SolverKind {
    type Err = SparseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omp" => Ok(SolverKind::Omp),
            "cosamp" => Ok(SolverKind::Cosamp),
            "sp" => Ok(SolverKind::Sp),
            "ista" => Ok(SolverKind::Ista),
            "ist-tuned" => Ok(SolverKind::IstTuned),
            "fista" => Ok(SolverKind::Fista),
            "iht" => Ok(SolverKind::Iht),
            "cd" => Ok(SolverKind::Cd),
            "tst" => Ok(SolverKind::Tst),
            "rwl1" => Ok(SolverKind::Rwl1),
            other => Err(SparseError::Parse(format!("unknown solver '{other}'"))),
        }
    }
}

/// Run one batch solver with harness defaults: residual tolerance relative
/// to `||y||`, tuned gradient steps for IHT/TST, and a default LASSO
/// lambda of `0.1 ||X^T y||_inf` when none is given.
pub fn dispatch_solver(
    kind: SolverKind,
    problem: &RegressionProblem,
    k: usize,
    lambda: Option<f64>,
) -> Result<RecoveryResult> {
    let x = problem.matrix.entries();
    let y_norm = problem.measurements.norm();
    let tol_res = (1e-10 * y_norm).max(1e-13);
    let default_lambda =
        || lambda.unwrap_or_else(|| 0.1 * (x.transpose() * &problem.measurements).abs().max());
    match kind {
        SolverKind::Omp => {
            let cfg = BatchConfig {
                max_iters: if k > 0 { k } else { x.nrows() },
                tol: tol_res,
                ..BatchConfig::default()
            };
            solvers_batch::omp(problem, &cfg)
        }
        SolverKind::Cosamp | SolverKind::Sp => {
            let t = if kind == SolverKind::Cosamp { 2 * k } else { k };
            let cfg = BatchConfig {
                sparsity_k: Some(k),
                csmp_t: Some(t.max(1)),
                max_iters: 60,
                tol: tol_res,
                ..BatchConfig::default()
            };
            solvers_batch::csmp(problem, &cfg)
        }
        SolverKind::Ista | SolverKind::Fista => {
            let cfg = BatchConfig {
                lambda: default_lambda(),
                max_iters: 2000,
                tol: 1e-12,
                ..BatchConfig::default()
            };
            if kind == SolverKind::Ista {
                solvers_batch::ista(problem, &cfg)
            } else {
                solvers_batch::fista(problem, &cfg)
            }
        }
        SolverKind::Cd => {
            let cfg = BatchConfig {
                lambda: default_lambda(),
                max_iters: 2000,
                tol: 1e-12,
                ..BatchConfig::default()
            };
            solvers_batch::coordinate_descent(problem, &cfg)
        }
        SolverKind::IstTuned | SolverKind::Rwl1 => {
            let rounds = if kind == SolverKind::IstTuned { 1 } else { 4 };
            let cfg = BatchConfig {
                reweight_rounds: rounds,
                reweight_epsilon: 1e-3,
                max_iters: 2000,
                tol: 1e-12,
                ..BatchConfig::default()
            };
            solvers_batch::reweighted_l1(problem, &cfg, InnerSolver::CoordinateDescent)
        }
        SolverKind::Iht | SolverKind::Tst => {
            // IHT renormalizes its step per iteration when none is set;
            // TST falls back to the unit step
            let cfg = BatchConfig {
                sparsity_k: Some(k.max(1)),
                csmp_t: Some(k.max(1)),
                max_iters: 300,
                tol: tol_res,
                ..BatchConfig::default()
            };
            if kind == SolverKind::Iht {
                solvers_batch::iht(problem, &cfg)
            } else {
                solvers_batch::tst(problem, &cfg)
            }
        }
    }
}

/// Outcome of one seeded trial. Solver errors become failed records, not
/// aborts.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub success: bool,
    pub rel_error: f64,
    pub iterations: usize,
    pub wall_secs: f64,
    pub reason: Option<String>,
}

/// Full specification of one trial family.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub matrix_ensemble: Ensemble,
    pub vector_ensemble: VectorEnsemble,
    pub n: usize,
    pub l: usize,
    pub noise_sigma: f64,
    pub solver: SolverKind,
    pub lambda: Option<f64>,
    pub success_tol: f64,
}

/// Build a seeded random instance, run the solver, and judge success:
/// relative l2 error under `success_tol` when noiseless, exact support
/// match of the largest entries when noisy.
pub fn run_trial(spec: &TrialSpec, seed: u64) -> TrialRecord {
    let start = Instant::now();
    let fail = |reason: String, start: Instant| TrialRecord {
        success: false,
        rel_error: f64::INFINITY,
        iterations: 0,
        wall_secs: start.elapsed().as_secs_f64(),
        reason: Some(reason),
    };
    let matrix = match generate(
        spec.matrix_ensemble,
        spec.n,
        spec.l,
        derive_seed(seed, &[1]),
        true,
    ) {
        Ok(m) => m,
        Err(e) => return fail(e.to_string(), start),
    };
    let truth = match gen_sparse_vector(&spec.vector_ensemble, spec.l, derive_seed(seed, &[2])) {
        Ok(t) => t,
        Err(e) => return fail(e.to_string(), start),
    };
    let mut y = matrix.entries() * &truth;
    if spec.noise_sigma > 0.0 {
        let mut rng = rng_from_seed(derive_seed(seed, &[3]));
        for v in y.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise_sigma * g;
        }
    }
    let problem = match RegressionProblem::new(matrix, y) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string(), start),
    };
    let k = spec.vector_ensemble.sparsity_k;
    let result = match dispatch_solver(spec.solver, &problem, k, spec.lambda) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string(), start),
    };
    let denom = truth.norm();
    let rel_error = if denom > 0.0 {
        (&result.estimate - &truth).norm() / denom
    } else {
        result.estimate.norm()
    };
    let success = if spec.noise_sigma == 0.0 {
        rel_error <= spec.success_tol
    } else {
        let true_support: Vec<usize> = truth
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let mut est_support = top_k_indices(&result.estimate, true_support.len());
        est_support.sort_unstable();
        est_support == true_support
    };
    TrialRecord {
        success,
        rel_error,
        iterations: result.iterations,
        wall_secs: start.elapsed().as_secs_f64(),
        reason: None,
    }
}

/// One point of a recovery curve.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub k: usize,
    pub successes: usize,
    pub trials: usize,
}

/// Sweep the sparsity k from 1 to N at fixed problem shape and count
/// successful recoveries out of `trials` seeded attempts per k.
pub fn recovery_curve(
    base: &TrialSpec,
    trials: usize,
    seed: u64,
) -> Vec<CurvePoint> {
    (1..=base.n)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| {
            let spec = TrialSpec {
                vector_ensemble: VectorEnsemble {
                    sparsity_k: k,
                    ..base.vector_ensemble
                },
                ..base.clone()
            };
            let successes = (0..trials)
                .filter(|&t| run_trial(&spec, derive_seed(seed, &[k as u64, t as u64])).success)
                .count();
            CurvePoint {
                k,
                successes,
                trials,
            }
        })
        .collect()
}

/// Specification of an alpha-beta phase grid.
#[derive(Debug, Clone)]
pub struct PhaseSpec {
    pub l: usize,
    pub grid: usize,
    pub trials: usize,
    pub solver: SolverKind,
    pub lambda: Option<f64>,
    pub matrix_ensemble: Ensemble,
    pub vector_kind: VectorKind,
    pub noise_sigma: f64,
    pub success_tol: f64,
    pub seed: u64,
}

/// One cell of the phase grid at (alpha, beta) = (N/l, k/N).
#[derive(Debug, Clone)]
pub struct PhaseCell {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub k: usize,
    pub successes: usize,
    pub trials: usize,
    pub median_wall_secs: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Run the full grid. Cells are row-major with the row index moving beta
/// and the column index moving alpha; both axes take the values
/// (j+1)/grid, j = 0..grid. Per-trial seeds derive from
/// (seed, row, col, trial), so scheduling cannot change results.
pub fn phase_grid(spec: &PhaseSpec) -> Vec<PhaseCell> {
    let g = spec.grid;
    (0..g * g)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&cell| {
            let row = cell / g;
            let col = cell % g;
            let alpha = (col + 1) as f64 / g as f64;
            let beta = (row + 1) as f64 / g as f64;
            let n = ((alpha * spec.l as f64).round() as usize).max(1);
            let k = ((beta * n as f64).round() as usize).max(1);
            if k > n {
                return PhaseCell {
                    alpha,
                    beta,
                    n,
                    k,
                    successes: 0,
                    trials: 0,
                    median_wall_secs: 0.0,
                };
            }
            let trial_spec = TrialSpec {
                matrix_ensemble: spec.matrix_ensemble,
                vector_ensemble: VectorEnsemble {
                    kind: spec.vector_kind,
                    sparsity_k: k,
                    support_rule: SupportRule::ExactK,
                },
                n,
                l: spec.l,
                noise_sigma: spec.noise_sigma,
                solver: spec.solver,
                lambda: spec.lambda,
                success_tol: spec.success_tol,
            };
            let mut successes = 0;
            let mut walls = Vec::with_capacity(spec.trials);
            for t in 0..spec.trials {
                let rec = run_trial(
                    &trial_spec,
                    derive_seed(spec.seed, &[row as u64, col as u64, t as u64]),
                );
                if rec.success {
                    successes += 1;
                }
                walls.push(rec.wall_secs);
            }
            PhaseCell {
                alpha,
                beta,
                n,
                k,
                successes,
                trials: spec.trials,
                median_wall_secs: median(walls),
            }
        })
        .collect()
}

/// Render a phase grid as 8-bit pixels, intensity `floor(255 m / M)`.
pub fn phase_pixels(cells: &[PhaseCell]) -> Vec<u8> {
    cells
        .iter()
        .map(|c| {
            if c.trials == 0 {
                0u8
            } else {
                (255 * c.successes / c.trials) as u8
            }
        })
        .collect()
}

/// Run both online algorithms over the same scenario and return their
/// signal-domain MSE traces.
pub fn online_experiment(
    scenario: &OnlineScenario,
    adcosamp_cfg: &OnlineConfig,
    spapsm_cfg: &OnlineConfig,
) -> Result<Vec<(OnlineAlgo, Vec<f64>)>> {
    let (_, a) = run_stream(scenario, OnlineAlgo::AdCoSaMP, adcosamp_cfg)?;
    let (_, s) = run_stream(scenario, OnlineAlgo::Spapsm, spapsm_cfg)?;
    Ok(vec![(OnlineAlgo::AdCoSaMP, a), (OnlineAlgo::Spapsm, s)])
}

/// Harness defaults for the scaled time-varying scenario: an overestimated
/// sparsity budget, normalized LMS for AdCoSaMP, and the hyperslab radius
/// tied to the noise level for SpAPSM.
pub fn default_online_configs(scenario: &OnlineScenario) -> (OnlineConfig, OnlineConfig) {
    let k_hat = ((scenario.sparsity as f64) * 1.5).round().max(1.0) as usize;
    let adcosamp = OnlineConfig {
        sparsity_k: k_hat,
        lms_mu: 0.5,
        normalized_lms: true,
        forgetting_beta: 0.99,
        ..OnlineConfig::default()
    };
    let spapsm = OnlineConfig {
        sparsity_k: k_hat,
        slab_epsilon: 1.3 * scenario.noise_sigma,
        q_slabs: (scenario.dimension / 8).max(1),
        ball_radius: k_hat as f64,
        extrapolation_scale: 1.8,
        weight_epsilon: 1e-2,
        use_weights: true,
        ..OnlineConfig::default()
    };
    (adcosamp, spapsm)
}
