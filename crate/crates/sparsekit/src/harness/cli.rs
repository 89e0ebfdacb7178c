//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Every output
//! file carries the seed and the configuration in `#` header lines, and
//! no file contains timing data, so reruns with the same seed are
//! byte-identical.

use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::dictionaries::{gabor_dictionary, GaborParams};
use crate::ensembles::{self, generate, Ensemble, RegressionProblem};
use crate::error::{Result, SparseError};
use crate::harness::io::{fmt_f64, write_csv, write_pgm};
use crate::harness::{
    default_online_configs, dispatch_solver, gen_sparse_vector, online_experiment, phase_grid,
    phase_pixels, recovery_curve, PhaseSpec, SolverKind, SupportRule, TrialSpec, VectorEnsemble,
    VectorKind,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::solvers_batch::{omp, BatchConfig};
use crate::solvers_online::OnlineScenario;

#[derive(Parser)]
#[command(
    name = "sparsekit",
    version,
    about = "Sparse recovery toolkit: solvers, diagnostics and experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one seeded random instance and write the coefficients
    Solve(SolveArgs),
    /// Probability-of-recovery curve over the sparsity level
    Curve(CurveArgs),
    /// Alpha-beta phase transition grid (CSV + PGM heatmap)
    Phase(PhaseArgs),
    /// Online time-varying experiment (AdCoSaMP and SpAPSM MSE traces)
    Online(OnlineArgs),
    /// Gabor dictionary demo: spectrogram, coefficient decay, CS recovery
    GaborDemo(GaborArgs),
    /// Sensing matrix diagnostics: coherence, Welch bound, spark
    Diag(DiagArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    algo: SolverKind,
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    l: usize,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "cars")]
    vectors: VectorKind,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "solve.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    algo: SolverKind,
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    #[arg(long, default_value = "cars")]
    vectors: VectorKind,
    #[arg(long)]
    l: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "curve.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PhaseArgs {
    #[arg(long)]
    algo: SolverKind,
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    #[arg(long, default_value = "cars")]
    vectors: VectorKind,
    #[arg(long)]
    l: usize,
    #[arg(long, default_value_t = 15)]
    grid: usize,
    #[arg(long, default_value_t = 25)]
    trials: usize,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <out>.csv and <out>.pgm
    #[arg(long, default_value = "phase")]
    out: PathBuf,
}

#[derive(Args)]
struct OnlineArgs {
    /// key=value scenario file (keys: dimension, samples, sparsity,
    /// noise_sigma, change_at, change_count, seed)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    change_at: Option<usize>,
    #[arg(long)]
    change_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix; writes <out>_adcosamp.csv and <out>_spapsm.csv
    #[arg(long, default_value = "online")]
    out: PathBuf,
}

#[derive(Args)]
struct GaborArgs {
    #[arg(long, default_value_t = 128)]
    l: usize,
    /// Window spread; defaults to l/16
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 4)]
    alpha: usize,
    #[arg(long, default_value_t = 4)]
    beta: usize,
    #[arg(long, default_value_t = 12)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes <out>_spectrogram.pgm, <out>_decay.csv,
    /// <out>_recovery.csv
    #[arg(long, default_value = "gabor")]
    out: PathBuf,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, default_value = "gaussian")]
    ensemble: Ensemble,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    l: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parse argv and run; returns the process exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Testable entry point over explicit arguments.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    if let Ok(threads) = std::env::var("SPARSEKIT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let _ = e.print();
                    1
                }
            }
        }
    };
    let outcome = match cli.cmd {
        Cmd::Solve(a) => cmd_solve(&a),
        Cmd::Curve(a) => cmd_curve(&a),
        Cmd::Phase(a) => cmd_phase(&a),
        Cmd::Online(a) => cmd_online(&a),
        Cmd::GaborDemo(a) => cmd_gabor(&a),
        Cmd::Diag(a) => cmd_diag(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn meta(pairs: &[(&str, String)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let start = Instant::now();
    let matrix = generate(a.ensemble, a.n, a.l, derive_seed(a.seed, &[1]), true)?;
    let ens = VectorEnsemble {
        kind: a.vectors,
        sparsity_k: a.k,
        support_rule: SupportRule::ExactK,
    };
    let truth = gen_sparse_vector(&ens, a.l, derive_seed(a.seed, &[2]))?;
    let mut y = matrix.entries() * &truth;
    if a.sigma > 0.0 {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng_from_seed(derive_seed(a.seed, &[3]));
        for v in y.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *v += a.sigma * g;
        }
    }
    let problem = RegressionProblem::new(matrix, y)?;
    let result = dispatch_solver(a.algo, &problem, a.k, a.lambda)?;
    let rel_error = if truth.norm() > 0.0 {
        (&result.estimate - &truth).norm() / truth.norm()
    } else {
        result.estimate.norm()
    };
    let success = if a.sigma == 0.0 {
        rel_error <= a.tol
    } else {
        let true_support: Vec<usize> = truth
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        let mut est = crate::operators::top_k_indices(&result.estimate, true_support.len());
        est.sort_unstable();
        est == true_support
    };

    let rows: Vec<Vec<String>> = (0..a.l)
        .map(|i| {
            vec![
                i.to_string(),
                fmt_f64(result.estimate[i]),
                fmt_f64(truth[i]),
            ]
        })
        .collect();
    write_csv(
        &a.out,
        &meta(&[
            ("command", "solve".into()),
            ("algo", a.algo.to_string()),
            ("ensemble", a.ensemble.to_string()),
            ("vectors", a.vectors.to_string()),
            ("n", a.n.to_string()),
            ("l", a.l.to_string()),
            ("k", a.k.to_string()),
            ("sigma", fmt_f64(a.sigma)),
            ("seed", a.seed.to_string()),
        ]),
        &["index", "estimate", "truth"],
        &rows,
    )?;
    println!(
        "solve algo={} n={} l={} k={} seed={} success={} rel_error={:.3e} iterations={} residual={:.3e} wall_secs={:.3}",
        a.algo,
        a.n,
        a.l,
        a.k,
        a.seed,
        success,
        rel_error,
        result.iterations,
        result.residual_norm,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_curve(a: &CurveArgs) -> Result<()> {
    if a.n > a.l || a.n == 0 {
        return Err(SparseError::InvalidParameter(
            "need 0 < n <= l for a recovery curve".into(),
        ));
    }
    let start = Instant::now();
    let base = TrialSpec {
        matrix_ensemble: a.ensemble,
        vector_ensemble: VectorEnsemble {
            kind: a.vectors,
            sparsity_k: 1,
            support_rule: SupportRule::ExactK,
        },
        n: a.n,
        l: a.l,
        noise_sigma: a.sigma,
        solver: a.algo,
        lambda: a.lambda,
        success_tol: a.tol,
    };
    let curve = recovery_curve(&base, a.trials, a.seed);
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|c| {
            vec![
                c.k.to_string(),
                c.successes.to_string(),
                c.trials.to_string(),
                fmt_f64(c.successes as f64 / c.trials as f64),
            ]
        })
        .collect();
    write_csv(
        &a.out,
        &meta(&[
            ("command", "curve".into()),
            ("algo", a.algo.to_string()),
            ("ensemble", a.ensemble.to_string()),
            ("vectors", a.vectors.to_string()),
            ("l", a.l.to_string()),
            ("n", a.n.to_string()),
            ("trials", a.trials.to_string()),
            ("sigma", fmt_f64(a.sigma)),
            ("tol", fmt_f64(a.tol)),
            ("seed", a.seed.to_string()),
        ]),
        &["k", "successes", "trials", "probability"],
        &rows,
    )?;
    println!(
        "curve algo={} l={} n={} trials={} seed={} points={} wall_secs={:.3}",
        a.algo,
        a.l,
        a.n,
        a.trials,
        a.seed,
        curve.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_phase(a: &PhaseArgs) -> Result<()> {
    if a.grid == 0 || a.l == 0 {
        return Err(SparseError::InvalidParameter(
            "grid and l must be positive".into(),
        ));
    }
    let start = Instant::now();
    let spec = PhaseSpec {
        l: a.l,
        grid: a.grid,
        trials: a.trials,
        solver: a.algo,
        lambda: a.lambda,
        matrix_ensemble: a.ensemble,
        vector_kind: a.vectors,
        noise_sigma: a.sigma,
        success_tol: a.tol,
        seed: a.seed,
    };
    let cells = phase_grid(&spec);
    let metadata = meta(&[
        ("command", "phase".into()),
        ("algo", a.algo.to_string()),
        ("ensemble", a.ensemble.to_string()),
        ("vectors", a.vectors.to_string()),
        ("l", a.l.to_string()),
        ("grid", a.grid.to_string()),
        ("trials", a.trials.to_string()),
        ("sigma", fmt_f64(a.sigma)),
        ("tol", fmt_f64(a.tol)),
        ("seed", a.seed.to_string()),
    ]);
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                fmt_f64(c.alpha),
                fmt_f64(c.beta),
                c.successes.to_string(),
                c.trials.to_string(),
            ]
        })
        .collect();
    let csv_path = a.out.with_extension("csv");
    let pgm_path = a.out.with_extension("pgm");
    write_csv(&csv_path, &metadata, &["alpha", "beta", "successes", "trials"], &rows)?;
    write_pgm(&pgm_path, a.grid, a.grid, &phase_pixels(&cells))?;
    let median_wall: f64 = {
        let mut w: Vec<f64> = cells.iter().map(|c| c.median_wall_secs).collect();
        w.sort_by(|x, y| x.partial_cmp(y).unwrap());
        w[w.len() / 2]
    };
    println!(
        "phase algo={} l={} grid={} trials={} seed={} files={},{} median_cell_wall_secs={:.4} wall_secs={:.3}",
        a.algo,
        a.l,
        a.grid,
        a.trials,
        a.seed,
        csv_path.display(),
        pgm_path.display(),
        median_wall,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_online(a: &OnlineArgs) -> Result<()> {
    let start = Instant::now();
    let mut scenario = match &a.config {
        Some(path) => OnlineScenario::from_key_values(&std::fs::read_to_string(path)?)?,
        None => OnlineScenario {
            dimension: 256,
            samples: 1500,
            sparsity: 25,
            noise_sigma: 0.1f64.sqrt(),
            change_at: Some(750),
            change_count: 3,
            seed: 0,
        },
    };
    if let Some(l) = a.l {
        scenario.dimension = l;
    }
    if let Some(s) = a.samples {
        scenario.samples = s;
    }
    if let Some(k) = a.k {
        scenario.sparsity = k;
    }
    if let Some(s) = a.sigma {
        scenario.noise_sigma = s;
    }
    if let Some(c) = a.change_at {
        scenario.change_at = Some(c);
    }
    if let Some(c) = a.change_count {
        scenario.change_count = c;
    }
    if let Some(s) = a.seed {
        scenario.seed = s;
    }
    if !scenario.dimension.is_power_of_two() {
        return Err(SparseError::InvalidParameter(
            "dimension must be a power of two".into(),
        ));
    }
    let (ad_cfg, sp_cfg) = default_online_configs(&scenario);
    let traces = online_experiment(&scenario, &ad_cfg, &sp_cfg)?;
    let stem = a.out.to_string_lossy().to_string();
    for (algo, trace) in &traces {
        let path = PathBuf::from(format!("{stem}_{algo}.csv"));
        let rows: Vec<Vec<String>> = trace
            .iter()
            .enumerate()
            .map(|(i, v)| {
                vec![
                    (i + 1).to_string(),
                    fmt_f64(10.0 * v),
                    algo.to_string(),
                    scenario.seed.to_string(),
                ]
            })
            .collect();
        write_csv(
            &path,
            &meta(&[
                ("command", "online".into()),
                ("algo", algo.to_string()),
                ("dimension", scenario.dimension.to_string()),
                ("samples", scenario.samples.to_string()),
                ("sparsity", scenario.sparsity.to_string()),
                ("noise_sigma", fmt_f64(scenario.noise_sigma)),
                (
                    "change_at",
                    scenario
                        .change_at
                        .map(|c| c.to_string())
                        .unwrap_or_else(|| "none".into()),
                ),
                ("change_count", scenario.change_count.to_string()),
                ("seed", scenario.seed.to_string()),
            ]),
            &["n", "mse_db", "algo", "seed"],
            &rows,
        )?;
        println!("online algo={algo} trace={}", path.display());
    }
    println!(
        "online l={} samples={} seed={} wall_secs={:.3}",
        scenario.dimension,
        scenario.samples,
        scenario.seed,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn demo_signal(l: usize) -> DVector<f64> {
    use std::f64::consts::PI;
    // linear chirp sweeping f0..f1 cycles plus a fixed tone
    let f0 = 5.0;
    let f1 = 40.0;
    let ft = 56.0;
    DVector::from_fn(l, |n, _| {
        let t = n as f64 / l as f64;
        let chirp = (2.0 * PI * (f0 + 0.5 * (f1 - f0) * t) * t * l as f64 / l as f64).cos();
        let tone = 0.7 * (2.0 * PI * ft * t).cos();
        chirp + tone
    })
}

fn cmd_gabor(a: &GaborArgs) -> Result<()> {
    let start = Instant::now();
    let sigma = a.sigma.unwrap_or(a.l as f64 / 16.0);
    let params = GaborParams {
        length: a.l,
        sigma,
        time_step: a.alpha,
        freq_step: a.beta,
    };
    let frame = gabor_dictionary(&params)?;
    let signal = demo_signal(a.l);
    let coeffs = frame.atoms.transpose() * &signal;

    // collapse quadrature pairs into per-(shift, frequency) magnitudes;
    // atom layout is shift-major, frequency-minor, cos before sin
    let n_shifts = a.l / a.alpha;
    let n_freqs = a.l / a.beta;
    let mut mags = vec![0.0f64; n_shifts * n_freqs];
    let mut col = 0usize;
    for m in 0..n_shifts {
        for f in 0..n_freqs {
            let i = f * a.beta;
            let c = coeffs[col];
            col += 1;
            let s = if i == 0 || 2 * i == a.l {
                0.0
            } else {
                let v = coeffs[col];
                col += 1;
                v
            };
            mags[f * n_shifts + m] = (c * c + s * s).sqrt();
        }
    }
    let peak = mags.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    // 60 dB dynamic range, max-normalized
    let pixels: Vec<u8> = mags
        .iter()
        .map(|&m| {
            let db = 20.0 * (m / peak).max(1e-12).log10();
            let clipped = db.clamp(-60.0, 0.0);
            (255.0 * (clipped + 60.0) / 60.0).round() as u8
        })
        .collect();
    let stem = a.out.to_string_lossy().to_string();
    let pgm_path = PathBuf::from(format!("{stem}_spectrogram.pgm"));
    write_pgm(&pgm_path, n_shifts, n_freqs, &pixels)?;

    let mut sorted: Vec<f64> = coeffs.iter().map(|v| v.abs()).collect();
    sorted.sort_by(|x, y| y.partial_cmp(x).unwrap());
    let decay_rows: Vec<Vec<String>> = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), fmt_f64(*v)])
        .collect();
    let decay_path = PathBuf::from(format!("{stem}_decay.csv"));
    let metadata = meta(&[
        ("command", "gabor-demo".into()),
        ("l", a.l.to_string()),
        ("sigma", fmt_f64(sigma)),
        ("alpha", a.alpha.to_string()),
        ("beta", a.beta.to_string()),
        ("k", a.k.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    write_csv(&decay_path, &metadata, &["rank", "magnitude"], &decay_rows)?;

    // compressive sensing at N = l/8 with a sign matrix, recovery by OMP
    // in the Gabor synthesis model
    let n_meas = (a.l / 8).max(1);
    let sensing = generate(Ensemble::Bernoulli, n_meas, a.l, derive_seed(a.seed, &[7]), false)?;
    let y = sensing.entries() * &signal;
    let combined = sensing.entries() * &frame.atoms;
    let problem = RegressionProblem::new(
        crate::ensembles::SensingMatrix::from_matrix(combined),
        y,
    )?;
    let cfg = BatchConfig {
        max_iters: a.k,
        tol: 1e-10 * problem.measurements.norm(),
        ..BatchConfig::default()
    };
    let rec = omp(&problem, &cfg)?;
    let rebuilt = &frame.atoms * &rec.estimate;
    let rel_error = (&rebuilt - &signal).norm() / signal.norm();

    let mut rec_sorted: Vec<(usize, f64)> = rec
        .estimate
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, v.abs()))
        .collect();
    rec_sorted.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap());
    let mut rec_meta = metadata.clone();
    rec_meta.push(("n_measurements".into(), n_meas.to_string()));
    rec_meta.push(("rel_signal_error".into(), fmt_f64(rel_error)));
    let rec_rows: Vec<Vec<String>> = rec_sorted
        .iter()
        .enumerate()
        .map(|(rank, (atom, mag))| {
            vec![(rank + 1).to_string(), atom.to_string(), fmt_f64(*mag)]
        })
        .collect();
    let rec_path = PathBuf::from(format!("{stem}_recovery.csv"));
    write_csv(&rec_path, &rec_meta, &["rank", "atom", "magnitude"], &rec_rows)?;

    println!(
        "gabor-demo l={} alpha={} beta={} atoms={} rel_signal_error={:.3e} files={},{},{} wall_secs={:.3}",
        a.l,
        a.alpha,
        a.beta,
        frame.atoms.ncols(),
        rel_error,
        pgm_path.display(),
        decay_path.display(),
        rec_path.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_diag(a: &DiagArgs) -> Result<()> {
    let matrix = generate(a.ensemble, a.n, a.l, a.seed, true)?;
    let mu = ensembles::mutual_coherence(&matrix)?;
    println!("ensemble={} n={} l={} seed={}", a.ensemble, a.n, a.l, a.seed);
    println!("coherence={mu:.12}");
    match ensembles::welch_bound(a.n, a.l) {
        Ok(w) => println!("welch_bound={w:.12}"),
        Err(e) => println!("welch_bound=undefined ({e})"),
    }
    match ensembles::spark(&matrix, ensembles::DEFAULT_MAX_COLS) {
        Ok(s) => println!("spark={s}"),
        Err(SparseError::GuardExceeded(msg)) => println!("spark=skipped ({msg})"),
        Err(e) => return Err(e),
    }
    Ok(())
}
