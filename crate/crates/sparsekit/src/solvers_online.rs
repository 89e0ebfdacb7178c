//! Time-recursive sparse estimation.
//!
//! AdCoSaMP replaces the least-squares step of the CSMP scheme with an LMS
//! recursion driven by an exponentially forgotten correlation vector.
//! SpAPSM averages metric projections onto the last q data hyperslabs,
//! extrapolates, and projects onto a (possibly weighted) l1 ball.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dictionaries::haar_matrix;
use crate::error::{Result, SparseError};
use crate::operators::{
    project_hyperslab, project_weighted_l1_ball, top_k_indices, Hyperslab, WeightedL1Ball,
};
use crate::rng::{derive_seed, rng_from_seed};

/// Parameters shared by the online schemes. `ball_radius` defaults to the
/// sparsity estimate when weights are in use.
#[derive(Debug, Clone)]
pub struct OnlineConfig {
    pub sparsity_k: usize,
    pub lms_mu: f64,
    pub forgetting_beta: f64,
    pub slab_epsilon: f64,
    pub q_slabs: usize,
    pub ball_radius: f64,
    pub extrapolation_scale: f64,
    pub weight_epsilon: f64,
    pub use_weights: bool,
    pub normalized_lms: bool,
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sparsity_k == 0 || self.q_slabs == 0 {
            return Err(SparseError::InvalidParameter(
                "sparsity_k and q_slabs must be positive".into(),
            ));
        }
        if self.lms_mu <= 0.0
            || !(0.0..=1.0).contains(&self.forgetting_beta)
            || self.forgetting_beta == 0.0
        {
            return Err(SparseError::InvalidParameter(
                "need lms_mu > 0 and forgetting_beta in (0,1]".into(),
            ));
        }
        if self.slab_epsilon < 0.0 || self.ball_radius <= 0.0 || self.weight_epsilon <= 0.0 {
            return Err(SparseError::InvalidParameter(
                "need slab_epsilon >= 0, ball_radius > 0, weight_epsilon > 0".into(),
            ));
        }
        if self.extrapolation_scale <= 0.0 || self.extrapolation_scale >= 2.0 {
            return Err(SparseError::InvalidParameter(
                "extrapolation_scale must lie in (0, 2)".into(),
            ));
        }
        Ok(())
    }
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            sparsity_k: 1,
            lms_mu: 0.5,
            forgetting_beta: 0.99,
            slab_epsilon: 0.0,
            q_slabs: 1,
            ball_radius: 1.0,
            extrapolation_scale: 1.0,
            weight_epsilon: 1e-2,
            use_weights: true,
            normalized_lms: false,
        }
    }
}

/// One training pair `(x_n, y_n)` with its 1-based time index.
#[derive(Debug, Clone)]
pub struct StreamSample {
    pub input: DVector<f64>,
    pub output: f64,
    pub time: usize,
}

/// Mutable per-stream state. `lms_accumulator` is AdCoSaMP's un-pruned
/// vector, kept separately from the hard-thresholded `estimate`.
#[derive(Debug, Clone)]
pub struct OnlineState {
    pub estimate: DVector<f64>,
    pub lms_accumulator: DVector<f64>,
    pub correlation: DVector<f64>,
    pub prev_input: Option<DVector<f64>>,
    pub prev_error: f64,
    pub slab_buffer: VecDeque<StreamSample>,
    pub mse_history: Vec<f64>,
}

impl OnlineState {
    pub fn new(l: usize) -> Self {
        OnlineState {
            estimate: DVector::zeros(l),
            lms_accumulator: DVector::zeros(l),
            correlation: DVector::zeros(l),
            prev_input: None,
            prev_error: 0.0,
            slab_buffer: VecDeque::new(),
            mse_history: Vec::new(),
        }
    }
}

/// One AdCoSaMP time update. The first sample only initializes the error
/// recursion (`e(1) = y_1`); each later sample refreshes the correlation
/// vector, runs the LMS update on the merged support and prunes to the `k`
/// largest accumulator entries.
pub fn adcosamp_step(state: &mut OnlineState, sample: &StreamSample, cfg: &OnlineConfig) {
    let l = state.estimate.len();
    let x = &sample.input;
    debug_assert_eq!(x.len(), l);

    if let Some(prev) = state.prev_input.take() {
        state.correlation =
            &state.correlation * cfg.forgetting_beta + prev * state.prev_error;

        let t = 2 * cfg.sparsity_k;
        let mut support: Vec<usize> = state
            .estimate
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        for i in top_k_indices(&state.correlation, t.min(l)) {
            if !support.contains(&i) {
                support.push(i);
            }
        }

        let mut pred = 0.0;
        for &i in &support {
            pred += x[i] * state.lms_accumulator[i];
        }
        let lms_err = sample.output - pred;
        let step = if cfg.normalized_lms {
            let energy: f64 = support.iter().map(|&i| x[i] * x[i]).sum();
            cfg.lms_mu / (energy + 1e-12)
        } else {
            cfg.lms_mu
        };
        for &i in &support {
            state.lms_accumulator[i] += step * x[i] * lms_err;
        }

        let mut restricted = DVector::zeros(l);
        for &i in &support {
            restricted[i] = state.lms_accumulator[i];
        }
        let keep = top_k_indices(&restricted, cfg.sparsity_k.min(l));
        state.estimate = DVector::zeros(l);
        for i in keep {
            state.estimate[i] = restricted[i];
        }
    }

    let e = sample.output - x.dot(&state.estimate);
    state.prev_error = e;
    state.prev_input = Some(x.clone());
    state.mse_history.push(e * e);
}

/// One SpAPSM time update: average the hyperslab projections of the current
/// estimate over the buffered samples, extrapolate by
/// `mu_n = extrapolation_scale * M_n`, then project onto the weighted l1
/// ball built from the previous estimate.
pub fn spapsm_step(state: &mut OnlineState, sample: &StreamSample, cfg: &OnlineConfig) {
    let l = state.estimate.len();
    state.slab_buffer.push_back(sample.clone());
    while state.slab_buffer.len() > cfg.q_slabs {
        state.slab_buffer.pop_front();
    }
    let q = state.slab_buffer.len();
    let omega = 1.0 / q as f64;

    let theta = state.estimate.clone();
    let mut combined: DVector<f64> = DVector::zeros(l);
    let mut numerator = 0.0;
    for s in &state.slab_buffer {
        // a zero input defines a degenerate slab; its projection is the
        // identity
        let proj = if s.input.norm() <= f64::EPSILON {
            theta.clone()
        } else {
            let slab = Hyperslab {
                normal: s.input.clone(),
                center: s.output,
                half_width: cfg.slab_epsilon,
            };
            project_hyperslab(&slab, &theta).expect("dimensions checked")
        };
        numerator += omega * (&proj - &theta).norm_squared();
        combined += proj * omega;
    }
    let diff = combined - &theta;
    let denom = diff.norm_squared();
    let m_n = if denom < 1e-14 { 1.0 } else { numerator / denom };
    debug_assert!(m_n >= 1.0 - 1e-9);
    let mu_n = cfg.extrapolation_scale * m_n;

    let half = &theta + diff * mu_n;
    let weights = if cfg.use_weights {
        DVector::from_fn(l, |i, _| 1.0 / (theta[i].abs() + cfg.weight_epsilon))
    } else {
        DVector::from_element(l, 1.0)
    };
    let ball = WeightedL1Ball {
        weights,
        radius: cfg.ball_radius,
    };
    state.estimate = project_weighted_l1_ball(&ball, &half).expect("dimensions checked");

    let e = sample.output - sample.input.dot(&state.estimate);
    state.mse_history.push(e * e);
}

/// Which online scheme `run_stream` drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlineAlgo {
    AdCoSaMP,
    Spapsm,
}

impl std::fmt::Display for OnlineAlgo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OnlineAlgo::AdCoSaMP => write!(f, "adcosamp"),
            OnlineAlgo::Spapsm => write!(f, "spapsm"),
        }
    }
}

/// Synthetic time-varying scenario: a signal with a sparse orthonormal
/// (Haar) wavelet representation observed through Gaussian sensing vectors,
/// with an optional abrupt coefficient change mid-stream.
#[derive(Debug, Clone)]
pub struct OnlineScenario {
    pub dimension: usize,
    pub samples: usize,
    pub sparsity: usize,
    pub noise_sigma: f64,
    pub change_at: Option<usize>,
    pub change_count: usize,
    pub seed: u64,
}

impl Default for OnlineScenario {
    fn default() -> Self {
        OnlineScenario {
            dimension: 128,
            samples: 1000,
            sparsity: 10,
            noise_sigma: 0.0,
            change_at: None,
            change_count: 0,
            seed: 0,
        }
    }
}

impl OnlineScenario {
    /// Parse a flat `key=value` description, one pair per line; `#` starts
    /// a comment. Unknown keys are rejected.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut sc = OnlineScenario::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SparseError::Parse(format!("line {}: expected key=value", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |e: &dyn std::fmt::Display| {
                SparseError::Parse(format!("line {}: {key}: {e}", lineno + 1))
            };
            match key {
                "dimension" => sc.dimension = value.parse().map_err(|e| bad(&e))?,
                "samples" => sc.samples = value.parse().map_err(|e| bad(&e))?,
                "sparsity" => sc.sparsity = value.parse().map_err(|e| bad(&e))?,
                "noise_sigma" => sc.noise_sigma = value.parse().map_err(|e| bad(&e))?,
                "change_at" => sc.change_at = Some(value.parse().map_err(|e| bad(&e))?),
                "change_count" => sc.change_count = value.parse().map_err(|e| bad(&e))?,
                "seed" => sc.seed = value.parse().map_err(|e| bad(&e))?,
                other => {
                    return Err(SparseError::Parse(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        if !sc.dimension.is_power_of_two() {
            return Err(SparseError::InvalidParameter(
                "dimension must be a power of two for the wavelet basis".into(),
            ));
        }
        if sc.sparsity == 0 || sc.sparsity > sc.dimension {
            return Err(SparseError::InvalidParameter(
                "sparsity must lie in 1..=dimension".into(),
            ));
        }
        Ok(sc)
    }
}

fn sparse_coefficients(
    l: usize,
    k: usize,
    rng: &mut impl Rng,
) -> DVector<f64> {
    let mut theta = DVector::zeros(l);
    let mut placed = 0;
    while placed < k {
        let i = rng.gen_range(0..l);
        if theta[i] == 0.0 {
            // uniform in [-1, 1], re-drawn if degenerate zero
            let v: f64 = rng.gen_range(-1.0..1.0);
            if v != 0.0 {
                theta[i] = v;
                placed += 1;
            }
        }
    }
    theta
}

/// Drive one of the online schemes over a generated stream. Returns the
/// final state together with the signal-domain error trace
/// `log10(0.5 ||s - Phi theta(n)||^2)` per sample.
pub fn run_stream(
    scenario: &OnlineScenario,
    algo: OnlineAlgo,
    cfg: &OnlineConfig,
) -> Result<(OnlineState, Vec<f64>)> {
    cfg.validate()?;
    if !scenario.dimension.is_power_of_two() {
        return Err(SparseError::InvalidParameter(
            "dimension must be a power of two for the wavelet basis".into(),
        ));
    }
    let l = scenario.dimension;
    let phi = haar_matrix(l);
    let mut rng = rng_from_seed(derive_seed(scenario.seed, &[0x0411]));
    let mut truth = sparse_coefficients(l, scenario.sparsity, &mut rng);

    let mut state = OnlineState::new(l);
    let mut trace = Vec::with_capacity(scenario.samples);
    for n in 1..=scenario.samples {
        if scenario.change_at == Some(n) && scenario.change_count > 0 {
            let mut changed = 0;
            while changed < scenario.change_count {
                let i = rng.gen_range(0..l);
                let v: f64 = rng.gen_range(-1.0..1.0);
                if v != 0.0 {
                    truth[i] = v;
                    changed += 1;
                }
            }
        }
        let raw: DVector<f64> =
            DVector::from_fn(l, |_, _| StandardNormal.sample(&mut rng));
        let input = phi.transpose() * raw;
        let noise: f64 = if scenario.noise_sigma > 0.0 {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scenario.noise_sigma
        } else {
            0.0
        };
        let output = input.dot(&truth) + noise;
        let sample = StreamSample {
            input,
            output,
            time: n,
        };
        match algo {
            OnlineAlgo::AdCoSaMP => adcosamp_step(&mut state, &sample, cfg),
            OnlineAlgo::Spapsm => spapsm_step(&mut state, &sample, cfg),
        }
        // Phi is orthonormal, so the signal-domain error equals the
        // coefficient-domain error
        let err = (&truth - &state.estimate).norm_squared();
        trace.push((0.5 * err).max(1e-300).log10());
    }
    Ok((state, trace))
}
