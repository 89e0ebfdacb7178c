//! Sensing-matrix ensembles, classical estimators and sparsity diagnostics.
//!
//! Matrices are dense, real valued `N x l` operators. The random ensembles
//! follow the usual compressed-sensing conventions: Gaussian entries of
//! variance `1/N`, symmetric Bernoulli entries `+-1/sqrt(N)`, sparse ternary
//! entries, columns drawn uniformly on the unit sphere, and partial rows of
//! an orthonormal transform. The "partial Fourier" construction is realized
//! in real arithmetic: a normalized Hadamard matrix when `l` is a power of
//! two, otherwise the Q factor of a random square matrix.

use std::fmt;
use std::io::{BufRead, Write};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SparseError};
use crate::rng::rng_from_seed;

/// Relative singular-value cutoff used by all numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Default guard on the number of columns for exhaustive spark/RIP searches.
pub const DEFAULT_MAX_COLS: usize = 20;

/// Guard on the number of supports enumerated by `rip_constant`.
pub const MAX_RIP_SUPPORTS: u128 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ensemble {
    Gaussian,
    Bernoulli,
    Ternary,
    UniformSphere,
    PartialOrthonormal,
    Explicit,
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Bernoulli => "bernoulli",
            Ensemble::Ternary => "ternary",
            Ensemble::UniformSphere => "uniform-sphere",
            Ensemble::PartialOrthonormal => "partial-orthonormal",
            Ensemble::Explicit => "explicit",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Ensemble {
    type Err = SparseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Ensemble::Gaussian),
            "bernoulli" => Ok(Ensemble::Bernoulli),
            "ternary" => Ok(Ensemble::Ternary),
            "uniform-sphere" => Ok(Ensemble::UniformSphere),
            "partial-orthonormal" => Ok(Ensemble::PartialOrthonormal),
            "explicit" => Ok(Ensemble::Explicit),
            other => Err(SparseError::Parse(format!("unknown ensemble `{other}`"))),
        }
    }
}

/// A dense `N x l` measurement operator with provenance.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    entries: DMatrix<f64>,
    ensemble: Ensemble,
    seed: u64,
    column_normalized: bool,
}

impl SensingMatrix {
    /// Wrap an explicit matrix.
    pub fn from_matrix(entries: DMatrix<f64>) -> Self {
        SensingMatrix {
            entries,
            ensemble: Ensemble::Explicit,
            seed: 0,
            column_normalized: false,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn ensemble(&self) -> Ensemble {
        self.ensemble
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn column_normalized(&self) -> bool {
        self.column_normalized
    }

    /// Scale every column to unit Euclidean norm.
    pub fn normalize_columns(&mut self) -> Result<()> {
        for mut col in self.entries.column_iter_mut() {
            let norm = col.norm();
            if norm <= f64::EPSILON {
                return Err(SparseError::DegenerateDictionary(
                    "cannot normalize a zero column".into(),
                ));
            }
            col /= norm;
        }
        self.column_normalized = true;
        Ok(())
    }

    /// Serialize as CSV: a `# rows,cols,ensemble,seed` header followed by one
    /// line per row, entries printed with 17 significant digits.
    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# {},{},{},{}",
            self.n_rows(),
            self.n_cols(),
            self.ensemble,
            self.seed
        )?;
        for i in 0..self.n_rows() {
            let row = (0..self.n_cols())
                .map(|j| format!("{:.16e}", self.entries[(i, j)]))
                .join(",");
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn from_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| SparseError::Parse("empty matrix file".into()))??;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| SparseError::Parse("missing `#` header line".into()))?
            .trim();
        let fields: Vec<&str> = header.split(',').collect();
        if fields.len() != 4 {
            return Err(SparseError::Parse(format!(
                "header must be `rows,cols,ensemble,seed`, got `{header}`"
            )));
        }
        let rows: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| SparseError::Parse("bad row count".into()))?;
        let cols: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| SparseError::Parse("bad column count".into()))?;
        let ensemble: Ensemble = fields[2].trim().parse()?;
        let seed: u64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| SparseError::Parse("bad seed".into()))?;

        let mut data = Vec::with_capacity(rows * cols);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for tok in line.split(',') {
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|_| SparseError::Parse(format!("bad entry `{tok}`")))?;
                data.push(v);
            }
        }
        if data.len() != rows * cols {
            return Err(SparseError::Parse(format!(
                "expected {} entries, found {}",
                rows * cols,
                data.len()
            )));
        }
        let entries = DMatrix::from_row_slice(rows, cols, &data);
        let column_normalized = entries
            .column_iter()
            .all(|c| (c.norm() - 1.0).abs() <= 1e-12);
        Ok(SensingMatrix {
            entries,
            ensemble,
            seed,
            column_normalized,
        })
    }
}

/// A regression/sensing instance `y = X theta + noise`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub matrix: SensingMatrix,
    pub measurements: DVector<f64>,
    pub truth: Option<DVector<f64>>,
    pub noise_sigma: f64,
}

impl RegressionProblem {
    pub fn new(matrix: SensingMatrix, measurements: DVector<f64>) -> Result<Self> {
        if measurements.len() != matrix.n_rows() {
            return Err(SparseError::InvalidDimensions(format!(
                "{} measurements for a {}-row matrix",
                measurements.len(),
                matrix.n_rows()
            )));
        }
        Ok(RegressionProblem {
            matrix,
            measurements,
            truth: None,
            noise_sigma: 0.0,
        })
    }

    pub fn with_truth(mut self, truth: DVector<f64>, noise_sigma: f64) -> Result<Self> {
        if truth.len() != self.matrix.n_cols() {
            return Err(SparseError::InvalidDimensions(format!(
                "truth has length {}, expected {}",
                truth.len(),
                self.matrix.n_cols()
            )));
        }
        if noise_sigma == 0.0 {
            let resid = (&self.measurements - self.matrix.entries() * &truth).norm();
            if resid > 1e-10 * self.measurements.norm().max(1.0) {
                return Err(SparseError::InvalidParameter(
                    "noiseless problem is inconsistent with the stated truth".into(),
                ));
            }
        }
        self.truth = Some(truth);
        self.noise_sigma = noise_sigma;
        Ok(self)
    }
}

/// Diagnostics bundle for a sensing matrix.
#[derive(Debug, Clone, Default)]
pub struct MatrixDiagnostics {
    pub coherence: f64,
    pub welch_lower_bound: Option<f64>,
    pub spark: Option<usize>,
    pub rip_constants: Vec<(usize, f64)>,
}

/// Draw a sensing matrix from one of the named ensembles.
///
/// Deterministic for a fixed seed: entries are generated in row-major order
/// from a ChaCha8 stream.
pub fn generate(
    ensemble: Ensemble,
    n: usize,
    l: usize,
    seed: u64,
    normalize: bool,
) -> Result<SensingMatrix> {
    if n == 0 || l == 0 {
        return Err(SparseError::InvalidDimensions(
            "matrix dimensions must be positive".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let entries = match ensemble {
        Ensemble::Gaussian => {
            let dist = Normal::new(0.0, (1.0 / n as f64).sqrt()).unwrap();
            fill_row_major(n, l, || dist.sample(&mut rng))
        }
        Ensemble::Bernoulli => {
            let a = 1.0 / (n as f64).sqrt();
            fill_row_major(n, l, || if rng.gen::<bool>() { a } else { -a })
        }
        Ensemble::Ternary => {
            // +-sqrt(3/N) with probability 1/6 each, zero with probability 2/3.
            let a = (3.0 / n as f64).sqrt();
            fill_row_major(n, l, || {
                let u: f64 = rng.gen();
                if u < 1.0 / 6.0 {
                    a
                } else if u < 1.0 / 3.0 {
                    -a
                } else {
                    0.0
                }
            })
        }
        Ensemble::UniformSphere => {
            let dist = Normal::new(0.0, 1.0).unwrap();
            let mut m = fill_row_major(n, l, || dist.sample(&mut rng));
            for mut col in m.column_iter_mut() {
                let norm = col.norm();
                col /= norm;
            }
            m
        }
        Ensemble::PartialOrthonormal => {
            if n > l {
                return Err(SparseError::InvalidDimensions(format!(
                    "partial-orthonormal needs n <= l, got {n} > {l}"
                )));
            }
            let basis = if l.is_power_of_two() {
                hadamard(l)
            } else {
                let dist = Normal::new(0.0, 1.0).unwrap();
                let g = fill_row_major(l, l, || dist.sample(&mut rng));
                g.qr().q()
            };
            // n distinct rows, chosen by partial Fisher-Yates.
            let mut idx: Vec<usize> = (0..l).collect();
            for i in 0..n {
                let j = rng.gen_range(i..l);
                idx.swap(i, j);
            }
            DMatrix::from_fn(n, l, |i, j| basis[(idx[i], j)])
        }
        Ensemble::Explicit => {
            return Err(SparseError::InvalidParameter(
                "the explicit ensemble cannot be generated; use SensingMatrix::from_matrix".into(),
            ))
        }
    };
    let mut m = SensingMatrix {
        entries,
        ensemble,
        seed,
        column_normalized: false,
    };
    if normalize {
        m.normalize_columns()?;
    }
    Ok(m)
}

fn fill_row_major(n: usize, l: usize, mut f: impl FnMut() -> f64) -> DMatrix<f64> {
    let mut data = Vec::with_capacity(n * l);
    for _ in 0..n * l {
        data.push(f());
    }
    DMatrix::from_row_slice(n, l, &data)
}

/// Normalized Sylvester-Hadamard matrix of power-of-two order, rows and
/// columns orthonormal.
pub fn hadamard(l: usize) -> DMatrix<f64> {
    assert!(l.is_power_of_two(), "Hadamard order must be a power of two");
    let mut h = DMatrix::from_element(1, 1, 1.0);
    let mut size = 1;
    while size < l {
        let mut next = DMatrix::zeros(2 * size, 2 * size);
        for i in 0..size {
            for j in 0..size {
                let v = h[(i, j)];
                next[(i, j)] = v;
                next[(i, j + size)] = v;
                next[(i + size, j)] = v;
                next[(i + size, j + size)] = -v;
            }
        }
        h = next;
        size *= 2;
    }
    h / (l as f64).sqrt()
}

/// Largest normalized absolute inner product between distinct columns.
pub fn mutual_coherence(x: &SensingMatrix) -> Result<f64> {
    let m = x.entries();
    let l = m.ncols();
    if l < 2 {
        return Err(SparseError::InvalidDimensions(
            "coherence needs at least two columns".into(),
        ));
    }
    let norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|&n| n <= f64::EPSILON) {
        return Err(SparseError::DegenerateDictionary(
            "zero column in dictionary".into(),
        ));
    }
    let mut mu: f64 = 0.0;
    for i in 0..l {
        for j in (i + 1)..l {
            let c = m.column(i).dot(&m.column(j)).abs() / (norms[i] * norms[j]);
            mu = mu.max(c);
        }
    }
    Ok(mu.min(1.0))
}

/// Welch lower bound `sqrt((l-n)/(n(l-1)))` on the coherence of an
/// overcomplete `n x l` matrix.
pub fn welch_bound(n: usize, l: usize) -> Result<f64> {
    if n == 0 {
        return Err(SparseError::InvalidDimensions("n must be positive".into()));
    }
    if l <= n {
        return Err(SparseError::InvalidParameter(
            "Welch bound is defined for the overcomplete case l > n".into(),
        ));
    }
    Ok((((l - n) as f64) / ((n * (l - 1)) as f64)).sqrt())
}

/// Smallest number of linearly dependent columns, by exhaustive search.
///
/// Returns `N + 1` when every subset of at most `N` columns is independent.
/// Refuses to run when `l > max_cols`; the search is combinatorial.
pub fn spark(x: &SensingMatrix, max_cols: usize) -> Result<usize> {
    let m = x.entries();
    let (n, l) = (m.nrows(), m.ncols());
    if l > max_cols {
        return Err(SparseError::GuardExceeded(format!(
            "spark search over {l} columns exceeds the guard of {max_cols}; \
             raise the guard explicitly if you accept the cost"
        )));
    }
    for size in 1..=n.min(l) {
        for subset in (0..l).combinations(size) {
            if columns_dependent(m, &subset) {
                return Ok(size);
            }
        }
    }
    Ok(n + 1)
}

fn columns_dependent(m: &DMatrix<f64>, cols: &[usize]) -> bool {
    let sub = m.select_columns(cols.iter());
    let svals = sub.svd(false, false).singular_values;
    let max = svals.max();
    if max <= f64::EPSILON {
        return true;
    }
    svals[svals.len() - 1] <= RANK_TOL * max
}

/// Isometry constant `delta_k` by exhaustive enumeration of all k-column
/// supports: the worst deviation of the restricted Gram spectrum from 1.
pub fn rip_constant(x: &SensingMatrix, k: usize, max_cols: usize) -> Result<f64> {
    let m = x.entries();
    let (n, l) = (m.nrows(), m.ncols());
    if k == 0 || k > n {
        return Err(SparseError::InvalidParameter(format!(
            "RIP order k={k} must lie in 1..=N ({n})"
        )));
    }
    if l > max_cols {
        return Err(SparseError::GuardExceeded(format!(
            "RIP search over {l} columns exceeds the guard of {max_cols}"
        )));
    }
    if binomial(l, k) > MAX_RIP_SUPPORTS {
        return Err(SparseError::GuardExceeded(format!(
            "C({l},{k}) supports exceed the {MAX_RIP_SUPPORTS} enumeration guard"
        )));
    }
    let mut delta: f64 = f64::NEG_INFINITY;
    for subset in (0..l).combinations(k) {
        let sub = m.select_columns(subset.iter());
        let gram = sub.transpose() * &sub;
        let eig = gram.symmetric_eigen().eigenvalues;
        let lo = eig.min();
        let hi = eig.max();
        delta = delta.max(1.0 - lo).max(hi - 1.0);
    }
    Ok(delta.max(0.0))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if acc > u128::MAX / 2 {
            return u128::MAX;
        }
    }
    acc
}

/// Ordinary least squares `(X^T X)^{-1} X^T y`. Requires full column rank.
pub fn ls_solution(p: &RegressionProblem) -> Result<DVector<f64>> {
    let x = p.matrix.entries();
    let svd = x.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * max_sv)
        .count();
    if rank < x.ncols() {
        return Err(SparseError::SingularSystem(
            "normal matrix X^T X is singular".into(),
        ));
    }
    svd.solve(&p.measurements, RANK_TOL * max_sv)
        .map_err(|e| SparseError::SingularSystem(e.to_string()))
}

/// Ridge estimate `(X^T X + lambda I)^{-1} X^T y`.
pub fn ridge_solution(p: &RegressionProblem, lambda: f64) -> Result<DVector<f64>> {
    if lambda < 0.0 {
        return Err(SparseError::InvalidParameter(
            "ridge parameter must be nonnegative".into(),
        ));
    }
    let x = p.matrix.entries();
    let l = x.ncols();
    let normal = x.transpose() * x + DMatrix::identity(l, l) * lambda;
    let rhs = x.transpose() * &p.measurements;
    normal
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| {
            // lambda = 0 with an exactly singular Gram falls through to LU.
            let lu = (x.transpose() * x + DMatrix::identity(l, l) * lambda).lu();
            lu.solve(&rhs)
        })
        .ok_or_else(|| SparseError::SingularSystem("ridge normal equations singular".into()))
}

/// Minimum Euclidean-norm solution `X^T (X X^T)^{-1} y` of an
/// underdetermined consistent system.
pub fn min_l2_solution(p: &RegressionProblem) -> Result<DVector<f64>> {
    let x = p.matrix.entries();
    let (n, l) = (x.nrows(), x.ncols());
    if n >= l {
        return Err(SparseError::InvalidDimensions(
            "minimum-norm solution needs an underdetermined system (N < l)".into(),
        ));
    }
    let gram = x * x.transpose();
    let chol = gram
        .cholesky()
        .ok_or_else(|| SparseError::SingularSystem("X X^T is rank deficient".into()))?;
    let z = chol.solve(&p.measurements);
    let theta = x.transpose() * z;
    let resid = (x * &theta - &p.measurements).norm();
    if resid > 1e-10 * p.measurements.norm().max(1.0) {
        return Err(SparseError::SingularSystem(
            "minimum-norm solve failed the consistency check".into(),
        ));
    }
    Ok(theta)
}

/// Orthonormal basis of the null space of `X` (columns), via SVD.
pub fn null_space_basis(x: &SensingMatrix) -> Vec<DVector<f64>> {
    let m = x.entries();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let max_sv = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * max_sv.max(f64::EPSILON))
        .count();
    // nalgebra's thin SVD keeps min(n, l) right singular vectors; the null
    // space directions beyond them are recovered by completing the basis.
    let l = m.ncols();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in rank..v_t.nrows() {
        basis.push(v_t.row(i).transpose());
    }
    if basis.len() < l - rank {
        // Complete with Gram-Schmidt against the known rows of V^T.
        let mut known: Vec<DVector<f64>> = (0..v_t.nrows()).map(|i| v_t.row(i).transpose()).collect();
        let mut j = 0usize;
        while known.len() < l && j < l {
            let mut cand = DVector::zeros(l);
            cand[j] = 1.0;
            for k in &known {
                let proj = k.dot(&cand);
                cand -= k * proj;
            }
            let norm = cand.norm();
            if norm > 1e-8 {
                cand /= norm;
                known.push(cand.clone());
                basis.push(cand);
            }
            j += 1;
        }
    }
    basis
}

/// Monte-Carlo test of the necessary condition for `theta` to be the minimum
/// l1-norm solution of `X theta = y`: for null-space directions `z`,
/// `|sum_{theta_i != 0} sign(theta_i) z_i| <= sum_{theta_i = 0} |z_i|`.
///
/// Returns `false` on any sampled violation (certified non-minimality) and
/// `true` otherwise; a `true` answer is evidence, not proof.
pub fn l1_minimality_check(
    x: &SensingMatrix,
    theta: &DVector<f64>,
    trials: usize,
    seed: u64,
) -> Result<bool> {
    if theta.len() != x.n_cols() {
        return Err(SparseError::InvalidDimensions(
            "theta length must match the column count".into(),
        ));
    }
    let basis = null_space_basis(x);
    if basis.is_empty() {
        return Ok(true); // trivial null space: the condition is vacuous
    }
    let mut rng = rng_from_seed(seed);
    let dist = Normal::new(0.0, 1.0).unwrap();
    let zero_tol = 1e-12;
    for _ in 0..trials {
        let mut z = DVector::zeros(theta.len());
        for b in &basis {
            let c: f64 = dist.sample(&mut rng);
            z += b * c;
        }
        let mut on_support = 0.0;
        let mut off_support = 0.0;
        for i in 0..theta.len() {
            if theta[i].abs() > zero_tol {
                on_support += theta[i].signum() * z[i];
            } else {
                off_support += z[i].abs();
            }
        }
        if on_support.abs() > off_support + 1e-10 {
            return Ok(false);
        }
    }
    Ok(true)
}
