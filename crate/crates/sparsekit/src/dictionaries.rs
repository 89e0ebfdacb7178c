//! Frame-theoretic dictionary tooling.
//!
//! Frame bounds and canonical duals, Naimark projections of orthonormal
//! bases, real Gabor dictionaries with time-frequency subsampling,
//! analysis/synthesis maps, and discrete-gradient/total-variation measures.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SparseError};

/// A finite frame for R^l given by the columns of an l x p atom matrix.
#[derive(Debug, Clone)]
pub struct Frame {
    pub atoms: DMatrix<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub tight: bool,
}

fn frame_operator_bounds(atoms: &DMatrix<f64>) -> (f64, f64) {
    let s = atoms * atoms.transpose();
    let eig = s.symmetric_eigen();
    let a = eig.eigenvalues.min().max(0.0);
    let b = eig.eigenvalues.max().max(0.0);
    (a, b)
}

fn build_frame(atoms: DMatrix<f64>, lenient: bool) -> Result<Frame> {
    let (l, p) = atoms.shape();
    if l == 0 || p == 0 {
        return Err(SparseError::InvalidDimensions("empty atom matrix".into()));
    }
    if p < l {
        return Err(SparseError::NotAFrame(format!(
            "{p} atoms cannot span R^{l}"
        )));
    }
    let (a, b) = frame_operator_bounds(&atoms);
    if !lenient && a <= 1e-12 {
        return Err(SparseError::NotAFrame(format!(
            "lower bound {a:.3e} is numerically zero"
        )));
    }
    let tight = b - a <= 1e-9 * b;
    Ok(Frame {
        atoms,
        lower_bound: a,
        upper_bound: b,
        tight,
    })
}

/// Compute the frame bounds A, B of an atom matrix as the extreme
/// eigenvalues of the frame operator Psi Psi^T. Errors if the atoms fail to
/// span (A numerically zero).
pub fn frame_bounds(atoms: DMatrix<f64>) -> Result<Frame> {
    build_frame(atoms, false)
}

/// The canonical dual frame `(Psi Psi^T)^{-1} Psi`.
pub fn canonical_dual(frame: &Frame) -> Result<DMatrix<f64>> {
    let s = &frame.atoms * frame.atoms.transpose();
    let inv = s
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| s.try_inverse())
        .ok_or_else(|| SparseError::SingularSystem("frame operator not invertible".into()))?;
    Ok(inv * &frame.atoms)
}

/// Keep a subset of rows of an orthonormal basis matrix; by Naimark's
/// theorem the surviving rows form a Parseval tight frame of the smaller
/// space.
pub fn naimark_check(basis: &DMatrix<f64>, keep_rows: &[usize]) -> Result<Frame> {
    let p = basis.nrows();
    if basis.ncols() != p {
        return Err(SparseError::InvalidDimensions("basis must be square".into()));
    }
    let gram = basis.transpose() * basis;
    if (&gram - DMatrix::identity(p, p)).amax() > 1e-8 {
        return Err(SparseError::InvalidParameter(
            "basis matrix is not orthonormal".into(),
        ));
    }
    if keep_rows.is_empty() {
        return Err(SparseError::InvalidParameter("empty row selection".into()));
    }
    if keep_rows.iter().any(|&r| r >= p) {
        return Err(SparseError::InvalidParameter("row index out of range".into()));
    }
    let atoms = basis.select_rows(keep_rows.iter());
    build_frame(atoms, false)
}

/// The 2x3 Mercedes-Benz Parseval tight frame.
pub fn mercedes_benz() -> DMatrix<f64> {
    let s2 = 2.0f64.sqrt();
    let s6 = 6.0f64.sqrt();
    DMatrix::from_row_slice(
        2,
        3,
        &[
            0.0,
            -1.0 / s2,
            1.0 / s2,
            (2.0f64 / 3.0).sqrt(),
            -1.0 / s6,
            -1.0 / s6,
        ],
    )
}

/// Parameters of a real Gabor dictionary over R^l.
#[derive(Debug, Clone)]
pub struct GaborParams {
    pub length: usize,
    pub sigma: f64,
    pub time_step: usize,
    pub freq_step: usize,
}

impl GaborParams {
    fn validate(&self) -> Result<()> {
        let l = self.length;
        if l == 0 || self.sigma <= 0.0 {
            return Err(SparseError::InvalidParameter(
                "need positive length and sigma".into(),
            ));
        }
        if self.time_step == 0 || l % self.time_step != 0 {
            return Err(SparseError::InvalidParameter(format!(
                "time_step {} does not divide {l}",
                self.time_step
            )));
        }
        if self.freq_step == 0 || l % self.freq_step != 0 {
            return Err(SparseError::InvalidParameter(format!(
                "freq_step {} does not divide {l}",
                self.freq_step
            )));
        }
        Ok(())
    }
}

/// Circularly wrapped Gaussian window of unit Euclidean norm.
pub fn gabor_window(l: usize, sigma: f64) -> DVector<f64> {
    let mut g = DVector::from_fn(l, |n, _| {
        let d = n.min(l - n) as f64;
        (-d * d / (2.0 * sigma * sigma)).exp()
    });
    g /= g.norm();
    g
}

/// Build the real Gabor dictionary G(alpha, beta). Each complex atom
/// `g(n-m) e^{j 2 pi i n / l}` is stored as a sqrt(2)-scaled cosine/sine
/// quadrature pair (phase referenced to the shift, so atoms are exact
/// circular shifts of each other in m); identically-zero sine atoms at
/// frequencies 0 and l/2 are dropped. For alpha = beta = 1 the dictionary
/// is an exactly tight frame. The critical case alpha*beta = l carries no
/// frame guarantee, so the lower bound is only clamped at zero rather than
/// checked.
pub fn gabor_dictionary(params: &GaborParams) -> Result<Frame> {
    params.validate()?;
    let l = params.length;
    let g = gabor_window(l, params.sigma);
    let n_shifts = l / params.time_step;
    let n_freqs = l / params.freq_step;
    let s2 = 2.0f64.sqrt();

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(2 * n_shifts * n_freqs);
    for mi in 0..n_shifts {
        let m = mi * params.time_step;
        for fi in 0..n_freqs {
            let i = fi * params.freq_step;
            let omega = 2.0 * PI * i as f64 / l as f64;
            let cos_atom = DVector::from_fn(l, |n, _| {
                let d = (n + l - m) % l;
                s2 * g[d] * (omega * d as f64).cos()
            });
            cols.push(cos_atom);
            let sine_is_zero = i == 0 || 2 * i == l;
            if !sine_is_zero {
                let sin_atom = DVector::from_fn(l, |n, _| {
                    let d = (n + l - m) % l;
                    s2 * g[d] * (omega * d as f64).sin()
                });
                cols.push(sin_atom);
            }
        }
    }
    let atoms = DMatrix::from_columns(&cols);
    let lenient = params.time_step * params.freq_step >= l;
    build_frame(atoms, lenient)
}

/// Analysis map `Psi^T s`: coefficients of a signal against every atom.
pub fn analysis(frame: &Frame, signal: &DVector<f64>) -> Result<DVector<f64>> {
    if signal.len() != frame.atoms.nrows() {
        return Err(SparseError::InvalidDimensions(format!(
            "signal length {} vs atom length {}",
            signal.len(),
            frame.atoms.nrows()
        )));
    }
    Ok(frame.atoms.transpose() * signal)
}

/// Synthesis map `Psi c`: rebuild a signal from atom coefficients.
pub fn synthesis(frame: &Frame, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
    if coeffs.len() != frame.atoms.ncols() {
        return Err(SparseError::InvalidDimensions(format!(
            "{} coefficients vs {} atoms",
            coeffs.len(),
            frame.atoms.ncols()
        )));
    }
    Ok(&frame.atoms * coeffs)
}

/// A square image array.
#[derive(Debug, Clone)]
pub struct ImageGrid {
    pub pixels: DMatrix<f64>,
}

impl ImageGrid {
    pub fn new(pixels: DMatrix<f64>) -> Result<Self> {
        if pixels.nrows() != pixels.ncols() {
            return Err(SparseError::InvalidDimensions("image must be square".into()));
        }
        if pixels.nrows() < 2 {
            return Err(SparseError::InvalidDimensions(
                "image must be at least 2x2".into(),
            ));
        }
        Ok(ImageGrid { pixels })
    }
}

/// Forward differences along rows and columns with the zero-boundary
/// convention (last row of the row-gradient and last column of the
/// column-gradient are zero).
pub fn discrete_gradient(img: &ImageGrid) -> (DMatrix<f64>, DMatrix<f64>) {
    let l = img.pixels.nrows();
    let gx = DMatrix::from_fn(l, l, |i, j| {
        if i + 1 < l {
            img.pixels[(i + 1, j)] - img.pixels[(i, j)]
        } else {
            0.0
        }
    });
    let gy = DMatrix::from_fn(l, l, |i, j| {
        if j + 1 < l {
            img.pixels[(i, j + 1)] - img.pixels[(i, j)]
        } else {
            0.0
        }
    });
    (gx, gy)
}

/// Isotropic total variation: the sum of gradient magnitudes.
pub fn tv_norm(img: &ImageGrid) -> f64 {
    let (gx, gy) = discrete_gradient(img);
    gx.iter()
        .zip(gy.iter())
        .map(|(a, b)| (a * a + b * b).sqrt())
        .sum()
}

/// Orthonormal Haar wavelet matrix of size l x l (l a power of two). Rows
/// are the scaling row followed by the wavelet rows, coarse to fine.
pub fn haar_matrix(l: usize) -> DMatrix<f64> {
    assert!(l.is_power_of_two(), "Haar size must be a power of two");
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < l {
        let n = h.nrows();
        let mut next = DMatrix::zeros(2 * n, 2 * n);
        let s = 1.0 / 2.0f64.sqrt();
        for r in 0..n {
            for c in 0..n {
                next[(r, 2 * c)] = s * h[(r, c)];
                next[(r, 2 * c + 1)] = s * h[(r, c)];
            }
        }
        for r in 0..n {
            next[(n + r, 2 * r)] = s;
            next[(n + r, 2 * r + 1)] = -s;
        }
        h = next;
    }
    h
}

/// Serialize a frame's atoms to CSV with a `# rows,cols` metadata header.
pub fn frame_to_csv(frame: &Frame) -> String {
    let (l, p) = frame.atoms.shape();
    let mut out = String::new();
    let _ = writeln!(out, "# rows,cols");
    let _ = writeln!(out, "# {l},{p}");
    for i in 0..l {
        let row: Vec<String> = (0..p)
            .map(|j| format!("{:.16e}", frame.atoms[(i, j)]))
            .collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Parse a frame written by [`frame_to_csv`]; bounds are recomputed.
pub fn frame_from_csv(text: &str) -> Result<Frame> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| SparseError::Parse(e.to_string()))?);
    }
    if rows.is_empty() {
        return Err(SparseError::Parse("no data rows".into()));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(SparseError::Parse("ragged rows".into()));
    }
    let l = rows.len();
    let atoms = DMatrix::from_fn(l, p, |i, j| rows[i][j]);
    build_frame(atoms, false)
}
