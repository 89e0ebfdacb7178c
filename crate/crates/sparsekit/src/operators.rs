//! Entrywise thresholding rules and metric projections onto convex sets.
//!
//! These are the nonlinear kernels shared by every solver in the crate.
//! Thresholds are the *applied* thresholds: callers that work with a
//! regularizer `lambda` and step `mu` pass `lambda * mu` (half-squared loss
//! convention) or `lambda / 2` (unhalved loss) themselves.

use nalgebra::DVector;

use crate::error::{Result, SparseError};

/// Scalar shrinkage rules. `Soft`, `HardLevel`, `Scad` and `Garrote` act
/// componentwise; `TopK` acts globally on the vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    Soft(f64),
    HardLevel(f64),
    TopK(usize),
    /// Smoothly clipped absolute deviation with parameters (lambda, alpha);
    /// alpha must exceed 2, the customary default is 3.7. Values at the
    /// branch seams are assigned to the lower branch.
    Scad(f64, f64),
    Garrote(f64),
}

pub const SCAD_DEFAULT_ALPHA: f64 = 3.7;

/// Soft-threshold a scalar: `sign(v) (|v| - t)_+`.
#[inline]
pub fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn scad(v: f64, lambda: f64, alpha: f64) -> f64 {
    let a = v.abs();
    if a <= 2.0 * lambda {
        soft(v, lambda)
    } else if a <= alpha * lambda {
        ((alpha - 1.0) * v - alpha * lambda * v.signum()) / (alpha - 2.0)
    } else {
        v
    }
}

fn garrote(v: f64, lambda: f64) -> f64 {
    if v.abs() <= lambda {
        0.0
    } else {
        v - lambda * lambda / v
    }
}

/// Indices of the `k` largest-magnitude entries, ties broken by lower index.
pub fn top_k_indices(v: &DVector<f64>, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| {
        v[b].abs()
            .partial_cmp(&v[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Apply a thresholding rule to a vector.
pub fn apply_threshold(rule: &ThresholdRule, v: &DVector<f64>) -> Result<DVector<f64>> {
    match *rule {
        ThresholdRule::Soft(t) => Ok(v.map(|x| soft(x, t))),
        ThresholdRule::HardLevel(t) => Ok(v.map(|x| if x.abs() > t { x } else { 0.0 })),
        ThresholdRule::TopK(k) => {
            if k > v.len() {
                return Err(SparseError::InvalidParameter(format!(
                    "top-k with k={k} exceeds the vector length {}",
                    v.len()
                )));
            }
            let keep = top_k_indices(v, k);
            let mut out = DVector::zeros(v.len());
            for i in keep {
                out[i] = v[i];
            }
            Ok(out)
        }
        ThresholdRule::Scad(lambda, alpha) => {
            if alpha <= 2.0 {
                return Err(SparseError::InvalidParameter(
                    "SCAD needs alpha > 2".into(),
                ));
            }
            Ok(v.map(|x| scad(x, lambda, alpha)))
        }
        ThresholdRule::Garrote(lambda) => Ok(v.map(|x| garrote(x, lambda))),
    }
}

/// Closed convex slab `{ x : |<a, x> - c| <= eps }`.
#[derive(Debug, Clone)]
pub struct Hyperslab {
    pub normal: DVector<f64>,
    pub center: f64,
    pub half_width: f64,
}

impl Hyperslab {
    pub fn new(normal: DVector<f64>, center: f64, half_width: f64) -> Result<Self> {
        if normal.norm() <= f64::EPSILON {
            return Err(SparseError::InvalidParameter(
                "hyperslab normal must be nonzero".into(),
            ));
        }
        if half_width < 0.0 {
            return Err(SparseError::InvalidParameter(
                "hyperslab half-width must be nonnegative".into(),
            ));
        }
        Ok(Hyperslab {
            normal,
            center,
            half_width,
        })
    }
}

/// Metric projection onto a hyperslab: move along the normal just far enough
/// to reach the nearer bounding hyperplane, identity inside.
pub fn project_hyperslab(s: &Hyperslab, theta: &DVector<f64>) -> Result<DVector<f64>> {
    if theta.len() != s.normal.len() {
        return Err(SparseError::InvalidDimensions(
            "hyperslab projection dimension mismatch".into(),
        ));
    }
    let ip = s.normal.dot(theta);
    let nn = s.normal.norm_squared();
    let out = if ip > s.center + s.half_width {
        theta - &s.normal * ((ip - s.center - s.half_width) / nn)
    } else if ip < s.center - s.half_width {
        theta - &s.normal * ((ip - s.center + s.half_width) / nn)
    } else {
        theta.clone()
    };
    Ok(out)
}

/// The weighted l1 ball `{ x : sum_i w_i |x_i| <= rho }`, all weights positive.
#[derive(Debug, Clone)]
pub struct WeightedL1Ball {
    pub weights: DVector<f64>,
    pub radius: f64,
}

impl WeightedL1Ball {
    pub fn new(weights: DVector<f64>, radius: f64) -> Result<Self> {
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(SparseError::InvalidParameter(
                "weighted l1 ball needs strictly positive weights".into(),
            ));
        }
        if radius <= 0.0 {
            return Err(SparseError::InvalidParameter(
                "weighted l1 ball needs a positive radius".into(),
            ));
        }
        Ok(WeightedL1Ball { weights, radius })
    }
}

/// Exact metric projection onto the weighted l1 ball via the sorted-threshold
/// active-set algorithm. Identity when the input is already inside; the sign
/// pattern of surviving entries matches the input.
pub fn project_weighted_l1_ball(b: &WeightedL1Ball, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let l = theta.len();
    if b.weights.len() != l {
        return Err(SparseError::InvalidDimensions(
            "weighted l1 projection dimension mismatch".into(),
        ));
    }
    let w = &b.weights;
    let weighted_norm: f64 = (0..l).map(|i| w[i] * theta[i].abs()).sum();
    if weighted_norm <= b.radius {
        return Ok(theta.clone());
    }

    // Sort |theta_i| / w_i in non-ascending order.
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &c| {
        let ra = theta[a].abs() / w[a];
        let rc = theta[c].abs() / w[c];
        rc.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });

    // Shrink the candidate active set until the threshold is consistent.
    let mut r = l;
    let active = loop {
        let sum_wt: f64 = order[..r].iter().map(|&i| w[i] * theta[i].abs()).sum();
        let sum_w2: f64 = order[..r].iter().map(|&i| w[i] * w[i]).sum();
        let t = (sum_wt - b.radius) / sum_w2;
        let mut j_star = 0usize;
        for (j, &i) in order[..r].iter().enumerate() {
            if theta[i].abs() / w[i] > t {
                j_star = j + 1;
            }
        }
        if j_star == r || j_star == 0 {
            break r;
        }
        r = j_star;
    };

    let sum_wt: f64 = order[..active].iter().map(|&i| w[i] * theta[i].abs()).sum();
    let sum_w2: f64 = order[..active].iter().map(|&i| w[i] * w[i]).sum();
    let t = (sum_wt - b.radius) / sum_w2;

    let mut out = DVector::zeros(l);
    for &i in &order[..active] {
        let p = theta[i].abs() - t * w[i];
        if p > 0.0 {
            out[i] = theta[i].signum() * p;
        }
    }
    Ok(out)
}

/// Projection onto the plain l1 ball of radius `rho`; the unit-weight case of
/// [`project_weighted_l1_ball`], equivalent to a data-dependent soft threshold.
pub fn project_l1_ball(rho: f64, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let ball = WeightedL1Ball::new(DVector::from_element(theta.len(), 1.0), rho)?;
    project_weighted_l1_ball(&ball, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(data: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(data)
    }

    #[test]
    fn soft_threshold_worked_example() {
        let out = apply_threshold(&ThresholdRule::Soft(0.5), &v(&[0.2, -0.7, 0.8, -0.1, 1.0]))
            .unwrap();
        let expect = [0.0, -0.2, 0.3, 0.0, 0.5];
        for (a, b) in out.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn hard_threshold_worked_example() {
        let out = apply_threshold(
            &ThresholdRule::HardLevel(0.5),
            &v(&[0.2, -0.7, 0.8, -0.1, 1.0]),
        )
        .unwrap();
        let expect = [0.0, -0.7, 0.8, 0.0, 1.0];
        for (a, b) in out.iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn hard_threshold_boundary_zeroes() {
        let out = apply_threshold(&ThresholdRule::HardLevel(0.5), &v(&[0.5, -0.5])).unwrap();
        assert_eq!(out, v(&[0.0, 0.0]));
    }

    #[test]
    fn garrote_values() {
        let out = apply_threshold(&ThresholdRule::Garrote(1.0), &v(&[3.0, 0.5])).unwrap();
        assert_relative_eq!(out[0], 3.0 - 1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(out[1], 0.0);
    }

    #[test]
    fn scad_branches() {
        let rule = ThresholdRule::Scad(1.0, SCAD_DEFAULT_ALPHA);
        // soft region
        let out = apply_threshold(&rule, &v(&[1.5, -1.5])).unwrap();
        assert_relative_eq!(out[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(out[1], -0.5, epsilon = 1e-12);
        // identity region
        let out = apply_threshold(&rule, &v(&[4.0, -5.0])).unwrap();
        assert_relative_eq!(out[0], 4.0, epsilon = 1e-12);
        assert_relative_eq!(out[1], -5.0, epsilon = 1e-12);
        // middle region: ((alpha-1) v - alpha lambda sign) / (alpha - 2)
        let out = apply_threshold(&rule, &v(&[3.0])).unwrap();
        assert_relative_eq!(out[0], (2.7 * 3.0 - 3.7) / 1.7, epsilon = 1e-12);
        // middle branch is continuous at both seams
        let a = apply_threshold(&rule, &v(&[2.0])).unwrap()[0];
        let b = apply_threshold(&rule, &v(&[2.0 + 1e-9])).unwrap()[0];
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn top_k_keeps_largest_and_breaks_ties_by_index() {
        let out = apply_threshold(&ThresholdRule::TopK(2), &v(&[1.0, -3.0, 2.0, 3.0])).unwrap();
        assert_eq!(out, v(&[0.0, -3.0, 0.0, 3.0]));
        assert!(apply_threshold(&ThresholdRule::TopK(5), &v(&[1.0])).is_err());
    }

    #[test]
    fn zero_vector_fixed_point() {
        let z = DVector::zeros(6);
        for rule in [
            ThresholdRule::Soft(0.3),
            ThresholdRule::HardLevel(0.3),
            ThresholdRule::TopK(2),
            ThresholdRule::Scad(0.3, SCAD_DEFAULT_ALPHA),
            ThresholdRule::Garrote(0.3),
        ] {
            assert_eq!(apply_threshold(&rule, &z).unwrap(), z);
        }
    }

    #[test]
    fn hyperslab_projection_first_branch() {
        let s = Hyperslab::new(v(&[1.0, 0.0]), 0.0, 0.5).unwrap();
        let out = project_hyperslab(&s, &v(&[2.0, 1.0])).unwrap();
        assert_relative_eq!(out[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(out[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hyperslab_inside_unchanged_and_symmetric() {
        let s = Hyperslab::new(v(&[1.0, 2.0]), 0.3, 0.4).unwrap();
        let inside = v(&[0.1, 0.1]);
        assert_eq!(project_hyperslab(&s, &inside).unwrap(), inside);

        // reflecting the input through the slab's center plane reflects the output
        let a = s.normal.clone();
        let th = v(&[3.0, -1.0]);
        let ip = a.dot(&th);
        let refl = &th - &a * (2.0 * (ip - s.center) / a.norm_squared());
        let p1 = project_hyperslab(&s, &th).unwrap();
        let p2 = project_hyperslab(&s, &refl).unwrap();
        let p1_refl = &p1 - &a * (2.0 * (a.dot(&p1) - s.center) / a.norm_squared());
        assert!((p1_refl - p2).norm() <= 1e-10);
    }

    #[test]
    fn weighted_ball_axis_and_symmetric_cases() {
        let b = WeightedL1Ball::new(v(&[1.0, 1.0]), 1.0).unwrap();
        let out = project_weighted_l1_ball(&b, &v(&[2.0, 0.0])).unwrap();
        assert_relative_eq!(out[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(out[1], 0.0, epsilon = 1e-12);
        let out = project_weighted_l1_ball(&b, &v(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(out[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(out[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn l1_ball_reduces_to_weighted_with_unit_weights() {
        let mut rng = crate::rng::rng_from_seed(4);
        use rand::Rng;
        let th = DVector::from_fn(10, |_, _| rng.gen_range(-2.0..2.0));
        let a = project_l1_ball(1.5, &th).unwrap();
        let ball = WeightedL1Ball::new(DVector::from_element(10, 1.0), 1.5).unwrap();
        let b = project_weighted_l1_ball(&ball, &th).unwrap();
        assert_eq!(a, b);
        // 1-dim clamp and inside-ball identity
        assert_eq!(project_l1_ball(1.0, &v(&[3.0])).unwrap(), v(&[1.0]));
        let inside = v(&[0.2, -0.3]);
        assert_eq!(project_l1_ball(1.0, &inside).unwrap(), inside);
    }

    /// Independent oracle: KKT bisection on the soft-threshold level.
    fn project_weighted_oracle(w: &DVector<f64>, rho: f64, th: &DVector<f64>) -> DVector<f64> {
        let norm: f64 = (0..th.len()).map(|i| w[i] * th[i].abs()).sum();
        if norm <= rho {
            return th.clone();
        }
        let g = |t: f64| -> f64 {
            (0..th.len())
                .map(|i| w[i] * (th[i].abs() - t * w[i]).max(0.0))
                .sum::<f64>()
        };
        let mut lo = 0.0;
        let mut hi = (0..th.len())
            .map(|i| th[i].abs() / w[i])
            .fold(0.0f64, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        DVector::from_fn(th.len(), |i, _| th[i].signum() * (th[i].abs() - t * w[i]).max(0.0))
    }

    #[test]
    fn weighted_ball_matches_bisection_oracle() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(99);
        for _ in 0..200 {
            let w = DVector::from_fn(5, |_, _| rng.gen_range(0.2..3.0));
            let th = DVector::from_fn(5, |_, _| rng.gen_range(-2.0..2.0));
            let rho = rng.gen_range(0.2..2.5);
            let ball = WeightedL1Ball::new(w.clone(), rho).unwrap();
            let fast = project_weighted_l1_ball(&ball, &th).unwrap();
            let slow = project_weighted_oracle(&w, rho, &th);
            assert!(
                (&fast - &slow).norm() <= 1e-6,
                "mismatch: {fast:?} vs {slow:?}"
            );
            let norm: f64 = (0..5).map(|i| w[i] * fast[i].abs()).sum();
            assert!(norm <= rho + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn projections_idempotent_and_nonexpansive(
            xs in prop::collection::vec(-5.0f64..5.0, 4),
            ys in prop::collection::vec(-5.0f64..5.0, 4),
            rho in 0.1f64..4.0,
        ) {
            let x = DVector::from_vec(xs);
            let y = DVector::from_vec(ys);
            let px = project_l1_ball(rho, &x).unwrap();
            let ppx = project_l1_ball(rho, &px).unwrap();
            prop_assert!((px.clone() - ppx).norm() <= 1e-12);
            let py = project_l1_ball(rho, &y).unwrap();
            prop_assert!((px - py).norm() <= (&x - &y).norm() + 1e-12);

            let slab = Hyperslab::new(DVector::from_row_slice(&[1.0, -0.5, 0.2, 0.9]), 0.1, 0.3).unwrap();
            let px = project_hyperslab(&slab, &x).unwrap();
            let ppx = project_hyperslab(&slab, &px).unwrap();
            prop_assert!((px.clone() - ppx).norm() <= 1e-12);
            let py = project_hyperslab(&slab, &y).unwrap();
            prop_assert!((px - py).norm() <= (&x - &y).norm() + 1e-12);
        }

        #[test]
        fn soft_commutes_with_sign_flip_and_permutation(
            xs in prop::collection::vec(-5.0f64..5.0, 5),
            t in 0.0f64..2.0,
        ) {
            let x = DVector::from_vec(xs.clone());
            let a = apply_threshold(&ThresholdRule::Soft(t), &(-x.clone())).unwrap();
            let b = -apply_threshold(&ThresholdRule::Soft(t), &x).unwrap();
            prop_assert_eq!(a, b);

            let mut rev = xs.clone();
            rev.reverse();
            let pr = apply_threshold(&ThresholdRule::Soft(t), &DVector::from_vec(rev)).unwrap();
            let mut direct: Vec<f64> = apply_threshold(&ThresholdRule::Soft(t), &x)
                .unwrap().iter().copied().collect();
            direct.reverse();
            prop_assert_eq!(pr, DVector::from_vec(direct));
        }

        #[test]
        fn scad_identity_for_large_and_garrote_shrinks(
            xs in prop::collection::vec(-10.0f64..10.0, 6),
            lam in 0.1f64..1.5,
        ) {
            let x = DVector::from_vec(xs);
            let s = apply_threshold(&ThresholdRule::Scad(lam, SCAD_DEFAULT_ALPHA), &x).unwrap();
            for i in 0..x.len() {
                if x[i].abs() > SCAD_DEFAULT_ALPHA * lam {
                    prop_assert_eq!(s[i], x[i]);
                }
            }
            let g = apply_threshold(&ThresholdRule::Garrote(lam), &x).unwrap();
            for i in 0..x.len() {
                if g[i] != 0.0 {
                    prop_assert!(g[i].abs() < x[i].abs());
                }
            }
        }
    }
}
