//! Conditional moment estimation from Monte Carlo return samples.
//!
//! Sample moments feed a quadratic-program solver downstream, so the
//! covariance must leave this module symmetric and positive
//! semidefinite. [`estimate_moments`] therefore symmetrizes and runs an
//! eigenvalue-clipping repair with a small relative floor.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Relative PSD floor for callers that need a strictly definite
/// quadratic form: `psd_repair(sigma, PSD_FLOOR_SCALE * trace/N)`.
/// [`estimate_moments`] itself repairs at a floor of exactly zero so
/// that degenerate examples (identical samples, two-point samples)
/// come out exact.
pub const PSD_FLOOR_SCALE: f64 = 1e-8;

/// Conditional mean vector and covariance matrix for one decision month.
///
/// `mu` is the expected next-month return per asset (decimal/month);
/// `sigma` is the N x N return covariance (decimal^2/month).
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub mu: Vec<f64>,
    pub sigma: Mat,
}

impl MomentEstimate {
    /// Number of assets.
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

/// Column means and unbiased sample covariance (divisor S-1) of an
/// S x N sample matrix, PSD-repaired.
pub fn estimate_moments(samples: &Mat) -> Result<MomentEstimate> {
    let s = samples.rows();
    let n = samples.cols();
    if s < 2 {
        return Err(Error::domain(format!(
            "moment estimation needs at least 2 samples, got {s}"
        )));
    }
    if !samples.is_finite() {
        return Err(Error::numeric("sample matrix has non-finite entries"));
    }

    let mut mu = vec![0.0; n];
    for r in 0..s {
        linalg::axpy(1.0, samples.row(r), &mut mu);
    }
    for m in mu.iter_mut() {
        *m /= s as f64;
    }

    let mut sigma = Mat::zeros(n, n);
    let mut centered = vec![0.0; n];
    for r in 0..s {
        for (c, (x, m)) in samples.row(r).iter().zip(mu.iter()).enumerate() {
            centered[c] = x - m;
        }
        for i in 0..n {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            linalg::axpy(ci, &centered[i..], &mut sigma.row_mut(i)[i..]);
        }
    }
    let divisor = (s - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = sigma[(i, j)] / divisor;
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }

    let sigma = psd_repair(&sigma, 0.0)?;
    Ok(MomentEstimate { mu, sigma })
}

/// Clamps eigenvalues below `floor` up to `floor` and reconstructs.
///
/// Returns the input untouched (up to roundoff) when it already
/// satisfies the floor; asymmetric input is rejected.
pub fn psd_repair(sigma: &Mat, floor: f64) -> Result<Mat> {
    if sigma.rows() != sigma.cols() {
        return Err(Error::shape(format!(
            "covariance must be square, got {}x{}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    let (values, vectors) = linalg::sym_eigen(sigma)?;
    if values.iter().all(|&v| v >= floor) {
        return Ok(sigma.clone());
    }
    let clamped: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    Ok(linalg::reconstruct_symmetric(&clamped, &vectors))
}

/// Linear shrinkage toward the scaled identity:
/// `(1-delta) * sigma + delta * (trace/N) * I`.
///
/// Preserves the trace exactly for every `delta` in [0, 1].
pub fn shrink_covariance(sigma: &Mat, delta: f64) -> Result<Mat> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::domain(format!(
            "shrinkage intensity must lie in [0, 1], got {delta}"
        )));
    }
    if sigma.rows() != sigma.cols() {
        return Err(Error::shape("shrinkage needs a square matrix"));
    }
    check_symmetry(sigma)?;
    let n = sigma.rows();
    let target_diag = sigma.trace() / n.max(1) as f64;
    let mut out = Mat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let t = if r == c { target_diag } else { 0.0 };
            out[(r, c)] = (1.0 - delta) * sigma[(r, c)] + delta * t;
        }
    }
    Ok(out)
}

fn check_symmetry(sigma: &Mat) -> Result<()> {
    let scale = sigma.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sigma.asymmetry() > 1e-8 * scale.max(1.0) {
        return Err(Error::domain("covariance is not symmetric"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_rows_give_zero_covariance() {
        let row = [0.01, -0.02, 0.03];
        let samples = Mat::from_fn(5, 3, |_, c| row[c]);
        let est = estimate_moments(&samples).unwrap();
        for (m, r) in est.mu.iter().zip(row.iter()) {
            assert_abs_diff_eq!(m, r, epsilon = 1e-15);
        }
        for v in est.sigma.as_slice() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_point_sample_exact() {
        // Rows (0,0) and (2,2): mu = (1,1), sigma = [[2,2],[2,2]] with
        // the S-1 divisor.
        let samples = Mat::from_vec(2, 2, vec![0.0, 0.0, 2.0, 2.0]).unwrap();
        let est = estimate_moments(&samples).unwrap();
        assert_abs_diff_eq!(est.mu[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(est.mu[1], 1.0, epsilon = 1e-15);
        for v in est.sigma.as_slice() {
            assert_abs_diff_eq!(*v, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn standard_normal_sample_near_identity() {
        let mut stream = Stream::new(31);
        let samples = Mat::from_fn(1000, 5, |_, _| stream.next_normal());
        let est = estimate_moments(&samples).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let expected = if r == c { 1.0 } else { 0.0 };
                assert!(
                    (est.sigma[(r, c)] - expected).abs() < 0.15,
                    "sigma[{r}][{c}] = {}",
                    est.sigma[(r, c)]
                );
            }
        }
    }

    #[test]
    fn mean_shift_leaves_sigma_unchanged() {
        let mut stream = Stream::new(77);
        let samples = Mat::from_fn(40, 4, |_, _| 0.01 * stream.next_normal());
        let shifted = Mat::from_fn(40, 4, |r, c| samples[(r, c)] + 0.5);
        let a = estimate_moments(&samples).unwrap();
        let b = estimate_moments(&shifted).unwrap();
        for (x, y) in a.mu.iter().zip(b.mu.iter()) {
            assert_abs_diff_eq!(x + 0.5, y, epsilon = 1e-12);
        }
        for (x, y) in a.sigma.as_slice().iter().zip(b.sigma.as_slice()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn psd_repair_clamps_negative_eigenvalue() {
        let m = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, -0.5]).unwrap();
        let repaired = psd_repair(&m, 0.0).unwrap();
        assert_abs_diff_eq!(repaired[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(repaired[(1, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_repair_identity_on_valid_input() {
        let m = Mat::from_vec(2, 2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        let repaired = psd_repair(&m, 0.0).unwrap();
        for (a, b) in m.as_slice().iter().zip(repaired.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn psd_repair_matches_clamped_eigenvalues() {
        // 3x3 with one small negative eigenvalue.
        let m = Mat::from_vec(
            3,
            3,
            vec![0.5, 0.6, 0.0, 0.6, 0.5, 0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        // Eigenvalues are {-0.1, 1.0, 1.1}.
        let repaired = psd_repair(&m, 0.0).unwrap();
        let (vals, _) = linalg::sym_eigen(&repaired).unwrap();
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(vals[2], 1.1, epsilon = 1e-10);
        // Independent check on the repaired eigenvalues.
        let na = nalgebra::DMatrix::from_fn(3, 3, |r, c| repaired[(r, c)]);
        let min_eig = na
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(min_eig >= -1e-12);
    }

    #[test]
    fn psd_repair_is_idempotent() {
        let m = Mat::from_vec(2, 2, vec![1.0, 0.0, 0.0, -0.5]).unwrap();
        let once = psd_repair(&m, 1e-6).unwrap();
        let twice = psd_repair(&once, 1e-6).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn shrinkage_endpoints() {
        let m = Mat::from_vec(2, 2, vec![2.0, 0.5, 0.5, 0.0]).unwrap();
        let none = shrink_covariance(&m, 0.0).unwrap();
        assert_eq!(none.as_slice(), m.as_slice());
        let full = shrink_covariance(&m, 1.0).unwrap();
        assert_eq!(full.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        let half = shrink_covariance(&m, 0.5).unwrap();
        assert_abs_diff_eq!(half[(0, 0)], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(half[(1, 1)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(half[(0, 1)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn shrinkage_preserves_trace() {
        let m = Mat::from_vec(3, 3, vec![2.0, 0.1, 0.2, 0.1, 1.0, 0.3, 0.2, 0.3, 0.5]).unwrap();
        for delta in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let out = shrink_covariance(&m, delta).unwrap();
            assert_abs_diff_eq!(out.trace(), m.trace(), epsilon = 1e-12);
        }
    }

    #[test]
    fn shrinkage_rejects_bad_delta() {
        let m = Mat::identity(2);
        assert!(shrink_covariance(&m, -0.1).is_err());
        assert!(shrink_covariance(&m, 1.1).is_err());
    }

    #[test]
    fn single_sample_rejected() {
        let samples = Mat::zeros(1, 3);
        assert!(matches!(
            estimate_moments(&samples),
            Err(crate::Error::Domain(_))
        ));
    }
}
