//! Small dense linear-algebra kernels.
//!
//! Everything the pipeline needs fits in a row-major [`Mat`] plus a
//! handful of kernels: a fixed-order dot product, a symmetric Jacobi
//! eigensolver (for PSD repair), and power iteration (for the Lipschitz
//! step of the portfolio solver). All reductions run in a fixed order so
//! results are bit-reproducible.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};
// Needed by the no_std build; std builds resolve the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from a flat row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix buffer has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = f(r, c);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Mat::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `y = self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in (r + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(r, c)] - self[(c, r)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Dot product with four fixed-order accumulators.
///
/// The partial sums vectorize well and the summation order never
/// changes, so the value is reproducible run to run.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let split = a.len() & !3;
    let (a4, a_tail) = a.split_at(split);
    let (b4, b_tail) = b.split_at(split);
    let mut acc = [0.0f64; 4];
    for (ca, cb) in a4.chunks_exact(4).zip(b4.chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut tail = 0.0;
    for (x, y) in a_tail.iter().zip(b_tail.iter()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += s * x`.
#[inline]
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x.iter()) {
        *yi += s * *xi;
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, V)` with `a = V * diag(eigenvalues) * V^T` and
/// eigenvectors stored as the columns of `V`. Eigenvalues come out in
/// ascending order. Input asymmetry beyond `1e-8 * scale` is rejected.
pub fn sym_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::numeric("eigendecomposition input has non-finite entries"));
    }
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if a.asymmetry() > 1e-8 * scale.max(1.0) {
        return Err(Error::domain("matrix is not symmetric"));
    }

    let mut m = a.clone();
    // Force exact symmetry so the rotations stay consistent.
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = avg;
            m[(c, r)] = avg;
        }
    }
    let mut v = Mat::identity(n);

    let off = |m: &Mat| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                s += m[(r, c)] * m[(r, c)];
            }
        }
        s
    };

    let tol = 1e-30 * scale.max(1.0) * scale.max(1.0) * (n * n) as f64;
    for _sweep in 0..100 {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for i in 0..n {
                    let mpi = m[(p, i)];
                    let mqi = m[(q, i)];
                    m[(p, i)] = c * mpi - s * mqi;
                    m[(q, i)] = s * mpi + c * mqi;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    let mut eigs: Vec<(f64, usize)> = (0..n).map(|i| (m[(i, i)], i)).collect();
    eigs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values: Vec<f64> = eigs.iter().map(|&(lambda, _)| lambda).collect();
    let vectors = Mat::from_fn(n, n, |r, c| v[(r, eigs[c].1)]);
    Ok((values, vectors))
}

/// Reconstructs `V * diag(values) * V^T`.
pub fn reconstruct_symmetric(values: &[f64], vectors: &Mat) -> Mat {
    let n = vectors.rows();
    let mut out = Mat::zeros(n, n);
    for (idx, &lambda) in values.iter().enumerate() {
        if lambda == 0.0 {
            continue;
        }
        for r in 0..n {
            let vr = vectors[(r, idx)];
            if vr == 0.0 {
                continue;
            }
            for c in 0..n {
                out[(r, c)] += lambda * vr * vectors[(c, idx)];
            }
        }
    }
    // Clean up roundoff asymmetry from the accumulation order.
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (out[(r, c)] + out[(c, r)]);
            out[(r, c)] = avg;
            out[(c, r)] = avg;
        }
    }
    out
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration
/// (100 iterations, tolerance 1e-10, deterministic start vector).
pub fn power_iteration_lambda_max(a: &Mat) -> f64 {
    let n = a.rows();
    debug_assert_eq!(a.cols(), n);
    if n == 0 {
        return 0.0;
    }
    // Slight index-dependent tilt keeps the start vector from being
    // orthogonal to the leading eigenvector.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 1e-3 * i as f64).collect();
    let norm = dot(&v, &v).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    let mut lambda = 0.0f64;
    for _ in 0..100 {
        let w = a.matvec(&v);
        let norm = dot(&w, &w).sqrt();
        if norm <= 1e-300 {
            return 0.0;
        }
        let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let new_lambda = dot(&next, &a.matvec(&next));
        let done = (new_lambda - lambda).abs() <= 1e-10 * new_lambda.abs().max(1.0);
        lambda = new_lambda;
        v = next;
        if done {
            break;
        }
    }
    lambda
}
