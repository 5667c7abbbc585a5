//! Long-only mean-variance optimization and the baseline allocations.
//!
//! The solver maximizes `w'mu - (gamma/2) w'Sigma w` over the
//! probability simplex by projected gradient ascent with a Lipschitz
//! step `1/(gamma * lambda_max + eps)`. That choice keeps the whole
//! module certifiable without a third-party solver: each iterate is a
//! Euclidean projection (exact, sort-based), the objective is monotone
//! along the iterates, and the returned point carries a KKT residual
//! check. The transaction-cost variant replaces the projection with an
//! exact prox of the l1 trading penalty restricted to the simplex.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
// Needed by the no_std build; std builds resolve the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::moments::{self, MomentEstimate};

/// Fraction-of-wealth weights on the long-only simplex.
///
/// Invariants: every entry >= -1e-10 and the entries sum to 1 within
/// 1e-8. Construction validates; the inner vector is immutable after.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights(Vec<f64>);

impl PortfolioWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::domain("weight vector must be non-empty"));
        }
        if let Some(bad) = w.iter().find(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite weight {bad}")));
        }
        if let Some(bad) = w.iter().find(|&&v| v < -1e-10) {
            return Err(Error::domain(format!("negative weight {bad}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::domain(format!("weights sum to {sum}, expected 1")));
        }
        Ok(PortfolioWeights(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Configuration of the mean-variance solver.
#[derive(Debug, Clone)]
pub struct MvoConfig {
    /// Risk aversion (the paper's headline value is 100).
    pub gamma: f64,
    /// Stationarity tolerance on the projected-gradient norm, also used
    /// for the KKT activity threshold.
    pub tol: f64,
    pub max_iters: usize,
    /// Linear trading cost per unit of turnover; 0 disables the cost
    /// term entirely.
    pub cost_coeff: f64,
}

impl Default for MvoConfig {
    fn default() -> Self {
        MvoConfig {
            gamma: 100.0,
            tol: 1e-8,
            max_iters: 50_000,
            cost_coeff: 0.0,
        }
    }
}

impl MvoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain("tol must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::domain("max_iters must be positive"));
        }
        if self.cost_coeff < 0.0 {
            return Err(Error::domain("cost_coeff must be non-negative"));
        }
        Ok(())
    }
}

/// Solver output: the weights plus convergence diagnostics.
#[derive(Debug, Clone)]
pub struct MvoSolution {
    pub weights: PortfolioWeights,
    /// False when the iteration cap was hit before the stationarity
    /// tolerance; the best iterate is still returned.
    pub converged: bool,
    pub iterations: usize,
    /// Worst KKT violation at the returned point (see [`kkt_residual`]).
    pub kkt_residual: f64,
}

/// Euclidean projection onto the probability simplex.
///
/// Sort-based thresholding: with the entries sorted in decreasing
/// order, find the largest prefix whose shifted average keeps every
/// prefix entry positive and clip at that threshold.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    debug_assert!(!v.is_empty());
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut threshold = 0.0;
    let mut support = 0usize;
    for (i, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            threshold = candidate;
            support = i + 1;
        }
    }
    debug_assert!(support > 0);
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}

/// Uniform 1/N weights.
pub fn equal_weight(n: usize) -> Result<PortfolioWeights> {
    if n == 0 {
        return Err(Error::domain("cannot build weights for zero assets"));
    }
    PortfolioWeights::new(vec![1.0 / n as f64; n])
}

/// Rolling-window empirical moments; delegates to
/// [`moments::estimate_moments`] on the trailing window.
pub fn empirical_moments(history: &Mat) -> Result<MomentEstimate> {
    moments::estimate_moments(history)
}

/// Mean-variance objective value.
fn objective(mu: &[f64], sigma: &Mat, gamma: f64, w: &[f64]) -> f64 {
    linalg::dot(w, mu) - 0.5 * gamma * linalg::dot(w, &sigma.matvec(w))
}

/// Worst KKT violation of `w` for the smooth problem: gradients on the
/// support (w_i > tol) must agree with the multiplier, and no
/// off-support gradient may exceed it.
pub fn kkt_residual(mu: &[f64], sigma: &Mat, gamma: f64, w: &[f64], tol: f64) -> f64 {
    let sw = sigma.matvec(w);
    let grad: Vec<f64> = mu.iter().zip(sw.iter()).map(|(m, s)| m - gamma * s).collect();
    let mut active_sum = 0.0;
    let mut active_weight = 0.0;
    for (g, &wi) in grad.iter().zip(w.iter()) {
        if wi > tol {
            active_sum += g * wi;
            active_weight += wi;
        }
    }
    if active_weight == 0.0 {
        return f64::INFINITY;
    }
    let nu = active_sum / active_weight;
    let mut worst = 0.0f64;
    for (g, &wi) in grad.iter().zip(w.iter()) {
        if wi > tol {
            worst = worst.max((g - nu).abs());
        } else {
            worst = worst.max((g - nu).max(0.0));
        }
    }
    worst
}

/// Long-only mean-variance weights by projected gradient ascent.
///
/// Degenerate `Sigma = 0` makes the problem linear; the solver then
/// returns the vertex on the largest `mu` entry (ties to the lowest
/// index).
pub fn solve_mvo(mu: &[f64], sigma: &Mat, config: &MvoConfig) -> Result<MvoSolution> {
    let previous = equal_weight(mu.len())?;
    solve_with_cost(mu, sigma, &previous, 0.0, config)
}

/// Mean-variance weights net of a linear trading cost
/// `cost_coeff * ||w - previous||_1`.
///
/// Uses the same iteration as [`solve_mvo`] with the projection replaced
/// by the exact prox of the cost term on the simplex, so the
/// `cost_coeff = 0` case reduces to [`solve_mvo`] identically.
pub fn solve_mvo_with_costs(
    mu: &[f64],
    sigma: &Mat,
    previous: &PortfolioWeights,
    config: &MvoConfig,
) -> Result<MvoSolution> {
    if previous.len() != mu.len() {
        return Err(Error::shape(format!(
            "previous weights have {} entries, expected {}",
            previous.len(),
            mu.len()
        )));
    }
    solve_with_cost(mu, sigma, previous, config.cost_coeff, config)
}

fn solve_with_cost(
    mu: &[f64],
    sigma: &Mat,
    previous: &PortfolioWeights,
    cost: f64,
    config: &MvoConfig,
) -> Result<MvoSolution> {
    config.validate()?;
    let n = mu.len();
    if n == 0 {
        return Err(Error::domain("mu must be non-empty"));
    }
    if sigma.rows() != n || sigma.cols() != n {
        return Err(Error::shape(format!(
            "covariance is {}x{}, expected {n}x{n}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    if mu.iter().any(|v| !v.is_finite()) || !sigma.is_finite() {
        return Err(Error::numeric("non-finite solver input"));
    }
    let scale = sigma.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sigma.asymmetry() > 1e-8 * scale.max(1.0) {
        return Err(Error::domain("covariance is not symmetric"));
    }
    let (eigs, _) = linalg::sym_eigen(sigma)?;
    if eigs.first().copied().unwrap_or(0.0) < -1e-8 * scale.max(1.0) {
        return Err(Error::domain(format!(
            "covariance is not positive semidefinite (min eigenvalue {})",
            eigs[0]
        )));
    }

    if n == 1 {
        return Ok(MvoSolution {
            weights: PortfolioWeights::new(vec![1.0])?,
            converged: true,
            iterations: 0,
            kkt_residual: 0.0,
        });
    }

    let lambda_max = linalg::power_iteration_lambda_max(sigma).max(0.0);
    let lipschitz = config.gamma * lambda_max;
    if lipschitz <= 1e-14 && cost == 0.0 {
        // Linear objective over the simplex: the optimum is the vertex
        // on the best expected return.
        let mut best = 0usize;
        for (i, &m) in mu.iter().enumerate() {
            if m > mu[best] {
                best = i;
            }
        }
        let mut w = vec![0.0; n];
        w[best] = 1.0;
        return Ok(MvoSolution {
            weights: PortfolioWeights::new(w)?,
            converged: true,
            iterations: 0,
            kkt_residual: 0.0,
        });
    }
    // The tiny relative slack keeps the step strictly below 1/L even
    // when power iteration converges to lambda_max from below, which is
    // what guarantees monotone ascent. The cap matters only for nearly
    // singular Sigma with a cost term, where an unbounded step would
    // push the prox multiplier beyond bisection precision.
    let step = (1.0 / (lipschitz * (1.0 + 1e-9) + 1e-12)).min(1e8);

    let mut w = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        let sw = sigma.matvec(&w);
        let mut ascent: Vec<f64> = w.clone();
        for i in 0..n {
            ascent[i] += step * (mu[i] - config.gamma * sw[i]);
        }
        let next = if cost == 0.0 {
            project_simplex(&ascent)
        } else {
            prox_l1_simplex(&ascent, previous.as_slice(), step * cost)
        };
        let move_norm = w
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        w = next;
        if move_norm / step <= config.tol {
            converged = true;
            break;
        }
    }

    let residual = kkt_residual(mu, sigma, config.gamma, &w, config.tol);
    Ok(MvoSolution {
        weights: PortfolioWeights::new(w)?,
        converged,
        iterations,
        kkt_residual: residual,
    })
}

/// Exact minimizer of `(1/2)||w - v||^2 + kappa * ||w - p||_1` over the
/// probability simplex.
///
/// The sum constraint is dualized: for a multiplier `nu` each
/// coordinate has the closed form below, and the coordinate sum is
/// nonincreasing and continuous in `nu`, so bisection pins the
/// feasible multiplier.
fn prox_l1_simplex(v: &[f64], p: &[f64], kappa: f64) -> Vec<f64> {
    let coord = |vi: f64, pi: f64, nu: f64| -> f64 {
        // Minimize (1/2)(w - vi)^2 + kappa|w - pi| + nu*w over w >= 0.
        let lo = vi - nu - kappa;
        let hi = vi - nu + kappa;
        let w = if lo > pi {
            lo
        } else if hi < pi {
            hi
        } else {
            pi
        };
        w.max(0.0)
    };
    let sum_at = |nu: f64| -> f64 { v.iter().zip(p.iter()).map(|(&vi, &pi)| coord(vi, pi, nu)).sum() };

    // Bracket the multiplier. sum_at is nonincreasing in nu.
    let mut lo = -1.0;
    let mut hi = 1.0;
    for _ in 0..200 {
        if sum_at(lo) >= 1.0 {
            break;
        }
        lo *= 2.0;
    }
    for _ in 0..200 {
        if sum_at(hi) <= 1.0 {
            break;
        }
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sum_at(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    let mut w: Vec<f64> = v
        .iter()
        .zip(p.iter())
        .map(|(&vi, &pi)| coord(vi, pi, nu))
        .collect();
    // Absorb the residual rounding into the largest coordinate so the
    // simplex invariant holds exactly enough for PortfolioWeights.
    let sum: f64 = w.iter().sum();
    let drift = sum - 1.0;
    if drift != 0.0 {
        let argmax = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        w[argmax] = (w[argmax] - drift).max(0.0);
    }
    w
}

/// Objective value of the cost-augmented problem, used by tests and the
/// monotone-ascent property.
pub fn cost_objective(
    mu: &[f64],
    sigma: &Mat,
    gamma: f64,
    cost: f64,
    previous: &[f64],
    w: &[f64],
) -> f64 {
    let l1: f64 = w.iter().zip(previous.iter()).map(|(a, b)| (a - b).abs()).sum();
    objective(mu, sigma, gamma, w) - cost * l1
}

/// Smooth mean-variance objective, exposed for oracle tests.
pub fn mvo_objective(mu: &[f64], sigma: &Mat, gamma: f64, w: &[f64]) -> f64 {
    objective(mu, sigma, gamma, w)
}
