//! Brute-force grid oracles for the simplex projection and the
//! mean-variance solver.
//!
//! The oracles enumerate the probability simplex on a step-1e-3 lattice
//! and evaluate the objective directly, sharing no code with the
//! solver. Lattice optima of a strongly concave objective sit within
//! one lattice step of the true optimum, which fixes the tolerances
//! used below.

use factordiff_core::linalg::dot;
use factordiff_core::portfolio::{
    equal_weight, kkt_residual, mvo_objective, project_simplex, solve_mvo, solve_mvo_with_costs,
    MvoConfig,
};
use factordiff_core::rng::Stream;
use factordiff_core::Mat;

const GRID: usize = 1000;

/// Visits every lattice point of the simplex with resolution 1/GRID in
/// up to 4 dimensions.
fn for_each_grid_point(n: usize, mut visit: impl FnMut(&[f64])) {
    let g = GRID;
    let scale = 1.0 / g as f64;
    let mut w = [0.0f64; 4];
    match n {
        2 => {
            for i in 0..=g {
                w[0] = i as f64 * scale;
                w[1] = (g - i) as f64 * scale;
                visit(&w[..2]);
            }
        }
        3 => {
            for i in 0..=g {
                for j in 0..=(g - i) {
                    w[0] = i as f64 * scale;
                    w[1] = j as f64 * scale;
                    w[2] = (g - i - j) as f64 * scale;
                    visit(&w[..3]);
                }
            }
        }
        4 => {
            for i in 0..=g {
                for j in 0..=(g - i) {
                    let rem = g - i - j;
                    w[0] = i as f64 * scale;
                    w[1] = j as f64 * scale;
                    for k in 0..=rem {
                        w[2] = k as f64 * scale;
                        w[3] = (rem - k) as f64 * scale;
                        visit(&w[..4]);
                    }
                }
            }
        }
        _ => panic!("grid oracle supports 2-4 dimensions"),
    }
}

/// Random well-conditioned covariance at a monthly-return scale.
fn random_instance(n: usize, stream: &mut Stream) -> (Vec<f64>, Mat) {
    let mu: Vec<f64> = (0..n).map(|_| 0.02 * stream.next_normal()).collect();
    let a = Mat::from_fn(n, n, |_, _| 0.03 * stream.next_normal());
    let mut sigma = Mat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut s = 0.0;
            for t in 0..n {
                s += a[(t, r)] * a[(t, c)];
            }
            sigma[(r, c)] = s;
        }
    }
    let ridge = 0.05 * sigma.trace() / n as f64;
    for i in 0..n {
        sigma[(i, i)] += ridge;
    }
    (mu, sigma)
}

#[test]
fn projection_matches_grid_oracle() {
    let mut stream = Stream::new(2024);
    for trial in 0..100 {
        let n = 2 + trial % 3;
        let v: Vec<f64> = (0..n).map(|_| 1.5 * stream.next_normal()).collect();
        let projected = project_simplex(&v);

        let mut best = vec![0.0; n];
        let mut best_obj = f64::INFINITY;
        for_each_grid_point(n, |w| {
            let obj: f64 = w.iter().zip(v.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if obj < best_obj {
                best_obj = obj;
                best.copy_from_slice(w);
            }
        });

        // The exact projection can only improve on any lattice point.
        let proj_obj: f64 = projected
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(
            proj_obj <= best_obj + 1e-12,
            "trial {trial}: projection objective {proj_obj} worse than grid {best_obj}"
        );
        // Strong convexity: ||w_grid - w*||^2 <= f(w_grid) - f(w*), so
        // the lattice optimum pins the projection to grid resolution.
        for (p, b) in projected.iter().zip(best.iter()) {
            assert!(
                (p - b).abs() <= 2.5e-3,
                "trial {trial}: projection {projected:?} vs grid {best:?}"
            );
        }
    }
}

#[test]
fn projection_idempotence_is_exact() {
    let mut stream = Stream::new(55);
    for _ in 0..200 {
        let n = 2 + stream.next_index(6);
        let v: Vec<f64> = (0..n).map(|_| 2.0 * stream.next_normal()).collect();
        let once = project_simplex(&v);
        let twice = project_simplex(&once);
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn mvo_dominates_grid_oracle() {
    let mut stream = Stream::new(777);
    let config = MvoConfig {
        gamma: 100.0,
        tol: 1e-10,
        max_iters: 200_000,
        cost_coeff: 0.0,
    };
    for trial in 0..50 {
        let n = 2 + trial % 3;
        let (mu, sigma) = random_instance(n, &mut stream);
        let sol = solve_mvo(&mu, &sigma, &config).unwrap();
        assert!(sol.converged, "trial {trial} did not converge");
        assert!(
            sol.kkt_residual <= 1e-6,
            "trial {trial}: kkt residual {}",
            sol.kkt_residual
        );
        let solver_obj = mvo_objective(&mu, &sigma, config.gamma, sol.weights.as_slice());

        let mut best_obj = f64::NEG_INFINITY;
        for_each_grid_point(n, |w| {
            let mut quad = 0.0;
            for (r, &wr) in w.iter().enumerate() {
                quad += wr * dot(&sigma.row(r)[..w.len()], w);
            }
            let obj = dot(w, &mu) - 0.5 * config.gamma * quad;
            if obj > best_obj {
                best_obj = obj;
            }
        });
        assert!(
            solver_obj >= best_obj - 1e-6,
            "trial {trial}: solver {solver_obj} vs grid {best_obj}"
        );
    }
}

#[test]
fn symmetric_instances_return_uniform_weights() {
    for n in [2usize, 3, 4, 8] {
        let sigma = Mat::from_fn(n, n, |r, c| if r == c { 0.0016 } else { 0.0 });
        let mu = vec![0.01; n];
        let sol = solve_mvo(&mu, &sigma, &MvoConfig::default()).unwrap();
        for &w in sol.weights.as_slice() {
            assert!((w - 1.0 / n as f64).abs() <= 1e-8);
        }
    }
}

#[test]
fn cost_solver_dominates_grid_on_augmented_objective() {
    // The prox handles the l1 term exactly; check against the grid on
    // the full cost-augmented objective.
    let mut stream = Stream::new(4242);
    let config = MvoConfig {
        gamma: 60.0,
        tol: 1e-10,
        max_iters: 200_000,
        cost_coeff: 0.004,
    };
    for trial in 0..10 {
        let n = 3;
        let (mu, sigma) = random_instance(n, &mut stream);
        let previous = equal_weight(n).unwrap();
        let sol = solve_mvo_with_costs(&mu, &sigma, &previous, &config).unwrap();
        let solver_obj = factordiff_core::portfolio::cost_objective(
            &mu,
            &sigma,
            config.gamma,
            config.cost_coeff,
            previous.as_slice(),
            sol.weights.as_slice(),
        );
        let mut best_obj = f64::NEG_INFINITY;
        for_each_grid_point(n, |w| {
            let mut quad = 0.0;
            for (r, &wr) in w.iter().enumerate() {
                quad += wr * dot(&sigma.row(r)[..w.len()], w);
            }
            let l1: f64 = w
                .iter()
                .zip(previous.as_slice())
                .map(|(a, b)| (a - b).abs())
                .sum();
            let obj = dot(w, &mu) - 0.5 * config.gamma * quad - config.cost_coeff * l1;
            if obj > best_obj {
                best_obj = obj;
            }
        });
        assert!(
            solver_obj >= best_obj - 1e-6,
            "trial {trial}: solver {solver_obj} vs grid {best_obj}"
        );
    }
}

#[test]
fn kkt_certificate_flags_suboptimal_points() {
    // Sanity of the certificate itself: a deliberately wrong point has
    // a visibly nonzero residual.
    let sigma = Mat::from_vec(2, 2, vec![0.04, 0.0, 0.0, 0.04]).unwrap();
    let mu = [0.05, 0.0];
    let bad = [0.0, 1.0];
    let residual = kkt_residual(&mu, &sigma, 1.0, &bad, 1e-8);
    assert!(residual > 0.01, "residual {residual}");
}
