//! Full finite-difference gradient audit of the denoiser.
//!
//! Central differences with h = 1e-5 in 64-bit arithmetic are accurate
//! to ~1e-10 on these loss scales, so a 1e-4 relative tolerance detects
//! any real backprop defect while tolerating roundoff.

use factordiff_core::denoiser::{
    init_params, loss_and_gradients, BatchItem, DenoiserConfig, DenoiserParams,
};
use factordiff_core::diffusion::linear_schedule;
use factordiff_core::rng::Stream;
use factordiff_core::Mat;

fn randomized_params(config: &DenoiserConfig, seed: u64) -> DenoiserParams {
    let mut params = init_params(config, seed).unwrap();
    let mut stream = Stream::new(seed ^ 0x5151_5151);
    for v in params.flat_mut() {
        *v = 0.35 * stream.next_normal();
    }
    params
}

fn random_batch(config: &DenoiserConfig, n: usize, items: usize, seed: u64) -> Vec<BatchItem> {
    let mut stream = Stream::new(seed);
    (0..items)
        .map(|_| {
            let x0: Vec<f64> = (0..n).map(|_| 0.05 * stream.next_normal()).collect();
            let epsilon: Vec<f64> = (0..n).map(|_| stream.next_normal()).collect();
            let conditioning = Mat::from_fn(n, config.k, |_, _| stream.next_normal());
            let step = 1 + stream.next_index(8);
            BatchItem {
                x0,
                step,
                epsilon,
                conditioning,
            }
        })
        .collect()
}

fn audit_config(config: DenoiserConfig, n: usize, seed: u64, coords: usize) -> f64 {
    let schedule = linear_schedule(8, 1e-3, 0.08).unwrap();
    let params = randomized_params(&config, seed);
    let batch = random_batch(&config, n, 2, seed ^ 0xabcd);
    let (_, grad) = loss_and_gradients(&params, &batch, &schedule, &config).unwrap();

    let h = 1e-5;
    let mut stream = Stream::new(seed ^ 0x77);
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let idx = stream.next_index(params.flat().len());
        let mut plus = params.clone();
        plus.flat_mut()[idx] += h;
        let (lp, _) = loss_and_gradients(&plus, &batch, &schedule, &config).unwrap();
        let mut minus = params.clone();
        minus.flat_mut()[idx] -= h;
        let (lm, _) = loss_and_gradients(&minus, &batch, &schedule, &config).unwrap();
        let numeric = (lp - lm) / (2.0 * h);
        let denom = numeric.abs().max(grad[idx].abs()).max(1e-6);
        let rel = (numeric - grad[idx]).abs() / denom;
        if rel > worst {
            worst = rel;
        }
        assert!(
            rel < 1e-4,
            "coordinate {idx}: analytic {} vs numeric {numeric} (rel {rel:.3e})",
            grad[idx]
        );
    }
    worst
}

#[test]
fn gradients_match_finite_differences_config_a() {
    let worst = audit_config(
        DenoiserConfig {
            embed_dim: 4,
            heads: 2,
            layers: 1,
            k: 2,
            max_steps: 8,
        },
        3,
        101,
        100,
    );
    println!("config a worst relative error: {worst:.3e}");
}

#[test]
fn gradients_match_finite_differences_config_b() {
    let worst = audit_config(
        DenoiserConfig {
            embed_dim: 6,
            heads: 3,
            layers: 2,
            k: 4,
            max_steps: 8,
        },
        4,
        202,
        100,
    );
    println!("config b worst relative error: {worst:.3e}");
}

#[test]
fn gradients_match_finite_differences_config_c() {
    let worst = audit_config(
        DenoiserConfig {
            embed_dim: 8,
            heads: 4,
            layers: 1,
            k: 3,
            max_steps: 8,
        },
        5,
        303,
        100,
    );
    println!("config c worst relative error: {worst:.3e}");
}
