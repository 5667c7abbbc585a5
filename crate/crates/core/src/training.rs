//! Adam training of the denoiser on the noise-prediction loss.
//!
//! The batch unit is a whole month (one N-token set), preserving the
//! cross-sectional attention structure. Each epoch shuffles the train
//! months with a seeded stream and walks consecutive chunks of
//! `batch_months`; each batch item draws a uniform diffusion step and a
//! fresh Gaussian noise vector from streams keyed by (seed, epoch,
//! step, item), so runs are bit-reproducible. The loop only ever sees
//! the train slice of the panel, which is what rules out test-month
//! leakage structurally.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
// Needed by the no_std build; std builds resolve the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::denoiser::{self, BatchItem, DenoiserConfig, DenoiserParams};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::panel::Panel;
use crate::rng::{tags, Stream};

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    /// Months per minibatch.
    pub batch_months: usize,
    /// Leading fraction of months used for training.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 50,
            batch_months: 8,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(Error::domain("learning_rate must be non-negative"));
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return Err(Error::domain("adam_beta1 must lie in (0, 1)"));
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return Err(Error::domain("adam_beta2 must lie in (0, 1)"));
        }
        if !(self.adam_epsilon > 0.0) {
            return Err(Error::domain("adam_epsilon must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be positive"));
        }
        if self.batch_months == 0 {
            return Err(Error::domain("batch_months must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::domain(format!(
                "train_fraction = {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Chronological train/test split: contiguous, disjoint, covering
/// `[0, T)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelSplit {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

/// First `floor(train_fraction * T)` months train, the rest test, no
/// shuffling.
pub fn split_panel(total_months: usize, train_fraction: f64) -> Result<PanelSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain(format!(
            "train_fraction = {train_fraction} outside (0, 1)"
        )));
    }
    let train_len = (train_fraction * total_months as f64).floor() as usize;
    if train_len == 0 || train_len >= total_months {
        return Err(Error::domain(format!(
            "degenerate split: {train_len} train months out of {total_months}"
        )));
    }
    Ok(PanelSplit {
        train: 0..train_len,
        test: train_len..total_months,
    })
}

/// Adam accumulator state (first/second moments, step counter).
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: usize,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
        }
    }

    /// One adaptive moment-estimation update with bias correction:
    /// `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], config: &TrainConfig) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.steps += 1;
        let b1 = config.adam_beta1;
        let b2 = config.adam_beta2;
        let bc1 = 1.0 - b1.powi(self.steps as i32);
        let bc2 = 1.0 - b2.powi(self.steps as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Training outcome: per-epoch mean loss, final parameters, and the
/// split that was used.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub final_params: DenoiserParams,
    pub split: PanelSplit,
}

/// Fits the denoiser on the train months of the panel.
pub fn train(
    panel: &Panel,
    schedule: &NoiseSchedule,
    dconfig: &DenoiserConfig,
    tconfig: &TrainConfig,
) -> Result<TrainReport> {
    dconfig.validate()?;
    tconfig.validate()?;
    if panel.k() != dconfig.k {
        return Err(Error::shape(format!(
            "panel has K = {} characteristics, denoiser expects k = {}",
            panel.k(),
            dconfig.k
        )));
    }
    if schedule.steps() > dconfig.max_steps {
        return Err(Error::domain(format!(
            "schedule has {} steps, timestep embedding covers {}",
            schedule.steps(),
            dconfig.max_steps
        )));
    }
    let split = split_panel(panel.t(), tconfig.train_fraction)?;
    // Only the train slice ever reaches the loop below.
    let train_panel = panel.slice_months(split.train.clone())?;
    let train_t = train_panel.t();
    let batch = tconfig.batch_months.min(train_t);
    let steps_per_epoch = train_t / batch;

    let mut params = denoiser::init_params(dconfig, tconfig.seed)?;
    let mut adam = AdamState::new(params.flat().len());
    let mut loss_curve = Vec::with_capacity(tconfig.epochs);
    let mut order: Vec<usize> = (0..train_t).collect();

    for epoch in 0..tconfig.epochs {
        Stream::new(tconfig.seed)
            .fork(tags::TRAIN_SHUFFLE)
            .fork(epoch as u64)
            .shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for step_idx in 0..steps_per_epoch {
            let months = &order[step_idx * batch..(step_idx + 1) * batch];
            let mut items = Vec::with_capacity(months.len());
            for (j, &month) in months.iter().enumerate() {
                let mut stream = Stream::new(tconfig.seed)
                    .fork(tags::TRAIN_BATCH)
                    .fork(epoch as u64)
                    .fork(step_idx as u64)
                    .fork(j as u64);
                let step = 1 + stream.next_index(schedule.steps());
                let mut epsilon = vec![0.0; train_panel.n()];
                stream.fill_normal(&mut epsilon);
                items.push(BatchItem {
                    x0: train_panel.returns_at(month).to_vec(),
                    step,
                    epsilon,
                    conditioning: train_panel.characteristics_at(month),
                });
            }
            let (loss, grad) = denoiser::loss_and_gradients(&params, &items, schedule, dconfig)
                .map_err(|e| {
                    Error::numeric(format!(
                        "training aborted at epoch {epoch}, step {step_idx}: {e}"
                    ))
                })?;
            adam.update(params.flat_mut(), &grad, tconfig);
            epoch_loss += loss;
        }
        loss_curve.push(epoch_loss / steps_per_epoch as f64);
    }

    Ok(TrainReport {
        loss_curve,
        final_params: params,
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::linear_schedule;
    use crate::panel::{generate_synthetic, Nonlinearity, SyntheticSpec};
    use approx::assert_abs_diff_eq;

    fn quick_panel() -> Panel {
        generate_synthetic(&SyntheticSpec {
            t: 20,
            n: 6,
            k: 4,
            k_true: 2,
            signal_scale: 0.02,
            noise_scale: 0.02,
            nonlinearity: Nonlinearity::Linear,
            seed: 5,
        })
        .unwrap()
    }

    fn quick_dconfig() -> DenoiserConfig {
        DenoiserConfig {
            embed_dim: 8,
            heads: 2,
            layers: 1,
            k: 4,
            max_steps: 10,
        }
    }

    #[test]
    fn split_floor_arithmetic() {
        let s = split_panel(10, 0.8).unwrap();
        assert_eq!(s.train, 0..8);
        assert_eq!(s.test, 8..10);
        let s = split_panel(2, 0.5).unwrap();
        assert_eq!(s.train, 0..1);
        assert_eq!(s.test, 1..2);
        let s = split_panel(10, 0.99).unwrap();
        assert_eq!(s.train, 0..9);
        assert_eq!(s.test, 9..10);
    }

    #[test]
    fn degenerate_splits_rejected() {
        assert!(split_panel(1, 0.5).is_err());
        assert!(split_panel(10, 0.01).is_err());
        assert!(split_panel(10, 0.0).is_err());
        assert!(split_panel(10, 1.0).is_err());
    }

    #[test]
    fn adam_single_step_matches_hand_formula() {
        // Quadratic loss f(x) = x^2 at x = 1: gradient 2.
        let config = TrainConfig {
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let mut adam = AdamState::new(1);
        let mut x = [1.0];
        adam.update(&mut x, &[2.0], &config);
        // m = 0.1 * 2, v = 0.001 * 4; bias corrections 0.1 and 0.001;
        // m_hat = 2, v_hat = 4; x -= 0.01 * 2 / (2 + 1e-8).
        let expected = 1.0 - 0.01 * 2.0 / (4.0f64.sqrt() + 1e-8);
        assert_abs_diff_eq!(x[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let panel = quick_panel();
        let schedule = linear_schedule(10, 1e-3, 0.1).unwrap();
        let dconfig = quick_dconfig();
        let tconfig = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_months: 4,
            seed: 7,
            ..TrainConfig::default()
        };
        let report = train(&panel, &schedule, &dconfig, &tconfig).unwrap();
        let fresh = denoiser::init_params(&dconfig, 7).unwrap();
        assert_eq!(report.final_params.flat(), fresh.flat());
    }

    #[test]
    fn training_is_seed_deterministic() {
        let panel = quick_panel();
        let schedule = linear_schedule(10, 1e-3, 0.1).unwrap();
        let dconfig = quick_dconfig();
        let tconfig = TrainConfig {
            epochs: 3,
            batch_months: 4,
            seed: 99,
            ..TrainConfig::default()
        };
        let a = train(&panel, &schedule, &dconfig, &tconfig).unwrap();
        let b = train(&panel, &schedule, &dconfig, &tconfig).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.final_params.flat(), b.final_params.flat());
    }

    #[test]
    fn loss_decreases_on_linear_synthetic_panel() {
        let panel = generate_synthetic(&SyntheticSpec {
            t: 60,
            n: 10,
            k: 5,
            k_true: 3,
            signal_scale: 0.03,
            noise_scale: 0.02,
            nonlinearity: Nonlinearity::Linear,
            seed: 17,
        })
        .unwrap();
        let schedule = linear_schedule(20, 1e-3, 0.1).unwrap();
        let dconfig = DenoiserConfig {
            embed_dim: 16,
            heads: 2,
            layers: 1,
            k: 5,
            max_steps: 20,
        };
        let tconfig = TrainConfig {
            epochs: 40,
            batch_months: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let report = train(&panel, &schedule, &dconfig, &tconfig).unwrap();
        let first = report.loss_curve[0];
        let tail = &report.loss_curve[36..];
        let tail_mean: f64 = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(
            tail_mean < 0.8 * first,
            "no optimization progress: first {first}, tail mean {tail_mean}"
        );
    }

    #[test]
    fn mismatched_k_rejected() {
        let panel = quick_panel();
        let schedule = linear_schedule(10, 1e-3, 0.1).unwrap();
        let mut dconfig = quick_dconfig();
        dconfig.k = panel.k() + 1;
        assert!(train(&panel, &schedule, &dconfig, &TrainConfig::default()).is_err());
    }
}
