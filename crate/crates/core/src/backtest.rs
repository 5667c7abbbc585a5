//! Walk-forward evaluation of the four strategies and the
//! factor-count ablation harness.
//!
//! No look-ahead by construction: the weights of decision month `t` are
//! computed from the characteristics of month `t` and realized returns
//! of rows strictly before `t`; the realized return of the decision is
//! read from row `t` (the month-`t+1` return) only after the weights
//! are fixed. Per-month Monte Carlo noise is keyed by the month index,
//! so corrupting later months cannot perturb earlier draws.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
// Needed by the no_std build; std builds resolve the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::denoiser::{DenoiserConfig, DenoiserModel};
use crate::diffusion::{self, NoiseSchedule};
use crate::error::{Error, Result};
use crate::linalg::{dot, Mat};
use crate::moments::{estimate_moments, shrink_covariance};
use crate::panel::{select_factors, Panel};
use crate::portfolio::{equal_weight, solve_mvo_with_costs, MvoConfig, PortfolioWeights};
use crate::rng::{self, tags};
use crate::training::{train, TrainConfig};

/// The four portfolio constructions under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StrategyId {
    /// Mean-variance weights from diffusion Monte Carlo moments.
    DiffusionMvo,
    /// Uniform 1/N weights.
    EqualWeight,
    /// Mean-variance weights from rolling-window empirical moments.
    Empirical,
    /// Empirical moments with shrunk covariance.
    ShrinkEmpirical,
}

impl StrategyId {
    pub const ALL: [StrategyId; 4] = [
        StrategyId::DiffusionMvo,
        StrategyId::EqualWeight,
        StrategyId::Empirical,
        StrategyId::ShrinkEmpirical,
    ];

    /// Stable label used in result files.
    pub fn label(&self) -> &'static str {
        match self {
            StrategyId::DiffusionMvo => "DiffusionMVO",
            StrategyId::EqualWeight => "EW",
            StrategyId::Empirical => "Emp",
            StrategyId::ShrinkEmpirical => "ShrEmp",
        }
    }

    fn index(&self) -> usize {
        match self {
            StrategyId::DiffusionMvo => 0,
            StrategyId::EqualWeight => 1,
            StrategyId::Empirical => 2,
            StrategyId::ShrinkEmpirical => 3,
        }
    }
}

/// Portfolio concentration: the Herfindahl index `sum_i w_i^2`,
/// ranging from 1/N (uniform) to 1 (one-hot).
pub fn hhi(weights: &PortfolioWeights) -> f64 {
    weights.as_slice().iter().map(|w| w * w).sum()
}

/// Summary statistics of a monthly return series.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMetrics {
    /// Mean monthly return (decimal/month).
    pub mean_return: f64,
    /// Sample standard deviation of monthly returns (decimal/month).
    pub volatility: f64,
    /// `sqrt(12) * mean / volatility`; `None` when the volatility is
    /// zero or the series is too short.
    pub sharpe_annualized: Option<f64>,
}

/// Metrics of a realized return series; volatility uses the sample
/// (S-1) convention and the Sharpe ratio annualizes by sqrt(12).
pub fn strategy_metrics(returns: &[f64]) -> StrategyMetrics {
    let n = returns.len();
    let mean = if n == 0 {
        0.0
    } else {
        returns.iter().sum::<f64>() / n as f64
    };
    if n < 2 {
        return StrategyMetrics {
            mean_return: mean,
            volatility: 0.0,
            sharpe_annualized: None,
        };
    }
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
    let vol = var.sqrt();
    let sharpe = if vol > 0.0 {
        Some(12f64.sqrt() * mean / vol)
    } else {
        None
    };
    StrategyMetrics {
        mean_return: mean,
        volatility: vol,
        sharpe_annualized: sharpe,
    }
}

/// One (month, strategy) decision with its realized outcome.
#[derive(Debug, Clone)]
pub struct MonthRecord {
    /// Panel row index of the decision month.
    pub month_index: usize,
    pub strategy: StrategyId,
    pub weights: PortfolioWeights,
    /// `weights . returns_at(month_index)`.
    pub realized_return: f64,
}

/// Per-strategy series over the test months.
#[derive(Debug, Clone)]
pub struct StrategySeries {
    pub strategy: StrategyId,
    pub realized: Vec<f64>,
    /// Compounded wealth index `prod (1 + r)`.
    pub cumulative: Vec<f64>,
    pub metrics: StrategyMetrics,
}

/// Full walk-forward output.
#[derive(Debug, Clone)]
pub struct BacktestResult {
    /// Panel row index of the first test month.
    pub test_start: usize,
    /// Labels of the test months.
    pub months: Vec<String>,
    pub assets: Vec<String>,
    pub records: Vec<MonthRecord>,
    pub series: [StrategySeries; 4],
    /// True when every mean-variance solve hit its tolerance.
    pub all_mvo_converged: bool,
}

impl BacktestResult {
    pub fn series_of(&self, strategy: StrategyId) -> &StrategySeries {
        &self.series[strategy.index()]
    }

    /// Time-average HHI of one strategy's weights.
    pub fn mean_hhi(&self, strategy: StrategyId) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for record in self.records.iter().filter(|r| r.strategy == strategy) {
            sum += hhi(&record.weights);
            count += 1;
        }
        sum / count.max(1) as f64
    }

    /// Assets ranked by time-average allocation (descending, ties by
    /// identifier), truncated to `count`.
    pub fn top_assets_by_average_allocation(
        &self,
        strategy: StrategyId,
        count: usize,
    ) -> Result<Vec<String>> {
        let n = self.assets.len();
        if count > n {
            return Err(Error::domain(format!(
                "requested {count} assets, panel has {n}"
            )));
        }
        let mut avg = vec![0.0; n];
        let mut months = 0usize;
        for record in self.records.iter().filter(|r| r.strategy == strategy) {
            for (a, w) in avg.iter_mut().zip(record.weights.as_slice()) {
                *a += w;
            }
            months += 1;
        }
        let months = months.max(1) as f64;
        for a in avg.iter_mut() {
            *a /= months;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| {
            avg[y]
                .total_cmp(&avg[x])
                .then_with(|| self.assets[x].cmp(&self.assets[y]))
        });
        Ok(order
            .into_iter()
            .take(count)
            .map(|i| self.assets[i].clone())
            .collect())
    }

    /// Average weight per asset for one strategy (used by reports).
    pub fn average_weights(&self, strategy: StrategyId) -> Vec<f64> {
        let n = self.assets.len();
        let mut avg = vec![0.0; n];
        let mut months = 0usize;
        for record in self.records.iter().filter(|r| r.strategy == strategy) {
            for (a, w) in avg.iter_mut().zip(record.weights.as_slice()) {
                *a += w;
            }
            months += 1;
        }
        for a in avg.iter_mut() {
            *a /= months.max(1) as f64;
        }
        avg
    }
}

/// Walk-forward evaluation settings.
#[derive(Debug, Clone)]
pub struct BacktestConfig {
    /// Monte Carlo draws per decision month.
    pub samples: usize,
    /// Rolling window length (months) for the Emp/ShrEmp baselines.
    pub window: usize,
    /// Shrinkage intensity of the ShrEmp baseline.
    pub shrinkage_delta: f64,
    /// Seed of the per-(month, draw, step) sampling noise streams.
    pub sample_seed: u64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            samples: 200,
            window: 24,
            shrinkage_delta: 0.5,
            sample_seed: 0,
        }
    }
}

/// Runs the four strategies over the test months `test_start..T`.
pub fn run_backtest(
    panel: &Panel,
    test_start: usize,
    model: &DenoiserModel,
    schedule: &NoiseSchedule,
    mvo: &MvoConfig,
    config: &BacktestConfig,
) -> Result<BacktestResult> {
    mvo.validate()?;
    let t = panel.t();
    let n = panel.n();
    if test_start < 2 || test_start >= t {
        return Err(Error::domain(format!(
            "test_start = {test_start} must lie in [2, {t}) so every decision month has history"
        )));
    }
    if config.samples < 2 {
        return Err(Error::domain("need at least 2 Monte Carlo samples"));
    }
    if model.config().k != panel.k() {
        return Err(Error::shape(format!(
            "model conditions on k = {}, panel has K = {}",
            model.config().k,
            panel.k()
        )));
    }

    let ew = equal_weight(n)?;
    let mut previous: [PortfolioWeights; 4] = [ew.clone(), ew.clone(), ew.clone(), ew.clone()];
    let mut realized: [Vec<f64>; 4] = Default::default();
    let mut records = Vec::with_capacity(4 * (t - test_start));
    let mut all_converged = true;

    for month in test_start..t {
        let conditioning = panel.characteristics_at(month);
        let month_seed = rng::derive(config.sample_seed, month as u64);
        let samples = diffusion::sample(model, &conditioning, schedule, config.samples, month_seed)
            .map_err(|e| Error::numeric(format!("sampling failed in month {month}: {e}")))?;
        let diffusion_moments = estimate_moments(&samples)?;

        let window_start = month.saturating_sub(config.window);
        let window_len = month - window_start;
        let mut history = Mat::zeros(window_len, n);
        for (row, src) in (window_start..month).enumerate() {
            history.row_mut(row).copy_from_slice(panel.returns_at(src));
        }
        let empirical = estimate_moments(&history)?;
        let shrunk_sigma = shrink_covariance(&empirical.sigma, config.shrinkage_delta)?;

        let month_returns = panel.returns_at(month);
        for strategy in StrategyId::ALL {
            let idx = strategy.index();
            let weights = match strategy {
                StrategyId::EqualWeight => ew.clone(),
                StrategyId::DiffusionMvo => {
                    let sol = solve_mvo_with_costs(
                        &diffusion_moments.mu,
                        &diffusion_moments.sigma,
                        &previous[idx],
                        mvo,
                    )?;
                    all_converged &= sol.converged;
                    sol.weights
                }
                StrategyId::Empirical => {
                    let sol =
                        solve_mvo_with_costs(&empirical.mu, &empirical.sigma, &previous[idx], mvo)?;
                    all_converged &= sol.converged;
                    sol.weights
                }
                StrategyId::ShrinkEmpirical => {
                    let sol =
                        solve_mvo_with_costs(&empirical.mu, &shrunk_sigma, &previous[idx], mvo)?;
                    all_converged &= sol.converged;
                    sol.weights
                }
            };
            let ret = dot(weights.as_slice(), month_returns);
            realized[idx].push(ret);
            records.push(MonthRecord {
                month_index: month,
                strategy,
                weights: weights.clone(),
                realized_return: ret,
            });
            previous[idx] = weights;
        }
    }

    let series = StrategyId::ALL.map(|strategy| {
        let idx = strategy.index();
        let rets = core::mem::take(&mut realized[idx]);
        let mut cumulative = Vec::with_capacity(rets.len());
        let mut wealth = 1.0;
        for r in &rets {
            wealth *= 1.0 + r;
            cumulative.push(wealth);
        }
        StrategySeries {
            strategy,
            metrics: strategy_metrics(&rets),
            realized: rets,
            cumulative,
        }
    });

    Ok(BacktestResult {
        test_start,
        months: panel.months()[test_start..].to_vec(),
        assets: panel.assets().to_vec(),
        records,
        series,
        all_mvo_converged: all_converged,
    })
}

/// Shared configuration of one ablation sweep.
#[derive(Debug, Clone)]
pub struct AblationBundle {
    pub schedule: NoiseSchedule,
    /// Denoiser architecture; `k` is overwritten per cell.
    pub dconfig: DenoiserConfig,
    /// Training settings; `seed` is overwritten per cell.
    pub tconfig: TrainConfig,
    pub mvo: MvoConfig,
    /// Backtest settings; `sample_seed` is overwritten per cell.
    pub backtest: BacktestConfig,
}

/// One completed (k, seed) cell.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub backtest: BacktestResult,
    /// Time-average HHI of the diffusion strategy.
    pub mean_hhi: f64,
}

/// Outcome row of the sweep; failures are recorded, not propagated.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub k: usize,
    pub seed: u64,
    pub outcome: core::result::Result<AblationCell, Error>,
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    pub fn all_succeeded(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.is_ok())
    }
}

/// Trains and backtests one (k, seed) cell from scratch.
///
/// The factor subset is keyed by `seed` alone (nested across k); the
/// training and sampling seeds are derived from `seed` with fixed tags,
/// so a cell is reproducible in isolation, serial or parallel.
pub fn run_ablation_cell(
    panel: &Panel,
    k: usize,
    seed: u64,
    bundle: &AblationBundle,
) -> Result<AblationCell> {
    let sub_panel = select_factors(panel, k, seed)?;
    let mut dconfig = bundle.dconfig.clone();
    dconfig.k = k;
    let mut tconfig = bundle.tconfig.clone();
    tconfig.seed = rng::derive(seed, tags::ABLATION_TRAIN);
    let report = train(&sub_panel, &bundle.schedule, &dconfig, &tconfig)?;
    let model = DenoiserModel::new(report.final_params, dconfig)?;
    let mut bt = bundle.backtest.clone();
    bt.sample_seed = rng::derive(seed, tags::ABLATION_SAMPLE);
    let result = run_backtest(
        &sub_panel,
        report.split.test.start,
        &model,
        &bundle.schedule,
        &bundle.mvo,
        &bt,
    )?;
    let mean_hhi = result.mean_hhi(StrategyId::DiffusionMvo);
    Ok(AblationCell {
        backtest: result,
        mean_hhi,
    })
}

/// Full sweep over `k_list x seeds`, serially; per-cell failures are
/// recorded in the row and the sweep continues.
pub fn run_ablation(
    panel: &Panel,
    k_list: &[usize],
    seeds: &[u64],
    bundle: &AblationBundle,
) -> AblationResult {
    let mut rows = Vec::with_capacity(k_list.len() * seeds.len());
    for &k in k_list {
        for &seed in seeds {
            rows.push(AblationRow {
                k,
                seed,
                outcome: run_ablation_cell(panel, k, seed, bundle),
            });
        }
    }
    AblationResult { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::init_params;
    use crate::diffusion::linear_schedule;
    use crate::panel::{generate_synthetic, Nonlinearity, SyntheticSpec, Tensor3};
    use approx::assert_abs_diff_eq;

    fn test_panel(seed: u64) -> Panel {
        generate_synthetic(&SyntheticSpec {
            t: 16,
            n: 5,
            k: 3,
            k_true: 2,
            signal_scale: 0.02,
            noise_scale: 0.03,
            nonlinearity: Nonlinearity::Linear,
            seed,
        })
        .unwrap()
    }

    /// Zero-output model: cheap, deterministic, and exercises the whole
    /// sampling/backtest machinery.
    fn zero_model(k: usize, max_steps: usize) -> DenoiserModel {
        let config = DenoiserConfig {
            embed_dim: 4,
            heads: 2,
            layers: 1,
            k,
            max_steps,
        };
        DenoiserModel::new(init_params(&config, 0).unwrap(), config).unwrap()
    }

    #[test]
    fn hhi_examples() {
        let uniform = equal_weight(4).unwrap();
        assert_abs_diff_eq!(hhi(&uniform), 0.25, epsilon = 1e-15);
        let onehot = PortfolioWeights::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(hhi(&onehot), 1.0, epsilon = 1e-15);
        let mixed = PortfolioWeights::new(vec![0.5, 0.3, 0.2]).unwrap();
        assert_abs_diff_eq!(hhi(&mixed), 0.38, epsilon = 1e-15);
    }

    #[test]
    fn sharpe_formula_on_constructed_series() {
        // Two-point series with mean 0.01 and sample std 0.02.
        let a = 0.02 / 2f64.sqrt();
        let metrics = strategy_metrics(&[0.01 + a, 0.01 - a]);
        assert_abs_diff_eq!(metrics.mean_return, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(metrics.volatility, 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(
            metrics.sharpe_annualized.unwrap(),
            1.732_050_807_568_877_2,
            epsilon = 1e-9
        );
    }

    #[test]
    fn zero_volatility_gives_sentinel_sharpe() {
        let metrics = strategy_metrics(&[0.01, 0.01, 0.01]);
        assert_eq!(metrics.sharpe_annualized, None);
        assert_abs_diff_eq!(metrics.mean_return, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn cumulative_compounding() {
        let panel = test_panel(1);
        let model = zero_model(panel.k(), 6);
        let schedule = linear_schedule(6, 1e-3, 0.05).unwrap();
        let result = run_backtest(
            &panel,
            12,
            &model,
            &schedule,
            &MvoConfig::default(),
            &BacktestConfig {
                samples: 16,
                ..BacktestConfig::default()
            },
        )
        .unwrap();
        for series in &result.series {
            let mut wealth = 1.0;
            for (r, c) in series.realized.iter().zip(series.cumulative.iter()) {
                wealth *= 1.0 + r;
                assert_abs_diff_eq!(wealth, *c, epsilon = 1e-12);
            }
        }
        // The arithmetic example: returns (0.10, -0.10) compound to 0.99.
        assert_abs_diff_eq!(1.1 * 0.9, 0.99, epsilon = 1e-15);
    }

    #[test]
    fn equal_weight_realizes_cross_sectional_mean() {
        let panel = test_panel(2);
        let model = zero_model(panel.k(), 6);
        let schedule = linear_schedule(6, 1e-3, 0.05).unwrap();
        let result = run_backtest(
            &panel,
            12,
            &model,
            &schedule,
            &MvoConfig::default(),
            &BacktestConfig {
                samples: 8,
                ..BacktestConfig::default()
            },
        )
        .unwrap();
        let ew = result.series_of(StrategyId::EqualWeight);
        for (offset, r) in ew.realized.iter().enumerate() {
            let month = result.test_start + offset;
            let mean: f64 =
                panel.returns_at(month).iter().sum::<f64>() / panel.n() as f64;
            assert_abs_diff_eq!(r, &mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn realized_returns_recomputable() {
        let panel = test_panel(3);
        let model = zero_model(panel.k(), 6);
        let schedule = linear_schedule(6, 1e-3, 0.05).unwrap();
        let result = run_backtest(
            &panel,
            12,
            &model,
            &schedule,
            &MvoConfig::default(),
            &BacktestConfig {
                samples: 8,
                ..BacktestConfig::default()
            },
        )
        .unwrap();
        for record in &result.records {
            let recomputed = dot(
                record.weights.as_slice(),
                panel.returns_at(record.month_index),
            );
            assert_abs_diff_eq!(recomputed, record.realized_return, epsilon = 1e-12);
        }
        // Metrics recomputable from records.
        for strategy in StrategyId::ALL {
            let rets: Vec<f64> = result
                .records
                .iter()
                .filter(|r| r.strategy == strategy)
                .map(|r| r.realized_return)
                .collect();
            let fresh = strategy_metrics(&rets);
            let stored = &result.series_of(strategy).metrics;
            assert_abs_diff_eq!(fresh.mean_return, stored.mean_return, epsilon = 1e-12);
            assert_abs_diff_eq!(fresh.volatility, stored.volatility, epsilon = 1e-12);
        }
    }

    #[test]
    fn backtest_is_deterministic() {
        let panel = test_panel(4);
        let model = zero_model(panel.k(), 6);
        let schedule = linear_schedule(6, 1e-3, 0.05).unwrap();
        let config = BacktestConfig {
            samples: 8,
            sample_seed: 11,
            ..BacktestConfig::default()
        };
        let a = run_backtest(&panel, 12, &model, &schedule, &MvoConfig::default(), &config).unwrap();
        let b = run_backtest(&panel, 12, &model, &schedule, &MvoConfig::default(), &config).unwrap();
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.weights.as_slice(), rb.weights.as_slice());
            assert_eq!(ra.realized_return, rb.realized_return);
        }
    }

    #[test]
    fn poisoned_future_leaves_past_weights_unchanged() {
        let panel = test_panel(5);
        let model = zero_model(panel.k(), 6);
        let schedule = linear_schedule(6, 1e-3, 0.05).unwrap();
        let config = BacktestConfig {
            samples: 8,
            sample_seed: 7,
            ..BacktestConfig::default()
        };
        let clean =
            run_backtest(&panel, 10, &model, &schedule, &MvoConfig::default(), &config).unwrap();

        // Corrupt everything after month t0: characteristics of months
        // > t0 and returns of months >= t0 (the future-realized side).
        let t0 = 12usize;
        let (t, n, k) = panel.characteristics().dims();
        let mut chars = Tensor3::zeros(t, n, k);
        let mut rets = Mat::zeros(t, n);
        for tt in 0..t {
            for i in 0..n {
                for j in 0..k {
                    let v = if tt > t0 {
                        999.0
                    } else {
                        panel.characteristics().get(tt, i, j)
                    };
                    chars.set(tt, i, j, v);
                }
                rets[(tt, i)] = if tt >= t0 {
                    -0.999
                } else {
                    panel.returns_at(tt)[i]
                };
            }
        }
        let poisoned = Panel::new(
            panel.months().to_vec(),
            panel.assets().to_vec(),
            chars,
            rets,
        )
        .unwrap();
        let dirty =
            run_backtest(&poisoned, 10, &model, &schedule, &MvoConfig::default(), &config).unwrap();

        for (a, b) in clean.records.iter().zip(dirty.records.iter()) {
            assert_eq!(a.month_index, b.month_index);
            if a.month_index <= t0 {
                assert_eq!(
                    a.weights.as_slice(),
                    b.weights.as_slice(),
                    "month {} weights changed under future corruption",
                    a.month_index
                );
            }
        }
    }

    #[test]
    fn top_assets_tie_break_by_identifier() {
        let panel = test_panel(6);
        let model = zero_model(panel.k(), 6);
        let schedule = linear_schedule(6, 1e-3, 0.05).unwrap();
        let result = run_backtest(
            &panel,
            12,
            &model,
            &schedule,
            &MvoConfig::default(),
            &BacktestConfig {
                samples: 8,
                ..BacktestConfig::default()
            },
        )
        .unwrap();
        // EW ties everywhere: expect identifier order.
        let top = result
            .top_assets_by_average_allocation(StrategyId::EqualWeight, 3)
            .unwrap();
        assert_eq!(top, panel.assets()[..3].to_vec());
        assert!(result
            .top_assets_by_average_allocation(StrategyId::EqualWeight, 99)
            .is_err());
    }

    #[test]
    fn ablation_records_failures_and_continues() {
        let panel = test_panel(7);
        let bundle = AblationBundle {
            schedule: linear_schedule(6, 1e-3, 0.05).unwrap(),
            dconfig: DenoiserConfig {
                embed_dim: 4,
                heads: 2,
                layers: 1,
                k: panel.k(),
                max_steps: 6,
            },
            tconfig: TrainConfig {
                epochs: 1,
                batch_months: 4,
                ..TrainConfig::default()
            },
            mvo: MvoConfig::default(),
            backtest: BacktestConfig {
                samples: 8,
                ..BacktestConfig::default()
            },
        };
        // k = 99 is out of range and must fail without sinking the rest.
        let result = run_ablation(&panel, &[1, 99, 3], &[21, 22], &bundle);
        assert_eq!(result.rows.len(), 6);
        assert!(!result.all_succeeded());
        for row in &result.rows {
            if row.k == 99 {
                assert!(row.outcome.is_err());
            } else {
                assert!(row.outcome.is_ok(), "k={} seed={} failed", row.k, row.seed);
            }
        }
        // HHI bounds hold on every successful row.
        let n = panel.n() as f64;
        for row in result.rows.iter().filter_map(|r| r.outcome.as_ref().ok()) {
            assert!(row.mean_hhi >= 1.0 / n - 1e-12 && row.mean_hhi <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn degenerate_sweep_matches_direct_backtest() {
        let panel = test_panel(8);
        let bundle = AblationBundle {
            schedule: linear_schedule(6, 1e-3, 0.05).unwrap(),
            dconfig: DenoiserConfig {
                embed_dim: 4,
                heads: 2,
                layers: 1,
                k: panel.k(),
                max_steps: 6,
            },
            tconfig: TrainConfig {
                epochs: 2,
                batch_months: 4,
                ..TrainConfig::default()
            },
            mvo: MvoConfig::default(),
            backtest: BacktestConfig {
                samples: 8,
                ..BacktestConfig::default()
            },
        };
        let seed = 31u64;
        let sweep = run_ablation(&panel, &[panel.k()], &[seed], &bundle);
        let cell = sweep.rows[0].outcome.as_ref().unwrap();

        // Rebuild the same cell by hand.
        let mut tconfig = bundle.tconfig.clone();
        tconfig.seed = rng::derive(seed, tags::ABLATION_TRAIN);
        let report = train(&panel, &bundle.schedule, &bundle.dconfig, &tconfig).unwrap();
        let model = DenoiserModel::new(report.final_params, bundle.dconfig.clone()).unwrap();
        let mut bt = bundle.backtest.clone();
        bt.sample_seed = rng::derive(seed, tags::ABLATION_SAMPLE);
        let direct = run_backtest(
            &panel,
            report.split.test.start,
            &model,
            &bundle.schedule,
            &bundle.mvo,
            &bt,
        )
        .unwrap();
        for (a, b) in cell.backtest.records.iter().zip(direct.records.iter()) {
            assert_eq!(a.weights.as_slice(), b.weights.as_slice());
            assert_eq!(a.realized_return, b.realized_return);
        }
    }
}
