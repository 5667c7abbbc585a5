//! The four pipeline commands.
//!
//! Each command validates its configuration up front, computes, then
//! writes results under the output directory. Outputs carry no
//! timestamps, so rerunning a command with the same config and seeds
//! reproduces every file byte for byte.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use factordiff_core::backtest::{
    run_ablation_cell, AblationBundle, AblationResult, AblationRow, BacktestResult, StrategyId,
};
use factordiff_core::denoiser::DenoiserModel;
use factordiff_core::diffusion::linear_schedule;
use factordiff_core::panel::{factor_subset, generate_synthetic_raw, select_columns, Panel};
use factordiff_core::rng;
use factordiff_core::training::train;
use factordiff_core::Mat;

use crate::checkpoint::{self, Checkpoint};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::formats;
use crate::svg;

/// Domain tag separating backtest sampling streams from training ones.
const BACKTEST_SAMPLE_TAG: u64 = 0xb0;

fn ensure_out_dir(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// Generates a synthetic panel and writes it in the input CSV schema.
pub fn cmd_synth(config: &RunConfig) -> CliResult<PathBuf> {
    config.validate()?;
    let out_dir = ensure_out_dir(config)?;
    let spec = config.synthetic_spec()?;
    let raw = generate_synthetic_raw(&spec)?;
    let path = out_dir.join("panel.csv");
    formats::write_raw_panel(&path, &raw)?;
    println!(
        "wrote {} ({} months x {} assets x {} characteristics)",
        path.display(),
        raw.months.len(),
        raw.assets.len(),
        raw.char_names.len()
    );
    Ok(path)
}

/// Applies the configured factor selection, returning the working panel
/// and the retained source-column indices (empty = full panel).
fn apply_factor_selection(config: &RunConfig, panel: &Panel) -> CliResult<(Panel, Vec<usize>)> {
    match config.denoiser.factors {
        None => Ok((panel.clone(), Vec::new())),
        Some(k) => {
            let indices = factor_subset(panel.k(), k, config.seed)
                .map_err(|e| CliError::config(format!("denoiser.factors: {e}")))?;
            let sub = select_columns(panel, &indices)?;
            Ok((sub, indices))
        }
    }
}

/// Trains the denoiser on a panel and writes the checkpoint and loss
/// curve.
pub fn cmd_train(config: &RunConfig, panel_path: &Path) -> CliResult<()> {
    config.validate()?;
    let out_dir = ensure_out_dir(config)?;
    let panel = formats::load_panel(panel_path, &config.preprocess_spec())?;
    let (panel, factor_indices) = apply_factor_selection(config, &panel)?;

    let schedule = config.schedule();
    let dconfig = config.denoiser_config(panel.k());
    let tconfig = config.train_config();
    let report = train(&panel, &schedule, &dconfig, &tconfig)?;
    let final_loss = report.loss_curve.last().copied().unwrap_or(f64::NAN);

    let ckpt = Checkpoint {
        config: dconfig,
        schedule_steps: config.diffusion.steps,
        beta_start: config.diffusion.beta_start,
        beta_end: config.diffusion.beta_end,
        train_seed: tconfig.seed,
        train_months: report.split.train.end,
        factor_indices,
        flat: report.final_params.flat().to_vec(),
    };
    let ckpt_path = out_dir.join("checkpoint.bin");
    checkpoint::save(&ckpt_path, &ckpt)?;
    formats::write_loss_curve(&out_dir.join("loss_curve.csv"), &report.loss_curve)?;
    println!(
        "trained {} epochs on {} months; final loss {final_loss}",
        report.loss_curve.len(),
        report.split.train.len()
    );
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn restore_model(ckpt: &Checkpoint, panel: &Panel) -> CliResult<(Panel, DenoiserModel)> {
    let working = if ckpt.factor_indices.is_empty() {
        panel.clone()
    } else {
        select_columns(panel, &ckpt.factor_indices)
            .map_err(|e| CliError::config(format!("checkpoint factor subset: {e}")))?
    };
    if working.k() != ckpt.config.k {
        return Err(CliError::config(format!(
            "checkpoint expects k = {} characteristics, panel provides {}",
            ckpt.config.k,
            working.k()
        )));
    }
    let model = DenoiserModel::new(ckpt.params()?, ckpt.config.clone())?;
    Ok((working, model))
}

fn write_backtest_outputs(
    out_dir: &Path,
    prefix: &str,
    result: &BacktestResult,
) -> CliResult<()> {
    formats::write_backtest_csv(&out_dir.join(format!("{prefix}backtest.csv")), result)?;
    for strategy in StrategyId::ALL {
        formats::write_weights_csv(
            &out_dir.join(format!("{prefix}weights_{}.csv", strategy.label())),
            result,
            strategy,
        )?;
    }

    let series: Vec<svg::Series<'_>> = StrategyId::ALL
        .iter()
        .map(|&s| svg::Series {
            name: s.label(),
            values: &result.series_of(s).cumulative,
        })
        .collect();
    let chart = svg::line_chart("cumulative wealth over test months", &result.months, &series);
    std::fs::write(out_dir.join(format!("{prefix}cumulative_returns.svg")), chart)?;

    let count = result.assets.len().min(25);
    let top = result.top_assets_by_average_allocation(StrategyId::DiffusionMvo, count)?;
    let asset_pos: Vec<usize> = top
        .iter()
        .map(|a| result.assets.iter().position(|x| x == a).expect("known asset"))
        .collect();
    let mut records: Vec<_> = result
        .records
        .iter()
        .filter(|r| r.strategy == StrategyId::DiffusionMvo)
        .collect();
    records.sort_by_key(|r| r.month_index);
    let values = Mat::from_fn(top.len(), records.len(), |r, c| {
        records[c].weights.as_slice()[asset_pos[r]]
    });
    let heat = svg::heatmap(
        "diffusion weights, top assets by average allocation",
        &top,
        &result.months,
        &values,
    );
    std::fs::write(out_dir.join(format!("{prefix}weights_heatmap.svg")), heat)?;
    Ok(())
}

/// Runs the walk-forward backtest from a checkpoint and writes result
/// CSVs and plots.
pub fn cmd_backtest(config: &RunConfig, panel_path: &Path, ckpt_path: &Path) -> CliResult<()> {
    config.validate()?;
    let out_dir = ensure_out_dir(config)?;
    let panel = formats::load_panel(panel_path, &config.preprocess_spec())?;
    let ckpt = checkpoint::load(ckpt_path)?;
    let (panel, model) = restore_model(&ckpt, &panel)?;
    let schedule = linear_schedule(ckpt.schedule_steps, ckpt.beta_start, ckpt.beta_end)?;
    if ckpt.train_months >= panel.t() {
        return Err(CliError::config(format!(
            "checkpoint trained on {} months but the panel has only {}",
            ckpt.train_months,
            panel.t()
        )));
    }

    let bt_config = config.backtest_config(rng::derive(config.seed, BACKTEST_SAMPLE_TAG));
    let result = factordiff_core::backtest::run_backtest(
        &panel,
        ckpt.train_months,
        &model,
        &schedule,
        &config.mvo_config(),
        &bt_config,
    )?;
    write_backtest_outputs(&out_dir, "", &result)?;
    for strategy in StrategyId::ALL {
        let metrics = &result.series_of(strategy).metrics;
        println!(
            "{:<13} mean {:+.5}  vol {:.5}  sharpe {}",
            strategy.label(),
            metrics.mean_return,
            metrics.volatility,
            metrics
                .sharpe_annualized
                .map(|s| format!("{s:.4}"))
                .unwrap_or_else(|| "undefined".into())
        );
    }
    println!("wrote results to {}", out_dir.display());
    Ok(())
}

/// Runs the factor-count ablation sweep, optionally across worker
/// threads; per-cell failures are flagged in ablation.csv and surface
/// as a partial-success exit.
pub fn cmd_ablate(config: &RunConfig, panel_path: &Path, jobs: Option<usize>) -> CliResult<()> {
    config.validate()?;
    let out_dir = ensure_out_dir(config)?;
    let panel = formats::load_panel(panel_path, &config.preprocess_spec())?;

    let k_list: Vec<usize> = config
        .ablation
        .k_list
        .iter()
        .copied()
        .filter(|&k| k <= panel.k())
        .collect();
    if k_list.is_empty() {
        return Err(CliError::config(format!(
            "ablation.k_list has no entries within the panel's K = {}",
            panel.k()
        )));
    }

    let bundle = AblationBundle {
        schedule: config.schedule(),
        dconfig: config.denoiser_config(panel.k()),
        tconfig: config.train_config(),
        mvo: config.mvo_config(),
        backtest: config.backtest_config(0),
    };

    let cells: Vec<(usize, u64)> = k_list
        .iter()
        .flat_map(|&k| config.ablation.seeds.iter().map(move |&s| (k, s)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("cannot build worker pool: {e}")))?;
    let rows: Vec<AblationRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(k, seed)| AblationRow {
                k,
                seed,
                outcome: run_ablation_cell(&panel, k, seed, &bundle),
            })
            .collect()
    });
    let result = AblationResult { rows };

    formats::write_ablation_csv(&out_dir.join("ablation.csv"), &result)?;

    // Per-k plots use the first seed's run; the summary aggregates all.
    let first_seed = config.ablation.seeds[0];
    for row in &result.rows {
        if row.seed != first_seed {
            continue;
        }
        if let Ok(cell) = &row.outcome {
            write_backtest_outputs(&out_dir, &format!("k{:03}_", row.k), &cell.backtest)?;
        }
    }
    let mut sharpe_points = Vec::new();
    let mut hhi_points = Vec::new();
    for row in &result.rows {
        if let Ok(cell) = &row.outcome {
            if let Some(sharpe) = cell
                .backtest
                .series_of(StrategyId::DiffusionMvo)
                .metrics
                .sharpe_annualized
            {
                sharpe_points.push((row.k, sharpe));
            }
            hhi_points.push((row.k, cell.mean_hhi));
        }
    }
    let summary = svg::ablation_summary(&k_list, &sharpe_points, &hhi_points);
    std::fs::write(out_dir.join("ablation_summary.svg"), summary)?;

    let failures: Vec<String> = result
        .rows
        .iter()
        .filter_map(|row| {
            row.outcome
                .as_ref()
                .err()
                .map(|e| format!("k={} seed={}: {e}", row.k, row.seed))
        })
        .collect();
    println!(
        "ablation finished: {}/{} cells succeeded; wrote {}",
        result.rows.len() - failures.len(),
        result.rows.len(),
        out_dir.join("ablation.csv").display()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialAblation(failures.join("; ")))
    }
}
