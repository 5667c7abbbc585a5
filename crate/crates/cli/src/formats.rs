//! CSV formats: the panel input schema and the result tables.
//!
//! Panel schema (UTF-8, header row): `month` (yyyy-mm), `asset_id`,
//! `ret` (decimal), then K characteristic columns with arbitrary names;
//! one row per (month, asset), rows in any order, empty cells mark
//! missing values. Synthetic panels are written in the same schema, so
//! every command accepts either source.
//!
//! All writers format numbers with Rust's shortest-roundtrip `Display`
//! and never emit timestamps, so identical runs produce byte-identical
//! files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use factordiff_core::backtest::{AblationResult, BacktestResult, StrategyId};
use factordiff_core::panel::{preprocess, Panel, PreprocessSpec, RawPanel, RawRow};

use crate::error::{CliError, CliResult};

/// Reads and preprocesses a panel CSV.
pub fn load_panel(path: &Path, spec: &PreprocessSpec) -> CliResult<Panel> {
    let raw = read_raw_panel(path)?;
    Ok(preprocess(&raw, spec)?)
}

/// Reads the raw (unshifted) panel table.
pub fn read_raw_panel(path: &Path) -> CliResult<RawPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .clone();
    let mut columns = headers.iter();
    let fixed = [columns.next(), columns.next(), columns.next()];
    if fixed != [Some("month"), Some("asset_id"), Some("ret")] {
        return Err(CliError::data(format!(
            "{}: header must start with month,asset_id,ret",
            path.display()
        )));
    }
    let char_names: Vec<String> = columns.map(str::to_string).collect();
    if char_names.is_empty() {
        return Err(CliError::data(format!(
            "{}: no characteristic columns",
            path.display()
        )));
    }

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0);
            CliError::from(factordiff_core::Error::Parse {
                line,
                message: e.to_string(),
            })
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(0);
        let parse_cell = |idx: usize, name: &str| -> CliResult<Option<f64>> {
            let cell = record.get(idx).unwrap_or("");
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>().map(Some).map_err(|_| {
                CliError::from(factordiff_core::Error::Parse {
                    line,
                    message: format!("column {name}: '{cell}' is not a number"),
                })
            })
        };
        let mut chars = Vec::with_capacity(char_names.len());
        for (j, name) in char_names.iter().enumerate() {
            chars.push(parse_cell(3 + j, name)?);
        }
        rows.push(RawRow {
            line,
            month: record.get(0).unwrap_or("").to_string(),
            asset: record.get(1).unwrap_or("").to_string(),
            ret: parse_cell(2, "ret")?,
            chars,
        });
    }
    Ok(RawPanel::from_rows(char_names, &rows)?)
}

/// Writes a raw panel in the input schema.
pub fn write_raw_panel(path: &Path, raw: &RawPanel) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "month,asset_id,ret")?;
    for name in &raw.char_names {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    let (m_count, n_count, k) = raw.characteristics.dims();
    for m in 0..m_count {
        for a in 0..n_count {
            write!(out, "{},{}", raw.months[m], raw.assets[a])?;
            let ret = raw.returns[(m, a)];
            if ret.is_finite() {
                write!(out, ",{ret}")?;
            } else {
                write!(out, ",")?;
            }
            for j in 0..k {
                let v = raw.characteristics.get(m, a, j);
                if v.is_finite() {
                    write!(out, ",{v}")?;
                } else {
                    write!(out, ",")?;
                }
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// `epoch, mean_loss` per training epoch.
pub fn write_loss_curve(path: &Path, losses: &[f64]) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "epoch,mean_loss")?;
    for (epoch, loss) in losses.iter().enumerate() {
        writeln!(out, "{},{loss}", epoch + 1)?;
    }
    Ok(())
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// `month, strategy, realized_return, cumulative` rows plus a trailing
/// metrics block is deliberately avoided: metrics live in the per-month
/// rows' derived statistics and are recomputable.
pub fn write_backtest_csv(path: &Path, result: &BacktestResult) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "month,strategy,realized_return,cumulative")?;
    for strategy in StrategyId::ALL {
        let series = result.series_of(strategy);
        for (offset, month) in result.months.iter().enumerate() {
            writeln!(
                out,
                "{month},{},{},{}",
                strategy.label(),
                series.realized[offset],
                series.cumulative[offset]
            )?;
        }
    }
    Ok(())
}

/// Per-strategy weight matrix: header `month,<asset ids>`, one row per
/// test month.
pub fn write_weights_csv(path: &Path, result: &BacktestResult, strategy: StrategyId) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "month")?;
    for asset in &result.assets {
        write!(out, ",{asset}")?;
    }
    writeln!(out)?;
    let mut records: Vec<_> = result
        .records
        .iter()
        .filter(|r| r.strategy == strategy)
        .collect();
    records.sort_by_key(|r| r.month_index);
    for record in records {
        let month = &result.months[record.month_index - result.test_start];
        write!(out, "{month}")?;
        for w in record.weights.as_slice() {
            write!(out, ",{w}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// `k, seed, mean_return, volatility, sharpe_annualized, mean_hhi,
/// converged_flag`; failed cells keep their (k, seed) with empty
/// metrics and a false flag.
pub fn write_ablation_csv(path: &Path, result: &AblationResult) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(
        out,
        "k,seed,mean_return,volatility,sharpe_annualized,mean_hhi,converged_flag"
    )?;
    for row in &result.rows {
        match &row.outcome {
            Ok(cell) => {
                let metrics = &cell
                    .backtest
                    .series_of(StrategyId::DiffusionMvo)
                    .metrics;
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    row.k,
                    row.seed,
                    metrics.mean_return,
                    metrics.volatility,
                    fmt_opt(metrics.sharpe_annualized),
                    cell.mean_hhi,
                    cell.backtest.all_mvo_converged
                )?;
            }
            Err(_) => {
                writeln!(out, "{},{},,,,,false", row.k, row.seed)?;
            }
        }
    }
    Ok(())
}
