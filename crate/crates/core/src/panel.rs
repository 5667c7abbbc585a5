//! Fixed-shape monthly panels of returns and firm characteristics.
//!
//! A [`Panel`] is the preprocessed, decision-aligned view: row `t`
//! holds the characteristics observed at month `t` and the return
//! realized over month `t+1`. Raw data (from the CSV schema, or the
//! synthetic generator) first lands in a [`RawPanel`] and goes through
//! [`preprocess`], which winsorizes returns cross-sectionally, imputes
//! missing characteristics with cross-sectional means, standardizes and
//! clips them, selects the retained assets, and applies the one-month
//! shift.
//!
//! Conventions pinned here because downstream values depend on them:
//! quantiles interpolate linearly between order statistics
//! (`h = q * (n - 1)`), and standardization uses the population standard
//! deviation (divide by N). A column whose deviations vanish at
//! floating-point noise level is treated as constant and mapped to
//! zeros.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
// Needed by the no_std build; std builds resolve the inherent methods.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::{tags, Stream};

/// T x N x K characteristics tensor, row-major by (month, asset, characteristic).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    t: usize,
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(t: usize, n: usize, k: usize) -> Self {
        Tensor3 {
            t,
            n,
            k,
            data: vec![0.0; t * n * k],
        }
    }

    pub fn filled(t: usize, n: usize, k: usize, value: f64) -> Self {
        Tensor3 {
            t,
            n,
            k,
            data: vec![value; t * n * k],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.t, self.n, self.k)
    }

    #[inline]
    pub fn get(&self, t: usize, i: usize, j: usize) -> f64 {
        self.data[(t * self.n + i) * self.k + j]
    }

    #[inline]
    pub fn set(&mut self, t: usize, i: usize, j: usize, value: f64) {
        self.data[(t * self.n + i) * self.k + j] = value;
    }

    /// The N x K slab of one month as a contiguous slice.
    pub fn month(&self, t: usize) -> &[f64] {
        &self.data[t * self.n * self.k..(t + 1) * self.n * self.k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Preprocessed monthly panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    months: Vec<String>,
    assets: Vec<String>,
    characteristics: Tensor3,
    returns: Mat,
}

impl Panel {
    pub fn new(
        months: Vec<String>,
        assets: Vec<String>,
        characteristics: Tensor3,
        returns: Mat,
    ) -> Result<Self> {
        let (t, n, _k) = characteristics.dims();
        if months.len() != t {
            return Err(Error::shape(format!(
                "{} month labels for a T={t} tensor",
                months.len()
            )));
        }
        if assets.len() != n {
            return Err(Error::shape(format!(
                "{} asset labels for an N={n} tensor",
                assets.len()
            )));
        }
        if returns.rows() != t || returns.cols() != n {
            return Err(Error::shape(format!(
                "returns are {}x{}, expected {t}x{n}",
                returns.rows(),
                returns.cols()
            )));
        }
        Ok(Panel {
            months,
            assets,
            characteristics,
            returns,
        })
    }

    pub fn t(&self) -> usize {
        self.months.len()
    }

    pub fn n(&self) -> usize {
        self.assets.len()
    }

    pub fn k(&self) -> usize {
        self.characteristics.dims().2
    }

    pub fn months(&self) -> &[String] {
        &self.months
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn characteristics(&self) -> &Tensor3 {
        &self.characteristics
    }

    /// Realized next-month returns of decision month `t`.
    pub fn returns_at(&self, t: usize) -> &[f64] {
        self.returns.row(t)
    }

    pub fn returns(&self) -> &Mat {
        &self.returns
    }

    /// N x K conditioning matrix of decision month `t`.
    pub fn characteristics_at(&self, t: usize) -> Mat {
        let (_, n, k) = self.characteristics.dims();
        Mat::from_vec(n, k, self.characteristics.month(t).to_vec())
            .expect("tensor slab has n*k entries")
    }

    /// Copy of the sub-panel over the month range (used for splits).
    pub fn slice_months(&self, range: Range<usize>) -> Result<Panel> {
        if range.end > self.t() || range.start >= range.end {
            return Err(Error::domain(format!(
                "month range {}..{} outside [0, {})",
                range.start,
                range.end,
                self.t()
            )));
        }
        let (_, n, k) = self.characteristics.dims();
        let t = range.end - range.start;
        let mut chars = Tensor3::zeros(t, n, k);
        let mut rets = Mat::zeros(t, n);
        for (dst, src) in range.clone().enumerate() {
            let slab = self.characteristics.month(src);
            let offset = dst * n * k;
            chars.data[offset..offset + n * k].copy_from_slice(slab);
            rets.row_mut(dst).copy_from_slice(self.returns.row(src));
        }
        Panel::new(
            self.months[range.clone()].to_vec(),
            self.assets.clone(),
            chars,
            rets,
        )
    }

    /// Checks the preprocessed-panel invariants: finite entries,
    /// characteristics within the clip bound, and each (month,
    /// characteristic) column either standardized (mean 0, std 1 to
    /// 1e-9), all-zero (constant rule), or visibly clipped.
    pub fn validate(&self, clip_bound: f64) -> Result<()> {
        let (t, n, k) = self.characteristics.dims();
        if !self.returns.is_finite() || self.characteristics.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("panel holds non-finite entries"));
        }
        for tt in 0..t {
            for j in 0..k {
                let mut mean = 0.0;
                let mut clipped = false;
                let mut all_zero = true;
                for i in 0..n {
                    let v = self.characteristics.get(tt, i, j);
                    if v.abs() > clip_bound + 1e-12 {
                        return Err(Error::domain(format!(
                            "characteristic ({tt}, {i}, {j}) = {v} exceeds clip bound {clip_bound}"
                        )));
                    }
                    if (v.abs() - clip_bound).abs() <= 1e-12 {
                        clipped = true;
                    }
                    if v != 0.0 {
                        all_zero = false;
                    }
                    mean += v;
                }
                mean /= n as f64;
                if clipped || all_zero {
                    continue;
                }
                let mut var = 0.0;
                for i in 0..n {
                    let d = self.characteristics.get(tt, i, j) - mean;
                    var += d * d;
                }
                let std = (var / n as f64).sqrt();
                if mean.abs() > 1e-9 || (std - 1.0).abs() > 1e-9 {
                    return Err(Error::domain(format!(
                        "column (month {tt}, characteristic {j}) not standardized: mean {mean}, std {std}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Preprocessing configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSpec {
    /// Lower winsorization quantile, in (0, 0.5).
    pub winsor_low_q: f64,
    /// Upper winsorization quantile, in (0.5, 1).
    pub winsor_high_q: f64,
    /// Symmetric clip bound for standardized characteristics.
    pub clip_bound: f64,
    /// Assets retained per month.
    pub target_n: usize,
}

impl PreprocessSpec {
    /// Mild defaults: winsorize at (1%, 99%), clip at 5 standard
    /// deviations.
    pub fn new(target_n: usize) -> Self {
        PreprocessSpec {
            winsor_low_q: 0.01,
            winsor_high_q: 0.99,
            clip_bound: 5.0,
            target_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.winsor_low_q > 0.0 && self.winsor_low_q < 0.5) {
            return Err(Error::domain(format!(
                "winsor_low_q = {} outside (0, 0.5)",
                self.winsor_low_q
            )));
        }
        if !(self.winsor_high_q > 0.5 && self.winsor_high_q < 1.0) {
            return Err(Error::domain(format!(
                "winsor_high_q = {} outside (0.5, 1)",
                self.winsor_high_q
            )));
        }
        if self.winsor_low_q >= self.winsor_high_q {
            return Err(Error::domain("winsor_low_q must be below winsor_high_q"));
        }
        if !(self.clip_bound > 0.0) {
            return Err(Error::domain("clip_bound must be positive"));
        }
        if self.target_n == 0 {
            return Err(Error::domain("target_n must be positive"));
        }
        Ok(())
    }
}

/// One raw record: a (month, asset) observation with its return and
/// characteristic cells, `None` marking missing values. `line` is the
/// 1-based source line for error reporting.
#[derive(Debug, Clone)]
pub struct RawRow {
    pub line: usize,
    pub month: String,
    pub asset: String,
    pub ret: Option<f64>,
    pub chars: Vec<Option<f64>>,
}

/// Unprocessed panel: months x assets x characteristics with NaN
/// marking missing cells, returns unshifted (each month carries its own
/// realized return).
#[derive(Debug, Clone)]
pub struct RawPanel {
    pub months: Vec<String>,
    pub assets: Vec<String>,
    pub char_names: Vec<String>,
    /// M x N x K, NaN = missing.
    pub characteristics: Tensor3,
    /// M x N, NaN = missing; entry (m, i) is the return realized during
    /// month m.
    pub returns: Mat,
}

fn parse_month(label: &str) -> Option<(i32, u32)> {
    let (y, m) = label.split_once('-')?;
    if y.len() != 4 || m.len() != 2 {
        return None;
    }
    let year: i32 = y.parse().ok()?;
    let month: u32 = m.parse().ok()?;
    if (1..=12).contains(&month) {
        Some((year, month))
    } else {
        None
    }
}

fn next_month(year: i32, month: u32) -> (i32, u32) {
    if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    }
}

/// Formats a (year, month) pair as the canonical `yyyy-mm` label.
pub fn month_label(year: i32, month: u32) -> String {
    format!("{year:04}-{month:02}")
}

impl RawPanel {
    /// Assembles raw records into dense month/asset/characteristic
    /// tensors. Rows may arrive in any order; distinct months must form
    /// a contiguous ascending calendar sequence, and (month, asset)
    /// pairs must be unique.
    pub fn from_rows(char_names: Vec<String>, rows: &[RawRow]) -> Result<RawPanel> {
        if rows.is_empty() {
            return Err(Error::shape("no data rows"));
        }
        let k = char_names.len();

        let mut month_set: BTreeMap<String, (i32, u32)> = BTreeMap::new();
        let mut asset_set: BTreeMap<String, ()> = BTreeMap::new();
        for row in rows {
            if !month_set.contains_key(&row.month) {
                let parsed = parse_month(&row.month).ok_or(Error::Parse {
                    line: row.line,
                    message: format!("month '{}' is not yyyy-mm", row.month),
                })?;
                month_set.insert(row.month.clone(), parsed);
            }
            asset_set.entry(row.asset.clone()).or_insert(());
            if row.chars.len() != k {
                return Err(Error::Parse {
                    line: row.line,
                    message: format!(
                        "row has {} characteristic cells, header has {k}",
                        row.chars.len()
                    ),
                });
            }
        }

        let months: Vec<String> = month_set.keys().cloned().collect();
        let mut previous: Option<(i32, u32)> = None;
        for label in &months {
            let current = month_set[label];
            if let Some(prev) = previous {
                if next_month(prev.0, prev.1) != current {
                    return Err(Error::Ordering(format!(
                        "months are not contiguous: {} is not followed by {label}",
                        month_label(prev.0, prev.1)
                    )));
                }
            }
            previous = Some(current);
        }

        let assets: Vec<String> = asset_set.keys().cloned().collect();
        let month_index: BTreeMap<&str, usize> = months
            .iter()
            .enumerate()
            .map(|(i, m)| (m.as_str(), i))
            .collect();
        let asset_index: BTreeMap<&str, usize> = assets
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), i))
            .collect();

        let m_count = months.len();
        let n_count = assets.len();
        let mut characteristics = Tensor3::filled(m_count, n_count, k, f64::NAN);
        let mut returns = Mat::from_vec(m_count, n_count, vec![f64::NAN; m_count * n_count])?;
        let mut seen = vec![false; m_count * n_count];
        for row in rows {
            let mi = month_index[row.month.as_str()];
            let ai = asset_index[row.asset.as_str()];
            if seen[mi * n_count + ai] {
                return Err(Error::Parse {
                    line: row.line,
                    message: format!("duplicate row for ({}, {})", row.month, row.asset),
                });
            }
            seen[mi * n_count + ai] = true;
            returns[(mi, ai)] = row.ret.unwrap_or(f64::NAN);
            for (j, cell) in row.chars.iter().enumerate() {
                characteristics.set(mi, ai, j, cell.unwrap_or(f64::NAN));
            }
        }

        Ok(RawPanel {
            months,
            assets,
            char_names,
            characteristics,
            returns,
        })
    }
}

/// Empirical quantile with linear interpolation between order
/// statistics (`h = q * (n - 1)`), on an already sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

/// Clips every value into the empirical `[Q(low_q), Q(high_q)]` band of
/// the vector itself; output order matches input order.
pub fn winsorize_cross_section(values: &[f64], low_q: f64, high_q: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::domain("cannot winsorize an empty vector"));
    }
    if !(low_q > 0.0 && low_q < high_q && high_q < 1.0) {
        return Err(Error::domain(format!(
            "winsor quantiles ({low_q}, {high_q}) must satisfy 0 < low < high < 1"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, low_q);
    let hi = quantile_sorted(&sorted, high_q);
    Ok(values.iter().map(|&v| v.clamp(lo, hi)).collect())
}

/// Standardizes to zero mean / unit population std, then clips at
/// `±clip_bound`. Columns with vanishing dispersion map to all zeros.
pub fn standardize_clip_cross_section(values: &[f64], clip_bound: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::domain("cannot standardize an empty vector"));
    }
    if !(clip_bound > 0.0) {
        return Err(Error::domain("clip_bound must be positive"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    // Dispersion at floating-point noise level counts as constant;
    // without this, a column of identical non-dyadic values would blow
    // its rounding residue up to full z-scores.
    if std <= 1e-12 * mean.abs().max(1.0) {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values
        .iter()
        .map(|&v| ((v - mean) / std).clamp(-clip_bound, clip_bound))
        .collect())
}

/// Winsorizes returns, imputes/standardizes/clips characteristics,
/// retains `target_n` assets, and shifts returns so that row `t` holds
/// the month-`t+1` realized return.
///
/// Asset retention: assets with a missing return in any month are
/// dropped; the remaining assets are ranked by total missing
/// characteristic cells (ties by identifier) and the best `target_n`
/// are kept.
pub fn preprocess(raw: &RawPanel, spec: &PreprocessSpec) -> Result<Panel> {
    spec.validate()?;
    let m_count = raw.months.len();
    let n_all = raw.assets.len();
    let k = raw.char_names.len();
    if m_count < 2 {
        return Err(Error::shape(format!(
            "need at least 2 months to form next-month returns, got {m_count}"
        )));
    }

    // Returns are needed for months 1..M (the realized side of each
    // decision month).
    let mut eligible: Vec<usize> = Vec::new();
    for a in 0..n_all {
        let complete = (1..m_count).all(|m| raw.returns[(m, a)].is_finite());
        if complete {
            eligible.push(a);
        }
    }
    if eligible.len() < spec.target_n {
        // Name the month with the worst return coverage.
        let mut worst_month = 1;
        let mut worst_count = usize::MAX;
        for m in 1..m_count {
            let present = (0..n_all)
                .filter(|&a| raw.returns[(m, a)].is_finite())
                .count();
            if present < worst_count {
                worst_count = present;
                worst_month = m;
            }
        }
        return Err(Error::shape(format!(
            "month {}: only {} assets with complete return data, need {}",
            raw.months[worst_month], worst_count, spec.target_n
        )));
    }

    let mut ranked: Vec<(usize, usize)> = eligible
        .into_iter()
        .map(|a| {
            let missing = (0..m_count.saturating_sub(1))
                .map(|m| {
                    (0..k)
                        .filter(|&j| !raw.characteristics.get(m, a, j).is_finite())
                        .count()
                })
                .sum::<usize>();
            (a, missing)
        })
        .collect();
    ranked.sort_by(|x, y| {
        x.1.cmp(&y.1)
            .then_with(|| raw.assets[x.0].cmp(&raw.assets[y.0]))
    });
    let mut selected: Vec<usize> = ranked
        .into_iter()
        .take(spec.target_n)
        .map(|(a, _)| a)
        .collect();
    // Keep the panel's asset axis in identifier order.
    selected.sort_by(|&x, &y| raw.assets[x].cmp(&raw.assets[y]));

    let t = m_count - 1;
    let n = spec.target_n;
    let assets: Vec<String> = selected.iter().map(|&a| raw.assets[a].clone()).collect();
    let months: Vec<String> = raw.months[..t].to_vec();

    let mut returns = Mat::zeros(t, n);
    for tt in 0..t {
        let cross: Vec<f64> = selected
            .iter()
            .map(|&a| raw.returns[(tt + 1, a)])
            .collect();
        let winsorized = winsorize_cross_section(&cross, spec.winsor_low_q, spec.winsor_high_q)?;
        returns.row_mut(tt).copy_from_slice(&winsorized);
    }

    let mut characteristics = Tensor3::zeros(t, n, k);
    let mut column = vec![0.0; n];
    for tt in 0..t {
        for j in 0..k {
            let mut present_sum = 0.0;
            let mut present_count = 0usize;
            for &a in &selected {
                let v = raw.characteristics.get(tt, a, j);
                if v.is_finite() {
                    present_sum += v;
                    present_count += 1;
                }
            }
            let impute = if present_count > 0 {
                present_sum / present_count as f64
            } else {
                0.0
            };
            for (i, &a) in selected.iter().enumerate() {
                let v = raw.characteristics.get(tt, a, j);
                column[i] = if v.is_finite() { v } else { impute };
            }
            let standardized = standardize_clip_cross_section(&column, spec.clip_bound)?;
            for (i, &v) in standardized.iter().enumerate() {
                characteristics.set(tt, i, j, v);
            }
        }
    }

    Panel::new(months, assets, characteristics, returns)
}

/// The deterministic column subset used by [`select_factors`]: the
/// length-`k` prefix of a seeded permutation of `0..k_full`, sorted
/// ascending. Subsets are nested across `k` under one seed, and
/// `k = k_full` yields the identity.
pub fn factor_subset(k_full: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > k_full {
        return Err(Error::domain(format!(
            "factor count {k} outside [1, {k_full}]"
        )));
    }
    let mut perm: Vec<usize> = (0..k_full).collect();
    Stream::new(seed).fork(tags::FACTOR_SELECT).shuffle(&mut perm);
    let mut chosen: Vec<usize> = perm[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Keeps exactly the given characteristic columns (ascending, unique).
pub fn select_columns(panel: &Panel, columns: &[usize]) -> Result<Panel> {
    let (t, n, k_full) = panel.characteristics.dims();
    if columns.is_empty() {
        return Err(Error::domain("column subset must be non-empty"));
    }
    for pair in columns.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::domain(
                "column subset must be strictly ascending",
            ));
        }
    }
    if let Some(&last) = columns.last() {
        if last >= k_full {
            return Err(Error::domain(format!(
                "column index {last} outside panel with K = {k_full}"
            )));
        }
    }
    let k = columns.len();
    let mut chars = Tensor3::zeros(t, n, k);
    for tt in 0..t {
        for i in 0..n {
            for (jj, &j) in columns.iter().enumerate() {
                chars.set(tt, i, jj, panel.characteristics.get(tt, i, j));
            }
        }
    }
    Panel::new(
        panel.months.clone(),
        panel.assets.clone(),
        chars,
        panel.returns.clone(),
    )
}

/// Retains a deterministic, seed-keyed subset of `k` characteristic
/// columns (see [`factor_subset`] for the selection rule).
pub fn select_factors(panel: &Panel, k: usize, seed: u64) -> Result<Panel> {
    let (_, _, k_full) = panel.characteristics.dims();
    let chosen = factor_subset(k_full, k, seed)?;
    select_columns(panel, &chosen)
}

/// How the synthetic signal maps the informative characteristics to
/// expected returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    /// Weighted sum of the informative columns.
    Linear,
    /// Weighted sum squashed through tanh.
    TanhSaturating,
}

/// Configuration of the synthetic data-generating process
/// `r = signal_scale * g(x_1..x_k_true) + noise_scale * shock`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub t: usize,
    pub n: usize,
    pub k: usize,
    /// Number of informative characteristics (the leading columns).
    pub k_true: usize,
    pub signal_scale: f64,
    pub noise_scale: f64,
    pub nonlinearity: Nonlinearity,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.n == 0 || self.k == 0 {
            return Err(Error::domain("t, n, k must be positive"));
        }
        if self.k_true == 0 || self.k_true > self.k {
            return Err(Error::domain(format!(
                "k_true = {} outside [1, {}]",
                self.k_true, self.k
            )));
        }
        if self.signal_scale < 0.0 {
            return Err(Error::domain("signal_scale must be non-negative"));
        }
        if !(self.noise_scale > 0.0) {
            return Err(Error::domain("noise_scale must be positive"));
        }
        Ok(())
    }
}

/// Fixed signal weights: `1/sqrt(k_true)` on each informative column,
/// keeping the signal variance independent of `k_true`.
pub fn synthetic_signal_weight(k_true: usize) -> f64 {
    1.0 / (k_true as f64).sqrt()
}

fn synthetic_chars_row(spec: &SyntheticSpec, month: usize, asset: usize) -> Vec<f64> {
    let mut row = vec![0.0; spec.k];
    Stream::new(spec.seed)
        .fork(tags::SYNTH_CHARS)
        .fork(month as u64)
        .fork(asset as u64)
        .fill_normal(&mut row);
    row
}

fn synthetic_signal(spec: &SyntheticSpec, chars_row: &[f64]) -> f64 {
    let w = synthetic_signal_weight(spec.k_true);
    let s: f64 = chars_row[..spec.k_true].iter().map(|x| w * x).sum();
    match spec.nonlinearity {
        Nonlinearity::Linear => s,
        Nonlinearity::TanhSaturating => s.tanh(),
    }
}

/// Generates the aligned synthetic panel: characteristics i.i.d.
/// standard normal, returns `signal_scale * g(...) + noise_scale *
/// shock`, all keyed by the spec seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Panel> {
    spec.validate()?;
    let mut chars = Tensor3::zeros(spec.t, spec.n, spec.k);
    let mut returns = Mat::zeros(spec.t, spec.n);
    for t in 0..spec.t {
        for i in 0..spec.n {
            let row = synthetic_chars_row(spec, t, i);
            let signal = synthetic_signal(spec, &row);
            for (j, &v) in row.iter().enumerate() {
                chars.set(t, i, j, v);
            }
            let shock = Stream::new(spec.seed)
                .fork(tags::SYNTH_NOISE)
                .fork(t as u64)
                .fork(i as u64)
                .next_normal();
            returns[(t, i)] = spec.signal_scale * signal + spec.noise_scale * shock;
        }
    }
    let months: Vec<String> = (0..spec.t).map(|t| synthetic_month_label(t)).collect();
    let assets: Vec<String> = (0..spec.n).map(synthetic_asset_label).collect();
    Panel::new(months, assets, chars, returns)
}

/// Raw (unshifted) synthetic table for CSV persistence: `t + 1` months,
/// month `m >= 1` carrying the return generated from month `m - 1`'s
/// characteristics, month 0's return set to zero (it has no generating
/// characteristics and is consumed by the shift anyway).
pub fn generate_synthetic_raw(spec: &SyntheticSpec) -> Result<RawPanel> {
    spec.validate()?;
    let m_count = spec.t + 1;
    let mut chars = Tensor3::zeros(m_count, spec.n, spec.k);
    let mut returns = Mat::zeros(m_count, spec.n);
    for m in 0..m_count {
        for i in 0..spec.n {
            let row = synthetic_chars_row(spec, m, i);
            for (j, &v) in row.iter().enumerate() {
                chars.set(m, i, j, v);
            }
        }
    }
    for m in 1..m_count {
        for i in 0..spec.n {
            let prev_row: Vec<f64> = (0..spec.k).map(|j| chars.get(m - 1, i, j)).collect();
            let signal = synthetic_signal(spec, &prev_row);
            let shock = Stream::new(spec.seed)
                .fork(tags::SYNTH_NOISE)
                .fork((m - 1) as u64)
                .fork(i as u64)
                .next_normal();
            returns[(m, i)] = spec.signal_scale * signal + spec.noise_scale * shock;
        }
    }
    let months: Vec<String> = (0..m_count).map(synthetic_month_label).collect();
    let assets: Vec<String> = (0..spec.n).map(synthetic_asset_label).collect();
    let char_names: Vec<String> = (0..spec.k).map(|j| format!("f{:03}", j + 1)).collect();
    Ok(RawPanel {
        months,
        assets,
        char_names,
        characteristics: chars,
        returns,
    })
}

fn synthetic_month_label(offset: usize) -> String {
    let total = offset as u32;
    let year = 2010 + (total / 12) as i32;
    let month = total % 12 + 1;
    month_label(year, month)
}

fn synthetic_asset_label(i: usize) -> String {
    format!("A{:04}", i + 1)
}
