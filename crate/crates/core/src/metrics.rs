//! Measurements: inequality, access gradient, prices, velocity,
//! distribution stability and boom-bust detection.
//!
//! Everything here is a pure function over numbers or frames.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::{ClassGroup, ClassId, EventKind, LedgerEvent};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("all values are zero")]
    AllZero,
    #[error("gini needs non-negative values")]
    Negative,
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("no base-tick basket recorded")]
    MissingBase,
    #[error("average outstanding is zero")]
    ZeroOutstanding,
    #[error("frames cover different agent sets ({0} vs {1})")]
    MismatchedAgents(usize, usize),
    #[error("series of {len} points is not longer than the baseline window {window}")]
    SeriesTooShort { len: usize, window: usize },
}

/// Population Gini: mean absolute difference over twice the mean.
pub fn gini(values: &[f64]) -> Result<f64, MetricsError> {
    if values.iter().any(|v| *v < 0.0) {
        return Err(MetricsError::Negative);
    }
    let total: f64 = values.iter().sum();
    if values.is_empty() || total <= 0.0 {
        return Err(MetricsError::AllZero);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (i as f64 + 1.0) * x)
        .sum();
    let g = 2.0 * weighted / (n * total) - (n + 1.0) / n;
    Ok(g.clamp(0.0, 1.0))
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::DegenerateInput("length mismatch"));
    }
    if x.len() < 2 {
        return Err(MetricsError::DegenerateInput("fewer than two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::DegenerateInput("constant regressor"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    Ok(sxy / sxx)
}

/// Slope of purchasing-power change on access rank. Negative means earlier
/// access gains.
pub fn cantillon_gradient(ranks: &[f64], deltas: &[f64]) -> Result<f64, MetricsError> {
    ols_slope(ranks, deltas)
}

/// Base-tick basket for a Laspeyres index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basket {
    pub quantities: Vec<f64>,
    pub base_prices: Vec<f64>,
}

impl Basket {
    pub fn cost(&self, prices: &[f64]) -> f64 {
        self.quantities.iter().zip(prices).map(|(q, p)| q * p).sum()
    }
}

/// Cost of the base basket at `prices` over its cost at base prices.
pub fn price_index(base: Option<&Basket>, prices: &[f64]) -> Result<f64, MetricsError> {
    let base = base.ok_or(MetricsError::MissingBase)?;
    let denom = base.cost(&base.base_prices);
    if denom <= 0.0 || prices.len() != base.quantities.len() {
        return Err(MetricsError::MissingBase);
    }
    Ok(base.cost(prices) / denom)
}

/// Transfer value in a window of events over average outstanding.
///
/// `denomination` returns the value-units per unit for classes in the group
/// of interest and `None` for everything else.
pub fn velocity(
    events: &[LedgerEvent],
    denomination: impl Fn(ClassId) -> Option<u64>,
    average_outstanding: f64,
) -> Result<f64, MetricsError> {
    if average_outstanding <= 0.0 {
        return Err(MetricsError::ZeroOutstanding);
    }
    let value: u64 = events
        .iter()
        .filter(|e| e.kind == EventKind::Transfer)
        .filter_map(|e| denomination(e.class).map(|d| d * e.amount))
        .sum();
    Ok(value as f64 / average_outstanding)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter().map(|x| x / total).collect()
    } else {
        v.to_vec()
    }
}

/// L1 distance between two holdings distributions, each normalized to sum
/// to one. Lies in [0, 2].
pub fn distribution_shift(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::MismatchedAgents(a.len(), b.len()));
    }
    let (a, b) = (normalized(a), normalized(b));
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoomBustParams {
    /// Threshold in baseline standard deviations.
    pub k: f64,
    /// Shortest run that counts as a boom or a bust.
    pub min_run: usize,
    /// Longest gap between the end of a boom and the start of its bust.
    pub max_gap: usize,
}

impl Default for BoomBustParams {
    fn default() -> Self {
        BoomBustParams {
            k: 1.0,
            min_run: 5,
            max_gap: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub start: usize,
    pub peak: usize,
    pub trough: usize,
}

/// Runs of at least `min_run` points strictly above or below a level.
fn runs(series: &[f64], from: usize, min_run: usize, pred: impl Fn(f64) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = from;
    while i < series.len() {
        if pred(series[i]) {
            let start = i;
            while i < series.len() && pred(series[i]) {
                i += 1;
            }
            if i - start >= min_run.max(1) {
                out.push((start, i));
            }
        } else {
            i += 1;
        }
    }
    out
}

/// Boom-then-bust episodes after the baseline window.
///
/// A boom is a run above `mean + k·σ` of the baseline; it forms an episode
/// when a run below `mean − k·σ` starts within `max_gap` points of its end.
pub fn detect_boom_bust(
    series: &[f64],
    baseline_window: usize,
    params: BoomBustParams,
) -> Result<Vec<Episode>, MetricsError> {
    if series.len() <= baseline_window || baseline_window == 0 {
        return Err(MetricsError::SeriesTooShort {
            len: series.len(),
            window: baseline_window,
        });
    }
    let base = &series[..baseline_window];
    let n = base.len() as f64;
    let mean = base.iter().sum::<f64>() / n;
    let sd = (base.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let hi = mean + params.k * sd;
    let lo = mean - params.k * sd;

    let booms = runs(series, baseline_window, params.min_run, |x| x > hi);
    let busts = runs(series, baseline_window, params.min_run, |x| x < lo);
    let mut episodes = Vec::new();
    let mut resume = 0;
    for &(start, end) in &booms {
        if start < resume {
            continue;
        }
        let Some(&(bust_start, bust_end)) = busts
            .iter()
            .find(|(s, _)| *s >= end && *s <= end + params.max_gap)
        else {
            continue;
        };
        let argmax = (start..end)
            .max_by(|&a, &b| series[a].total_cmp(&series[b]).then(b.cmp(&a)))
            .expect("runs are non-empty");
        let argmin = (bust_start..bust_end)
            .min_by(|&a, &b| series[a].total_cmp(&series[b]).then(a.cmp(&b)))
            .expect("runs are non-empty");
        episodes.push(Episode {
            start,
            peak: argmax,
            trough: argmin,
        });
        resume = bust_end;
    }
    Ok(episodes)
}

/// Per-group aggregates inside one frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub outstanding: u64,
    /// Value moved between holders during the tick.
    pub transfer_value: u64,
    /// `transfer_value / outstanding` for the tick; 0 when nothing is
    /// outstanding.
    pub velocity: f64,
    /// Laspeyres index in the group's unit of account, when priced.
    pub price_index: Option<f64>,
}

/// Snapshot at the end of a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub tick: u64,
    /// Gini of gross agent wealth (0 when everyone holds nothing).
    pub gini: f64,
    pub groups: BTreeMap<ClassGroup, GroupStats>,
    /// Numéraire value of unexpired goods held.
    pub real_savings: f64,
    /// Aggregate perceived over real savings, relative to its slow anchor.
    pub perceived_real_ratio: f64,
    /// Normalized PSI holdings per agent (empty when no PSI outstanding).
    /// Only the latest frame of a run keeps this vector.
    #[serde(skip)]
    pub holdings_distribution: Vec<f64>,
    /// Shift from the previous frame's PSI distribution.
    pub distribution_shift: Option<f64>,
    /// Numéraire value consumed during the tick.
    pub consumption: f64,
    pub produced_units: u64,
    pub consumed_units: u64,
    pub expired_units: u64,
    pub inventory_units: u64,
    pub trades: u64,
}

impl MetricsFrame {
    pub fn empty(tick: u64) -> Self {
        MetricsFrame {
            tick,
            gini: 0.0,
            groups: BTreeMap::new(),
            real_savings: 0.0,
            perceived_real_ratio: 1.0,
            holdings_distribution: Vec::new(),
            distribution_shift: None,
            consumption: 0.0,
            produced_units: 0,
            consumed_units: 0,
            expired_units: 0,
            inventory_units: 0,
            trades: 0,
        }
    }

    pub fn group(&self, group: ClassGroup) -> GroupStats {
        self.groups.get(&group).copied().unwrap_or_default()
    }
}

/// Sum of transfer value over average outstanding across `frames`.
pub fn window_velocity(frames: &[MetricsFrame], group: ClassGroup) -> Result<f64, MetricsError> {
    if frames.is_empty() {
        return Err(MetricsError::ZeroOutstanding);
    }
    let moved: u64 = frames.iter().map(|f| f.group(group).transfer_value).sum();
    let avg = frames.iter().map(|f| f.group(group).outstanding as f64).sum::<f64>() / frames.len() as f64;
    if avg <= 0.0 {
        return Err(MetricsError::ZeroOutstanding);
    }
    Ok(moved as f64 / avg)
}

/// Mean per-tick log change of a positive series.
pub fn mean_log_drift(series: &[f64]) -> Option<f64> {
    if series.len() < 2 || series.iter().any(|x| *x <= 0.0) {
        return None;
    }
    let n = (series.len() - 1) as f64;
    Some((series[series.len() - 1].ln() - series[0].ln()) / n)
}

pub fn write_metrics_csv<W: Write>(out: &mut W, frames: &[MetricsFrame]) -> io::Result<()> {
    write!(out, "tick,gini,real_savings,perceived_real_ratio,consumption")?;
    write!(out, ",produced_units,consumed_units,expired_units,inventory_units,trades,distribution_shift")?;
    for g in ClassGroup::ALL {
        let g = g.as_str();
        write!(out, ",price_index_{g},velocity_{g},outstanding_{g},transfers_{g}")?;
    }
    writeln!(out)?;
    for f in frames {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            f.tick,
            f.gini,
            f.real_savings,
            f.perceived_real_ratio,
            f.consumption,
            f.produced_units,
            f.consumed_units,
            f.expired_units,
            f.inventory_units,
            f.trades,
            f.distribution_shift.map(|s| s.to_string()).unwrap_or_default()
        )?;
        for g in ClassGroup::ALL {
            let s = f.group(g);
            write!(
                out,
                ",{},{},{},{}",
                s.price_index.map(|p| p.to_string()).unwrap_or_default(),
                s.velocity,
                s.outstanding,
                s.transfer_value
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}
