//! Paired comparison of two scenarios over a list of seeds.
//!
//! Each seed runs both configs. Per-seed rows carry the Gini trend slope,
//! the access-rank (Cantillon) slope, the boom-bust episode count and the
//! mean PSI distribution shift of each side, with the difference `a - b`.
//! The tally counts, per metric, the seeds where `a` came out above, below
//! or level with `b`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::run::{run_scenario, RunError, Summary};
use crate::scenario::{RegimeKind, ScenarioConfig};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("at least one seed is required")]
    NoSeeds,
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

/// The compared measurements of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunMetrics {
    pub gini_slope: Option<f64>,
    pub cantillon_slope: Option<f64>,
    pub boom_bust_episodes: u64,
    pub distribution_shift: Option<f64>,
}

impl RunMetrics {
    pub fn from_summary(s: &Summary) -> Self {
        RunMetrics {
            gini_slope: s.gini_slope,
            cantillon_slope: s.cantillon_slope,
            boom_bust_episodes: s.boom_bust.len() as u64,
            distribution_shift: s.mean_distribution_shift,
        }
    }
}

/// `a - b` per metric; `None` when either side is missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Differences {
    pub gini_slope: Option<f64>,
    pub cantillon_slope: Option<f64>,
    pub boom_bust_episodes: i64,
    pub distribution_shift: Option<f64>,
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

impl Differences {
    pub fn between(a: &RunMetrics, b: &RunMetrics) -> Self {
        Differences {
            gini_slope: diff(a.gini_slope, b.gini_slope),
            cantillon_slope: diff(a.cantillon_slope, b.cantillon_slope),
            boom_bust_episodes: a.boom_bust_episodes as i64 - b.boom_bust_episodes as i64,
            distribution_shift: diff(a.distribution_shift, b.distribution_shift),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRow {
    pub seed: u64,
    pub a: RunMetrics,
    pub b: RunMetrics,
    pub difference: Differences,
}

/// Sign counts of `a - b` over seeds. Seeds where a metric is missing on
/// either side land in `missing`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SignCount {
    pub a_higher: u32,
    pub b_higher: u32,
    pub tied: u32,
    pub missing: u32,
}

impl SignCount {
    fn add(&mut self, d: Option<f64>) {
        match d {
            None => self.missing += 1,
            Some(d) if d > 0.0 => self.a_higher += 1,
            Some(d) if d < 0.0 => self.b_higher += 1,
            Some(_) => self.tied += 1,
        }
    }

    fn render(&self) -> String {
        format!("+{}/-{}/={}/?{}", self.a_higher, self.b_higher, self.tied, self.missing)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub gini_slope: SignCount,
    pub cantillon_slope: SignCount,
    pub boom_bust_episodes: SignCount,
    pub distribution_shift: SignCount,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub regime_a: RegimeKind,
    pub regime_b: RegimeKind,
    pub rows: Vec<SeedRow>,
    pub tally: Tally,
}

/// Runs `a` and `b` under every seed (the configs' own seeds are ignored)
/// and pairs the results. Runs execute in parallel; rows keep seed order.
pub fn compare_regimes(a: &ScenarioConfig, b: &ScenarioConfig, seeds: &[u64]) -> Result<Comparison, ReportError> {
    if seeds.is_empty() {
        return Err(ReportError::NoSeeds);
    }
    let jobs: Vec<(usize, u64)> = seeds.iter().flat_map(|&s| [(0, s), (1, s)]).collect();
    let metrics: Vec<RunMetrics> = jobs
        .par_iter()
        .map(|&(side, seed)| {
            let mut config = if side == 0 { a.clone() } else { b.clone() };
            config.seed = seed;
            run_scenario(&config, None).map(|out| RunMetrics::from_summary(&out.summary))
        })
        .collect::<Result<_, _>>()?;

    let mut tally = Tally::default();
    let rows: Vec<SeedRow> = seeds
        .iter()
        .zip(metrics.chunks_exact(2))
        .map(|(&seed, pair)| {
            let difference = Differences::between(&pair[0], &pair[1]);
            tally.gini_slope.add(difference.gini_slope);
            tally.cantillon_slope.add(difference.cantillon_slope);
            tally.boom_bust_episodes.add(Some(difference.boom_bust_episodes as f64));
            tally.distribution_shift.add(difference.distribution_shift);
            SeedRow {
                seed,
                a: pair[0],
                b: pair[1],
                difference,
            }
        })
        .collect();
    Ok(Comparison {
        regime_a: a.regime,
        regime_b: b.regime,
        rows,
        tally,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub const REPORT_HEADER: &str = "seed,gini_slope_a,gini_slope_b,gini_slope_diff,\
cantillon_slope_a,cantillon_slope_b,cantillon_slope_diff,\
boom_bust_a,boom_bust_b,boom_bust_diff,\
distribution_shift_a,distribution_shift_b,distribution_shift_diff";

/// One row per seed, then a `tally` line whose diff columns hold
/// `+a_higher/-b_higher/=tied/?missing`.
pub fn write_report_csv<W: Write>(out: &mut W, report: &Comparison) -> io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            cell(r.a.gini_slope),
            cell(r.b.gini_slope),
            cell(r.difference.gini_slope),
            cell(r.a.cantillon_slope),
            cell(r.b.cantillon_slope),
            cell(r.difference.cantillon_slope),
            r.a.boom_bust_episodes,
            r.b.boom_bust_episodes,
            r.difference.boom_bust_episodes,
            cell(r.a.distribution_shift),
            cell(r.b.distribution_shift),
            cell(r.difference.distribution_shift),
        )?;
    }
    let t = &report.tally;
    writeln!(
        out,
        "tally,,,{},,,{},,,{},,,{}",
        t.gini_slope.render(),
        t.cantillon_slope.render(),
        t.boom_bust_episodes.render(),
        t.distribution_shift.render(),
    )
}

/// Writes `report.csv` and `report.json` into `dir`.
pub fn write_report(dir: &Path, report: &Comparison) -> Result<(), ReportError> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("report.csv");
    let mut csv = Vec::new();
    write_report_csv(&mut csv, report).expect("writing to memory");
    fs::write(&path, csv).map_err(io_err(&path))?;
    let path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(())
}
