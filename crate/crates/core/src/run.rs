//! Running a scenario to its horizon and writing the outputs.
//!
//! A run writes three files: `events.csv` (the full ledger log),
//! `metrics.csv` (one row per frame, starting with the initial frame at
//! tick 0) and `summary.json`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dynamics::{World, WorldError};
use crate::instruments::{AgentId, ClassGroup, LedgerEvent};
use crate::metrics::{
    cantillon_gradient, detect_boom_bust, mean_log_drift, ols_slope, window_velocity, write_metrics_csv,
    Episode, MetricsFrame,
};
use crate::scenario::{RegimeKind, ScenarioConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Hashes the CSV rendering of every event and optionally streams it to a
/// file.
pub struct EventSink {
    hasher: Sha256,
    out: Option<BufWriter<File>>,
    row: Vec<u8>,
    count: u64,
}

impl EventSink {
    pub fn new(out: Option<File>) -> io::Result<Self> {
        let mut sink = EventSink {
            hasher: Sha256::new(),
            out: out.map(BufWriter::new),
            row: Vec::with_capacity(1 << 16),
            count: 0,
        };
        sink.row.extend_from_slice(LedgerEvent::CSV_HEADER.as_bytes());
        sink.row.push(b'\n');
        sink.flush_row()?;
        Ok(sink)
    }

    fn flush_row(&mut self) -> io::Result<()> {
        self.hasher.update(&self.row);
        if let Some(out) = &mut self.out {
            out.write_all(&self.row)?;
        }
        self.row.clear();
        Ok(())
    }

    pub fn push(&mut self, events: &[LedgerEvent]) -> io::Result<()> {
        for e in events {
            e.write_csv(&mut self.row)?;
            self.count += 1;
        }
        self.flush_row()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Hex SHA-256 of the CSV bytes pushed so far.
    pub fn finish(self) -> io::Result<String> {
        if let Some(mut out) = self.out {
            out.flush()?;
        }
        Ok(hex::encode(self.hasher.finalize()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: ClassGroup,
    pub outstanding: u64,
    /// Total transfer value over average outstanding across the run.
    pub velocity: Option<f64>,
    pub price_index: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub regime: RegimeKind,
    pub seed: u64,
    pub agents: u32,
    pub horizon: u64,
    pub final_tick: u64,
    pub gini: f64,
    pub real_savings: f64,
    pub perceived_real_ratio: f64,
    pub groups: Vec<GroupSummary>,
    /// OLS slope of Gini on tick after the warm-up frames.
    pub gini_slope: Option<f64>,
    /// OLS slope of purchasing-power change on credit access rank, from
    /// the first expansion tick to the horizon.
    pub cantillon_slope: Option<f64>,
    /// Episodes in aggregate consumption; indices are ticks.
    pub boom_bust: Vec<Episode>,
    /// Mean consecutive-frame shift of PSI holdings after burn-in.
    pub mean_distribution_shift: Option<f64>,
    /// Mean per-tick log change of the price index over the final third.
    pub price_drift: Option<f64>,
    pub projects_delivered: u64,
    pub contracts_completed: u64,
    pub failed_meetings: u64,
    pub events: u64,
    pub event_digest: String,
}

/// Everything a finished run leaves in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub frames: Vec<MetricsFrame>,
    pub summary: Summary,
    /// Purchasing-power change per access rank, when credit expanded.
    pub access_deltas: Vec<(f64, f64)>,
}

/// Tick at which new fiat starts entering, for the access gradient.
fn expansion_start(config: &ScenarioConfig) -> Option<u64> {
    let f = config.fiat.as_ref()?;
    let scheduled = f.expansion.as_ref().map(|e| e.start.max(1));
    let shock = f.shocks.iter().map(|s| s.tick.max(1)).min();
    match (scheduled, shock) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Steps a world to the config's horizon, streaming events into `sink`.
pub fn simulate(config: &ScenarioConfig, sink: &mut EventSink) -> Result<(World, Vec<MetricsFrame>, Vec<(f64, f64)>), RunError> {
    let mut world = World::new(config)?;
    let mut frames = Vec::with_capacity(config.horizon as usize + 1);
    sink.push(&world.take_events()).map_err(io_err(Path::new("events.csv")))?;
    let mut frame = world.frame().clone();
    frame.holdings_distribution.clear();
    frames.push(frame);

    let start = expansion_start(config);
    let order: Vec<AgentId> = world.regime().fiat().map(|f| f.access_order.clone()).unwrap_or_default();
    let mut before: Option<Vec<f64>> = None;
    if start == Some(1) {
        before = Some(order.iter().map(|a| world.affordability(*a)).collect());
    }
    for _ in 0..config.horizon {
        let mut frame = world.step()?.clone();
        frame.holdings_distribution.clear();
        frames.push(frame);
        sink.push(&world.take_events()).map_err(io_err(Path::new("events.csv")))?;
        if start.is_some_and(|s| world.tick() + 1 == s) {
            before = Some(order.iter().map(|a| world.affordability(*a)).collect());
        }
    }
    let deltas = match before {
        Some(b) => order
            .iter()
            .zip(b)
            .enumerate()
            .map(|(rank, (a, start))| (rank as f64, world.affordability(*a) - start))
            .collect(),
        None => Vec::new(),
    };
    Ok((world, frames, deltas))
}

/// Derives the run summary from a finished world and its frames.
pub fn summarize(config: &ScenarioConfig, world: &World, frames: &[MetricsFrame], deltas: &[(f64, f64)], events: u64, digest: String) -> Summary {
    let m = &config.metrics;
    let last = frames.last().cloned().unwrap_or_else(|| MetricsFrame::empty(0));
    let tail = &frames[m.skip.min(frames.len())..];

    let gini_slope = {
        let x: Vec<f64> = tail.iter().map(|f| f.tick as f64).collect();
        let y: Vec<f64> = tail.iter().map(|f| f.gini).collect();
        ols_slope(&x, &y).ok()
    };
    let cantillon_slope = if deltas.len() >= 2 {
        let (r, d): (Vec<f64>, Vec<f64>) = deltas.iter().copied().unzip();
        cantillon_gradient(&r, &d).ok()
    } else {
        None
    };
    let consumption: Vec<f64> = tail.iter().map(|f| f.consumption).collect();
    let boom_bust = detect_boom_bust(&consumption, m.baseline_window, m.boom_bust)
        .map(|eps| {
            eps.into_iter()
                .map(|e| Episode {
                    start: e.start + m.skip,
                    peak: e.peak + m.skip,
                    trough: e.trough + m.skip,
                })
                .collect()
        })
        .unwrap_or_default();
    let settled = &frames[m.burn_in.min(frames.len())..];
    let shifts: Vec<f64> = settled.iter().filter_map(|f| f.distribution_shift).collect();
    let mean_distribution_shift = (!shifts.is_empty()).then(|| shifts.iter().sum::<f64>() / shifts.len() as f64);
    let unit = world.unit();
    let index: Vec<f64> = frames[frames.len() * 2 / 3..]
        .iter()
        .filter_map(|f| f.group(unit).price_index)
        .collect();
    let groups = last
        .groups
        .iter()
        .map(|(g, s)| GroupSummary {
            group: *g,
            outstanding: s.outstanding,
            velocity: window_velocity(frames, *g).ok(),
            price_index: s.price_index,
        })
        .collect();
    let projects_delivered = world
        .regime()
        .registry()
        .map_or(0, |r| r.projects().filter(|p| p.class.is_some()).count() as u64);
    Summary {
        regime: config.regime,
        seed: config.seed,
        agents: config.agents,
        horizon: config.horizon,
        final_tick: last.tick,
        gini: last.gini,
        real_savings: last.real_savings,
        perceived_real_ratio: last.perceived_real_ratio,
        groups,
        gini_slope,
        cantillon_slope,
        boom_bust,
        mean_distribution_shift,
        price_drift: mean_log_drift(&index),
        projects_delivered,
        contracts_completed: world.contracts().completed_count(),
        failed_meetings: world.failed_meetings(),
        events,
        event_digest: digest,
    }
}

/// Runs `config` to its horizon. With `out`, writes `events.csv`,
/// `metrics.csv` and `summary.json` there.
pub fn run_scenario(config: &ScenarioConfig, out: Option<&Path>) -> Result<RunOutput, RunError> {
    config.validate().map_err(WorldError::from)?;
    let events_file = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("events.csv");
            Some(File::create(&path).map_err(io_err(&path))?)
        }
        None => None,
    };
    let mut sink = EventSink::new(events_file).map_err(io_err(Path::new("events.csv")))?;
    let (world, frames, deltas) = simulate(config, &mut sink)?;
    let count = sink.count();
    let digest = sink.finish().map_err(io_err(Path::new("events.csv")))?;
    let summary = summarize(config, &world, &frames, &deltas, count, digest);
    if let Some(dir) = out {
        let path = dir.join("metrics.csv");
        let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        write_metrics_csv(&mut w, &frames).and_then(|_| w.flush()).map_err(io_err(&path))?;
        let path = dir.join("summary.json");
        let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        json.push('\n');
        fs::write(&path, json).map_err(io_err(&path))?;
    }
    Ok(RunOutput {
        frames,
        summary,
        access_deltas: deltas,
    })
}
