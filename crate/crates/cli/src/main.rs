//! `psisim` command-line runner.
//!
//! Exit codes: 0 success, 1 usage, 2 config, 3 runtime.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psisim::report::{compare_regimes, write_report, ReportError};
use psisim::run::run_scenario;
use psisim::scenario::{parse_scenario, ConfigError, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(name = "psisim", version, about = "Deterministic monetary-regime simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write events.csv, metrics.csv and summary.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; falls back to the scenario's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run two scenarios over the same seeds and write a paired report.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Comma-separated seeds, e.g. `1,2,3`.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

fn config_failure(path: &Path, e: &ConfigError) -> Failure {
    let message = e.to_string();
    match e.key() {
        Some(key) if !message.contains(key) => Failure::Config(format!("{}: `{key}`: {message}", path.display())),
        _ => Failure::Config(format!("{}: {message}", path.display())),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| config_failure(path, &e))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { scenario } => {
            let config = load(&scenario)?;
            println!("{}: ok ({:?}, {} agents, {} ticks)", scenario.display(), config.regime, config.agents, config.horizon);
        }
        Command::Run { scenario, out } => {
            let config = load(&scenario)?;
            let out = out
                .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
                .ok_or_else(|| Failure::Usage("run needs --out or an output_dir in the scenario".into()))?;
            let output = run_scenario(&config, Some(&out)).map_err(|e| Failure::Runtime(e.to_string()))?;
            let s = &output.summary;
            println!(
                "{:?} seed {}: {} ticks, {} events, gini {:.4}, digest {}",
                s.regime, s.seed, s.final_tick, s.events, s.gini, s.event_digest
            );
        }
        Command::Compare { a, b, seeds, out } => {
            if seeds.is_empty() {
                return Err(Failure::Usage("--seeds needs at least one seed".into()));
            }
            let config_a = load(&a)?;
            let config_b = load(&b)?;
            let report = compare_regimes(&config_a, &config_b, &seeds).map_err(|e| match e {
                ReportError::NoSeeds => Failure::Usage(e.to_string()),
                e => Failure::Runtime(e.to_string()),
            })?;
            write_report(&out, &report).map_err(|e| Failure::Runtime(e.to_string()))?;
            let t = &report.tally;
            println!(
                "{} seeds; gini slope a>b in {}, cantillon slope a<b in {}",
                report.rows.len(),
                t.gini_slope.a_higher,
                t.cantillon_slope.b_higher
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
