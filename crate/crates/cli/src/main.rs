//! `bugrepo`: build a DBMS bug repository and use it for testing.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bugrepo::campaigns::SeedFilter;
use bugrepo::harness::RiskLevel;
use bugrepo::pipeline::{self, PipelineConfig, PipelineError, Selection, StageReport};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bugrepo", version, about = "Mine DBMS bug reports into executable SQL test cases")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Corpus directory; overrides `corpus_dir` in the config.
    #[arg(long, global = true)]
    corpus_dir: Option<PathBuf>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    /// One JSON record per line.
    Records,
}

#[derive(Args, Clone, Default)]
struct Select {
    /// Only process this report id (repeatable).
    #[arg(long = "report")]
    reports: Vec<String>,
    /// Re-run records that are already past the stage.
    #[arg(long)]
    force: bool,
}

impl Select {
    fn selection(&self) -> Selection {
        Selection { ids: (!self.reports.is_empty()).then(|| self.reports.iter().cloned().collect::<BTreeSet<_>>()), force: self.force }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Collect new reports and refresh stale ones.
    Collect {
        /// A configured source name, or a directory of fixture payloads.
        #[arg(long)]
        source: Option<String>,
        /// Only pull reports modified at or after this time (RFC 3339).
        #[arg(long)]
        since: Option<DateTime<Utc>>,
        /// Collection timestamp (RFC 3339); defaults to the current time.
        #[arg(long)]
        now: Option<DateTime<Utc>>,
    },
    /// Recover PoC-related fragments from report bodies.
    Fragment(Select),
    /// Extract raw PoCs from fragments.
    Extract {
        #[command(flatten)]
        select: Select,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Adapt raw PoCs into executable test cases.
    Adapt {
        #[command(flatten)]
        select: Select,
        /// Backend to use for every record; by default the first backend of the record's DBMS.
        #[arg(long)]
        backend: Option<String>,
    },
    /// Export adapted cases as fuzzing seeds.
    Export {
        #[arg(long)]
        dbms: String,
        #[arg(long)]
        out: PathBuf,
        /// Keep only `bug` or `clean` expectations.
        #[arg(long)]
        expectation: Option<String>,
        /// Drop cases above this risk level (low, medium, high).
        #[arg(long)]
        max_risk: Option<String>,
        #[arg(long = "report")]
        reports: Vec<String>,
    },
    /// Replay fixed bugs on newer versions.
    Regress {
        #[command(flatten)]
        select: Select,
        #[arg(long)]
        dbms: String,
        /// Backends to replay on (repeatable); default all backends of the DBMS.
        #[arg(long = "backend")]
        backends: Vec<String>,
        /// Write findings as JSON lines here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay one DBMS's cases on a sibling DBMS.
    Cross {
        #[command(flatten)]
        select: Select,
        /// Origin DBMS of the cases.
        #[arg(long)]
        from: String,
        #[arg(long)]
        backend: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus statistics.
    Stats,
    /// Compare adaptation strategies on a sample.
    StrategyReport {
        #[arg(long)]
        sample: Option<PathBuf>,
        #[arg(long)]
        backend: Option<String>,
    },
    /// Run one SQL script on a backend.
    Exec {
        #[arg(long)]
        backend: String,
        script: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, PipelineError> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => {
            let cwd = std::env::current_dir().map_err(|e| PipelineError::Config(e.to_string()))?;
            PipelineConfig::parse("", &cwd)
        }
    }
}

fn run(cli: &Cli) -> Result<StageReport, PipelineError> {
    let cfg = load_config(cli.config.as_deref())?;
    let corpus = || cfg.corpus(cli.corpus_dir.as_deref());
    match &cli.command {
        Command::Collect { source, since, now } => pipeline::run_collect(&cfg, &corpus()?, source.as_deref(), now.unwrap_or_else(Utc::now), *since),
        Command::Fragment(s) => pipeline::run_fragment(&cfg, &corpus()?, &s.selection()),
        Command::Extract { select, jobs } => pipeline::run_extract(&cfg, &corpus()?, &select.selection(), *jobs),
        Command::Adapt { select, backend } => pipeline::run_adapt(&cfg, &corpus()?, &select.selection(), backend.as_deref()),
        Command::Export { dbms, out, expectation, max_risk, reports } => {
            let max_risk = match max_risk.as_deref().map(str::to_ascii_lowercase).as_deref() {
                None => None,
                Some("low") => Some(RiskLevel::Low),
                Some("medium") => Some(RiskLevel::Medium),
                Some("high") => Some(RiskLevel::High),
                Some(other) => return Err(PipelineError::Config(format!("unknown risk level `{other}`"))),
            };
            let filter = SeedFilter {
                expectation: expectation.clone(),
                report_ids: (!reports.is_empty()).then(|| reports.iter().cloned().collect()),
                max_risk,
            };
            pipeline::run_export(&corpus()?, dbms, out, &filter)
        }
        Command::Regress { select, dbms, backends, out } => pipeline::run_regress(&cfg, &corpus()?, &select.selection(), dbms, backends, out.as_deref()),
        Command::Cross { select, from, backend, out } => pipeline::run_cross(&cfg, &corpus()?, &select.selection(), from, backend, out.as_deref()),
        Command::Stats => pipeline::run_stats(&corpus()?),
        Command::StrategyReport { sample, backend } => pipeline::run_strategy_report(&cfg, sample.as_deref(), backend.as_deref()),
        Command::Exec { backend, script } => {
            let text = std::fs::read_to_string(script)
                .with_context(|| format!("reading {}", script.display()))
                .map_err(|e| PipelineError::Config(format!("{e:#}")))?;
            pipeline::run_exec(&cfg, backend, &text)
        }
    }
}

fn print_report(rep: &StageReport, format: Format) {
    match format {
        Format::Human => {
            print!("{}", rep.summary);
            println!("{}: {} processed, {} skipped, {} failed", rep.stage, rep.processed, rep.skipped, rep.failed.len());
            for (id, why) in &rep.failed {
                eprintln!("failed {id}: {why}");
            }
        }
        Format::Records => {
            for row in &rep.rows {
                println!("{row}");
            }
            for (id, why) in &rep.failed {
                println!("{}", serde_json::json!({ "failed": id, "reason": why }));
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(rep) => {
            print_report(&rep, cli.format);
            ExitCode::from(rep.exit_code() as u8)
        }
        Err(e) => {
            match cli.format {
                Format::Human => eprintln!("error: {e}"),
                Format::Records => println!("{}", serde_json::json!({ "error": e.to_string(), "exit_code": e.exit_code() })),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
