use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use cotrade_core::pipeline::{cmd_analyze, cmd_generate, cmd_infer, cmd_report, Outcome, PipelineConfig};
use cotrade_core::{Error, FdrMode, UniverseMode};

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;

/// Statistically validated co-trading networks from investor transactions.
#[derive(Parser)]
#[command(name = "cotrade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with ground truth.
    Generate {
        /// Scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate links, assemble networks and detect clusters.
    Infer(Flags),
    /// Cluster persistence, cross-security overlap, mature overlap and
    /// attribute expression.
    Analyze(Flags),
    /// Validation summaries and sorted p-value curves.
    Report(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    transactions: Option<PathBuf>,
    #[arg(long)]
    calendar: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    /// Minimum trading days in either window.
    #[arg(long)]
    min_days: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// step_up or literal.
    #[arg(long)]
    fdr_mode: Option<FdrMode>,
    /// intersection or full_window.
    #[arg(long)]
    universe: Option<UniverseMode>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Mature security ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    mature: Option<Vec<String>>,
    /// Last date covered by the data (YYYY-MM-DD).
    #[arg(long)]
    analysis_end: Option<NaiveDate>,
    /// Keep nominee-registered trades.
    #[arg(long)]
    include_nominee: bool,
    /// Skip attribute expression tests.
    #[arg(long)]
    no_expression: bool,
}

impl Flags {
    fn resolve(self) -> Result<PipelineConfig, Error> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { c.$field = v.into(); })*
            };
        }
        set!(theta => theta, min_days => min_active_days, alpha => alpha, fdr_mode => fdr_mode,
             universe => universe, trials => trials, seed => seed, out => out, workers => workers,
             mature => mature_securities);
        if self.transactions.is_some() {
            c.transactions = self.transactions;
        }
        if self.calendar.is_some() {
            c.calendar = self.calendar;
        }
        if self.attributes.is_some() {
            c.attributes = self.attributes;
        }
        if self.analysis_end.is_some() {
            c.analysis_end = self.analysis_end;
        }
        if self.include_nominee {
            c.exclude_nominee = false;
        }
        if self.no_expression {
            c.expression = false;
        }
        Ok(c)
    }
}

fn run(cmd: Command) -> Result<Outcome, Error> {
    match cmd {
        Command::Generate { scenario, out } => cmd_generate(&scenario, &out),
        Command::Infer(f) => cmd_infer(&f.resolve()?),
        Command::Analyze(f) => cmd_analyze(&f.resolve()?),
        Command::Report(f) => cmd_report(&f.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    match run(cli.command) {
        Ok(outcome) => {
            for n in outcome.notices {
                eprintln!("note: {n}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_DATA })
        }
    }
}
