//! `parplan` command-line front end: planning baselines, the participatory
//! pipeline, ablations, run comparison, sweeps and SVG map export.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

pub mod compare;
pub mod config;
pub mod run;
pub mod svg;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use parplan::discussion::Ablation;

pub use config::{parse_seeds, RunConfig};

/// Failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Runtime(e) if f.alternate() => write!(f, "{e:#}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "parplan", version, about = "Participatory land-use planning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn verbose(&self) -> bool {
        match &self.command {
            Command::Plan(a) | Command::Simulate(a) => a.verbose,
            Command::Ablate { run, .. } | Command::SweepRounds { run, .. } => run.verbose,
            Command::Compare { verbose, .. } | Command::ExportSvg { verbose, .. } => *verbose,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one planner per seed and score the plans.
    Plan(RunArgs),
    /// Run the full participatory pipeline per seed.
    Simulate(RunArgs),
    /// Run the pipeline under an ablation.
    Ablate {
        #[arg(long, value_parser = parse_ablation)]
        mode: Ablation,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Merge run directories into one table, marking best and second best.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        verbose: bool,
    },
    /// Draw a plan as an SVG map.
    ExportSvg {
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        verbose: bool,
    },
    /// Simulate for several discussion lengths and tabulate the means.
    SweepRounds {
        /// Comma-separated round counts.
        #[arg(long = "values", default_value = "1,2,3,4")]
        values: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse()
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Region GeoJSON.
    #[arg(long)]
    pub region: PathBuf,
    /// Demographic spec JSON; a built-in synthetic mix when absent.
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    /// Planner name, or "participatory" (initial plan from the planner agent).
    #[arg(long)]
    pub method: Option<String>,
    /// rule | scripted | remote
    #[arg(long, default_value = "rule")]
    pub backend: String,
    /// JSON file with backend settings (endpoint, model, retries, ...).
    #[arg(long)]
    pub backend_config: Option<PathBuf>,
    /// Transcript to replay with the scripted backend.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Save every backend exchange to this transcript file.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long)]
    pub rounds: Option<u32>,
    #[arg(long)]
    pub speakers: Option<u32>,
    /// Seeds as a list and/or ranges, e.g. "1,2,7" or "1-5".
    #[arg(long, default_value = "1-5")]
    pub seeds: String,
    /// Number of residents (overrides the demographic spec).
    #[arg(long)]
    pub residents: Option<u32>,
    /// Run seeds concurrently.
    #[arg(long)]
    pub parallel_seeds: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub verbose: bool,
}

pub fn init_logging(verbose: bool) {
    let level = if verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan(args) => {
            let cfg = RunConfig::from_args(&args, run::Mode::Plan, Ablation::None)?;
            run::execute(&cfg).map(|_| ())
        }
        Command::Simulate(args) => {
            let cfg = RunConfig::from_args(&args, run::Mode::Simulate, Ablation::None)?;
            run::execute(&cfg).map(|_| ())
        }
        Command::Ablate { mode, run: args } => {
            let cfg = RunConfig::from_args(&args, run::Mode::Simulate, mode)?;
            run::execute(&cfg).map(|_| ())
        }
        Command::SweepRounds { values, run: args } => {
            let rounds = config::parse_rounds(&values)?;
            let cfg = RunConfig::from_args(&args, run::Mode::Simulate, Ablation::None)?;
            run::sweep_rounds(&cfg, &rounds).map(|_| ())
        }
        Command::Compare { runs, out, .. } => {
            let table = compare::compare(&runs).map_err(CliError::Runtime)?;
            print!("{}", table.render_text());
            if let Some(path) = out {
                table.write_csv(&path).map_err(CliError::Runtime)?;
            }
            Ok(())
        }
        Command::ExportSvg { region, plan, out, .. } => {
            let svg = svg::export(&region, &plan).map_err(CliError::Runtime)?;
            std::fs::write(&out, svg)
                .map_err(|e| CliError::Runtime(anyhow::anyhow!("writing {}: {e}", out.display())))
        }
    }
}
