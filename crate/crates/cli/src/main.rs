use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gdpx::{Errors, InputPaths, RunConfig};
use gdpx_core::classifier::HeldBeforeRule;
use gdpx_core::features::DEFAULT_OTHERS_THRESHOLD;
use gdpx_core::flightdata::{Epoch, DEFAULT_TAXI_IN_MIN};
use gdpx_core::pipeline::fit::FitConfig;
use gdpx_core::regression::default_lambda_grid;
use gdpx_core::synth::{generate_scenario, ScenarioConfig};

/// Excess-delay measurement and explanation for ground delay programs.
#[derive(Parser)]
#[command(name = "gdpx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario with ground truth.
    Synth(SynthArgs),
    /// Classify flights against every program.
    Classify(StageArgs),
    /// Build queueing diagrams and excess delay per program.
    Measure(StageArgs),
    /// Assemble the per-program feature table.
    Features(StageArgs),
    /// Fit OLS, ridge and lasso on features.csv.
    Fit(StageArgs),
    /// Rebuild summary.json from the artifacts in --out.
    Report(StageArgs),
    /// Run every stage.
    Run(StageArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured number of days.
    #[arg(long)]
    days: Option<u32>,
}

#[derive(Args)]
struct StageArgs {
    /// Directory holding flights.csv, quarters.csv and advisories.csv.
    #[arg(long, default_value = ".")]
    data: PathBuf,
    #[arg(long)]
    flights: Option<PathBuf>,
    #[arg(long)]
    quarters: Option<PathBuf>,
    #[arg(long)]
    advisories: Option<PathBuf>,
    /// CSV with `raw,cause` rows mapping advisory cause text to cause tokens.
    #[arg(long)]
    cause_lookup: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Day all timestamps are counted from (YYYY-MM-DD).
    #[arg(long, default_value_t = Epoch::default())]
    epoch: Epoch,
    #[arg(long, default_value_t = DEFAULT_TAXI_IN_MIN)]
    taxi_in_min: i64,
    /// Reference time for flights already held when the program was issued.
    #[arg(long, value_enum, default_value = "release")]
    held_before: HeldBefore,
    /// Airports with fewer programs than this share the apt_others dummy.
    #[arg(long, default_value_t = DEFAULT_OTHERS_THRESHOLD)]
    others_threshold: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Comma-separated penalties; a log-spaced default grid otherwise.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20)]
    perm_repeats: usize,
    /// Render one queueing diagram per program into <out>/svg/.
    #[arg(long)]
    svg: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum HeldBefore {
    Release,
    Start,
}

impl StageArgs {
    fn into_config(self) -> RunConfig {
        let mut inputs = InputPaths::in_dir(&self.data);
        if let Some(p) = self.flights {
            inputs.flights = p;
        }
        if let Some(p) = self.quarters {
            inputs.quarters = p;
        }
        if let Some(p) = self.advisories {
            inputs.advisories = p;
        }
        inputs.cause_lookup = self.cause_lookup;
        RunConfig {
            inputs,
            out: self.out,
            epoch: self.epoch,
            taxi_in_min: self.taxi_in_min,
            held_before: match self.held_before {
                HeldBefore::Release => HeldBeforeRule::BeforeRelease,
                HeldBefore::Start => HeldBeforeRule::BeforeStart,
            },
            others_threshold: self.others_threshold,
            fit: FitConfig {
                test_fraction: self.test_fraction,
                folds: self.folds,
                lambda_grid: self.lambda_grid.unwrap_or_else(default_lambda_grid),
                perm_repeats: self.perm_repeats,
                seed: self.seed,
            },
            svg: self.svg,
        }
    }
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let mut cfg: ScenarioConfig = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(days) = args.days {
        cfg.days = days;
    }
    let scenario = generate_scenario(&cfg)?;
    scenario.write_to(&args.out, &cfg.epoch)?;
    log::info!(
        "wrote {} flights, {} programs to {}",
        scenario.flights.len(),
        scenario.truth.programs.len(),
        args.out.display()
    );
    Ok(())
}

fn finish(errors: Errors) -> ExitCode {
    for e in &errors.0 {
        eprintln!("error: {e}");
    }
    if errors.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("GDPX_LOG", "warn")).init();
    let cli = Cli::parse();
    let stage = |args: StageArgs, f: fn(&RunConfig) -> Errors| finish(f(&args.into_config()));
    match cli.command {
        Command::Synth(args) => match synth(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: synth: {e:#}");
                ExitCode::FAILURE
            }
        },
        Command::Classify(a) => stage(a, gdpx::classify),
        Command::Measure(a) => stage(a, gdpx::measure),
        Command::Features(a) => stage(a, gdpx::features),
        Command::Fit(a) => stage(a, gdpx::fit),
        Command::Report(a) => stage(a, gdpx::report),
        Command::Run(a) => stage(a, gdpx::run_pipeline),
    }
}
