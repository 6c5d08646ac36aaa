//! `taxfund`: run the pipeline one stage at a time.
//!
//! Each stage reads the input CSVs from `--data-dir` and earlier stage
//! outputs from `--out`, and writes its own outputs plus a
//! `manifest.json` to `<out>/<stage>/`. Failures print one JSON object to
//! stderr and exit with status 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod error;
mod stages;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "taxfund", version, about = "Forecast assessments, estimate eligibility and simulate program cost")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Directory holding the input CSV files and, by default, policy.json
    #[arg(long, global = true, default_value = "data")]
    pub data_dir: PathBuf,
    /// Work directory; each stage writes to <out>/<stage>/
    #[arg(long, global = true, default_value = "work")]
    pub out: PathBuf,
    /// Master seed for every random stream [default: 1]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Policy file [default: <data-dir>/policy.json]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Use a single thread
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic dataset and the example policy to --data-dir
    Synth {
        #[arg(long, value_enum, default_value_t = Size::Full)]
        size: Size,
    },
    /// Load and validate the input files
    Ingest,
    /// Cluster complete assessment histories and extract trends
    Cluster {
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Changes at or below this magnitude count as unchanged
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = Metric::Jaccard)]
        metric: Metric,
    },
    /// Impute the survey and fit the income model
    TrainIncome {
        #[arg(long, value_enum, default_value_t = Features::RentAndHouse)]
        features: Features,
    },
    /// Assign program-area parcels to clusters and project their values
    Forecast {
        #[arg(long, default_value_t = 7)]
        horizon: usize,
        /// [default: the policy's config year]
        #[arg(long)]
        base_year: Option<i32>,
        #[arg(long, value_enum, default_value_t = Method::ClusterTrend)]
        method: Method,
    },
    /// Evaluate every program-area parcel against the four criteria
    Eligibility {
        #[arg(long, value_enum, default_value_t = Liens::SampledRate)]
        lien_mode: Liens,
        #[arg(long, value_enum, default_value_t = Incomes::Liberal)]
        income_mode: Incomes,
        #[arg(long)]
        exclude_washington_park: bool,
    },
    /// Estimate program cost for a scenario file
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's replicate count
        #[arg(long)]
        replicates: Option<usize>,
        /// Write per-household rows for the first N replicates
        #[arg(long, default_value_t = 0)]
        audit: usize,
    },
    /// Serve the JSON API over finished stage outputs
    Serve {
        /// The bind address comes from TAXFUND_BIND_ADDR [default: 127.0.0.1]
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Scenario runs above this many replicates are queued
        #[arg(long, default_value_t = 2000)]
        sync_cap: usize,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Size {
    Small,
    Full,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Jaccard,
    Hamming,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Features {
    RentAndHouse,
    RentOnly,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClusterTrend,
    LegacyFlat,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Liens {
    ObservedOnly,
    SampledRate,
    Ignore,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Incomes {
    Liberal,
    Strict,
}

/// The command line without flags that only affect speed, so manifests
/// match across thread counts.
fn recorded_command() -> Vec<String> {
    let mut out = Vec::new();
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match a.as_str() {
            "--deterministic" => {}
            "--jobs" => {
                args.next();
            }
            s if s.starts_with("--jobs=") => {}
            _ => out.push(a),
        }
    }
    out
}

fn configure_threads(g: &Global) -> Result<(), CliError> {
    let threads = if g.deterministic { Some(1) } else { g.jobs };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::new("invalid_argument", "--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new("internal", e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    configure_threads(&cli.global)?;
    let ctx = stages::Ctx::new(cli.global, recorded_command());
    match cli.command {
        Command::Synth { size } => stages::synth(&ctx, size),
        Command::Ingest => stages::ingest(&ctx),
        Command::Cluster { k, epsilon, metric } => stages::cluster(&ctx, k, epsilon, metric),
        Command::TrainIncome { features } => stages::train_income(&ctx, features),
        Command::Forecast { horizon, base_year, method } => stages::forecast(&ctx, horizon, base_year, method),
        Command::Eligibility { lien_mode, income_mode, exclude_washington_park } => {
            stages::eligibility(&ctx, lien_mode, income_mode, !exclude_washington_park)
        }
        Command::Simulate { scenario, replicates, audit } => stages::simulate(&ctx, &scenario, replicates, audit),
        Command::Serve { port, sync_cap } => stages::serve(&ctx, port, sync_cap),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::parse_from(["taxfund", "cluster", "--k", "3", "--seed", "9", "--out", "w"]);
        assert_eq!(cli.global.seed, Some(9));
        assert!(matches!(cli.command, Command::Cluster { k: 3, .. }));
        let cli = Cli::parse_from(["taxfund", "--data-dir", "d", "simulate", "--scenario", "s.json", "--audit", "2"]);
        assert_eq!(cli.global.data_dir, PathBuf::from("d"));
        assert!(matches!(cli.command, Command::Simulate { audit: 2, .. }));
    }
}
