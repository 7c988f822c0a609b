mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use error::CliError;
use output::{Format, OutputDir};

/// Interval costs and cost-optimal control charts for compound-Poisson
/// mixture shifts.
#[derive(Parser)]
#[command(name = "mixchart", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form interval cost with a series cross-check.
    Moments(Common),
    /// Monte Carlo estimate of the interval cost.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write every path's value to paths.csv.
        #[arg(long)]
        per_path: bool,
    },
    /// Markov-chain model of one chart design.
    Chart {
        #[command(flatten)]
        common: Common,
        /// Also simulate the chart and compare.
        #[arg(long)]
        simulate: bool,
    },
    /// Grid search for the cheapest design.
    Optimize(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override `numerics.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    threads: usize,
    format: Format,
    outputs: &'a [String],
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Moments(c) => ("moments", c),
        Command::Simulate { common, .. } => ("simulate", common),
        Command::Chart { common, .. } => ("chart", common),
        Command::Optimize(c) => ("optimize", c),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let cfg = RunConfig::load(&common.config)?.resolve(common.seed)?;
    let mut out = OutputDir::create(&common.out, common.format)?;
    out.json("config.resolved.json", &cfg)?;

    let outcome = match &cli.command {
        Command::Moments(_) => commands::moments(&cfg, &mut out),
        Command::Simulate { per_path, .. } => commands::simulate(&cfg, &mut out, *per_path),
        Command::Chart { simulate, .. } => commands::chart(&cfg, &mut out, *simulate),
        Command::Optimize(_) => commands::optimize(&cfg, &mut out),
    };

    let mut outputs = out.written().to_vec();
    outputs.push("manifest.json".into());
    let manifest = Manifest {
        tool: "mixchart",
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        seed: cfg.numerics.seed,
        threads: rayon::current_num_threads(),
        format: common.format,
        outputs: &outputs,
        exit_code: outcome.as_ref().map_or_else(|e| e.exit_code(), |_| 0),
        error: outcome.as_ref().err().map(|e| e.to_string()),
    };
    out.json("manifest.json", &manifest)?;
    println!("{}", outcome?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
