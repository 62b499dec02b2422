use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Duplex (market + innovation) industry network pipeline.
///
/// Every stage writes CSV artifacts into its own directory under
/// `paths.output` together with a `manifest.txt` of parameters and sha256
/// hashes; `<output>/manifest.txt` aggregates all stages.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
#[derive(Parser, Debug)]
#[command(name = "induplex", version)]
struct Cli {
    /// TOML configuration file with [paths], [ingest], [network], [metrics],
    /// [spill], [panel], [estimate], [simulate] sections and [[groups]].
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration value, e.g. `--set spill.threshold=0.1`.
    /// Values are TOML literals; may be repeated.
    #[arg(short = 's', long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse edgelists, concordances, events and auxiliary data into harmonized inputs.
    Ingest,
    /// Build both network layers: flow matrices, input/output shares and node sizes.
    Build,
    /// Centralities, network statistics, size rankings, cosine similarity, filtered edges.
    Metrics,
    /// Thresholded links and spillover measures.
    Spill,
    /// Assemble and transform the industry x period panel.
    Panel,
    /// Run the configured regression layout on the panel and each group.
    Estimate,
    /// Generate synthetic pipeline inputs or run a Monte Carlo study.
    Simulate,
    /// Format estimation results as tables.
    Report,
    /// ingest, build, metrics, spill, panel, estimate and report in order.
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stage = match cli.command {
        Command::Ingest => "ingest",
        Command::Build => "build",
        Command::Metrics => "metrics",
        Command::Spill => "spill",
        Command::Panel => "panel",
        Command::Estimate => "estimate",
        Command::Simulate => "simulate",
        Command::Report => "report",
        Command::All => "all",
    };
    match induplex_cli::run(stage, cli.config.as_deref(), &cli.overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("induplex: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
