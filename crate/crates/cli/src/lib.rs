//! Batch driver for the duplex industry network pipeline.

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

use std::path::Path;

pub use config::PipelineConfig;
pub use error::CliError;

/// Loads the configuration, takes the output directory lock and runs one
/// stage (or `all`).
pub fn run(stage: &str, config: Option<&Path>, overrides: &[String]) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(config, overrides)?;
    if stage != "simulate" {
        cfg.required("paths.market_edges", &cfg.paths.market_edges)?;
    }
    cfg.validate_strategies()?;
    let ws = manifest::Workspace::open(&cfg.output_dir())?;
    stages::run_stage(stage, &cfg, &ws)
}
