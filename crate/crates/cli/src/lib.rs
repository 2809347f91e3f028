//! Stage runner behind the `climecon` binary.

pub mod config;
pub mod output;
pub mod plot;
pub mod stages;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use config::{RunConfig, Stage};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Validates, runs `stage` on a pool of `threads` workers (config value if
/// `None`, else 1) and commits outputs plus manifest.
pub fn run_stage(stage: Stage, config: &RunConfig, threads: Option<usize>) -> Result<(), CliError> {
    let mut config = config.clone();
    if threads.is_some() {
        config.threads = threads;
    }
    config.validate(stage)?;
    stages::validate_options(stage, &config)?;
    let threads = config.threads.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let inputs = output::hash_inputs(&config)?;
    let outputs = pool.install(|| stages::run(stage, &config))?;
    let wall = clock.elapsed().as_secs_f64();
    log::info!("{} finished in {wall:.2}s", stage.name());
    output::commit(stage, &config, threads, inputs, &outputs, started_at, wall)
}

/// Loads the config at `path` and runs `stage`.
pub fn run_file(stage: Stage, path: &Path, threads: Option<usize>) -> Result<(), CliError> {
    run_stage(stage, &RunConfig::load(path)?, threads)
}
