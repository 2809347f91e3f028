use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use climecon_cli::{run_file, Stage};

/// Climate and regional growth econometrics, one pipeline stage per call.
#[derive(Debug, Parser)]
#[command(name = "climecon", version)]
struct Args {
    /// Stage to run.
    #[arg(value_enum)]
    stage: Stage,
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Worker threads; overrides the config value.
    #[arg(short, long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run_file(args.stage, &args.config, args.threads) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("climecon {}: {e}", args.stage.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
