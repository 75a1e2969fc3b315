use std::process::ExitCode;

use clap::Parser;
use nrep::cli::{error_json, run_with_workers, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (manifest, out_dir, workers) = Cli::parse().into_manifest();
    match run_with_workers(&manifest, &out_dir, workers) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
