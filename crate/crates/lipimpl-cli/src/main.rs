//! Batch front-end: load a run spec, execute its pipeline over the sweep,
//! and emit machine-readable result tables.
//!
//! Exit status: 0 when every certificate passed, 1 on a failed certificate,
//! 2 on a spec parse/validation error, 3 on numerical errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use lipimpl_cli::{run, spec};

#[derive(Parser)]
#[command(
    name = "lipimpl",
    version,
    about = "Certified implicit-function and switching-time pipelines"
)]
struct Args {
    /// Run specification (JSON, schema 1)
    #[arg(long)]
    spec: PathBuf,

    /// Output directory (default: the spec's output.path, then ./out)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Result file format (default: the spec's output.format, then csv)
    #[arg(long, value_enum)]
    format: Option<spec::Format>,

    /// Concurrent sweep workers
    #[arg(long)]
    workers: Option<usize>,

    /// Override the spec's seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LIPIMPL_LOG", "off"))
        .format_timestamp(None)
        .init();

    let args = Args::parse();
    let cli = run::Cli {
        spec: args.spec,
        out: args.out,
        format: args.format,
        workers: args.workers,
        seed: args.seed,
    };
    match run::run_all(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("spec error: {error}");
            ExitCode::from(2)
        }
    }
}
