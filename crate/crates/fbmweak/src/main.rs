use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fbmweak::{execute, Experiment, ExperimentConfig, RunError};

/// Run one fBm experiment and write `<experiment>_<seed>.csv` and
/// `<experiment>_<seed>.summary`.
#[derive(Debug, Parser)]
#[command(name = "fbmweak", version)]
struct Cli {
    experiment: Experiment,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed` from the file and the environment.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<bool, RunError> {
    let mut cfg = ExperimentConfig::load(&cli.config, std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    let (output, written) = execute(cli.experiment, &cfg)?;
    print!("{}", output.summary());
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(output.all_pass())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("fbmweak: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
