//! Batch experiments for `fbmweak-core`: configuration, parallel Monte
//! Carlo ensembles, CSV tables and pass/fail summaries.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::PathBuf;

pub use config::ExperimentConfig;
pub use error::RunError;
pub use experiments::{run_experiment, Experiment};
pub use report::{emit_report, Check, ExperimentOutput, Table};

/// Run `exp` on a pool of `cfg.threads` workers (all cores when 0) and
/// write its files to `cfg.output_dir`.
///
/// A numerical failure still produces files: a header-only CSV and a
/// summary with the failing check `numerical_failure`.
pub fn execute(
    exp: Experiment,
    cfg: &ExperimentConfig,
) -> Result<(ExperimentOutput, Vec<PathBuf>), RunError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| RunError::Usage(format!("cannot start {} threads: {e}", cfg.threads)))?;
    let output = match pool.install(|| run_experiment(exp, cfg)) {
        Ok(out) => out,
        Err(RunError::Numerical(e)) => {
            eprintln!("{exp}: numerical failure: {e}");
            let mut out = ExperimentOutput::new(Table::new(exp.header()));
            out.checks.push(Check {
                name: "numerical_failure".into(),
                pass: false,
                value: f64::NAN,
                threshold: 0.0,
            });
            out
        }
        Err(e) => return Err(e),
    };
    let written = emit_report(&cfg.output_dir, exp.name(), cfg.seed, &output)?;
    Ok((output, written))
}
