//! Library behind the `qss` binary: config parsing, run reports, sweeps and
//! the validation command.

pub mod error;
pub mod kv;
pub mod numfmt;
pub mod run;
pub mod sweep;

use std::fs;
use std::path::Path;

use qss_core::par::Execution;
use qss_core::validation::{run_validation, Formulas, GridDensity, ValidationReport};

pub use error::{CliError, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))
}

/// `qss run`: the JSON report for the config at `path`.
pub fn cmd_run(path: &Path, tolerance: Option<f64>) -> Result<String> {
    let config = run::RunConfig::parse(&read(path)?)?;
    let report = run::execute(&config, tolerance)?;
    Ok(run::to_json(&report))
}

/// `qss sweep`: writes the CSV to `out`. `workers` bounds the thread count.
pub fn cmd_sweep(spec_path: &Path, out: &Path, workers: Option<usize>) -> Result<sweep::SweepOutput> {
    let spec = sweep::SweepSpec::parse(&read(spec_path)?)?;
    let result = with_workers(workers, || sweep::run_sweep(&spec, Execution::Parallel))?;
    fs::write(out, &result.csv).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    Ok(result)
}

/// `qss validate`.
pub fn cmd_validate(grid: GridDensity) -> ValidationReport {
    run_validation(grid, &Formulas::default(), Execution::Parallel)
}

#[cfg(feature = "parallel")]
fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Validation(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn with_workers<R: Send>(_workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}
