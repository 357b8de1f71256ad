//! Experiment runner: configuration, studies, CSV tables and run manifests.

pub mod config;
pub mod error;
pub mod output;
pub mod plotdata;
pub mod studies;

use std::path::Path;
use std::time::Instant;

pub use config::RunConfig;
pub use error::{LabError, LabResult};
pub use output::{Check, StudyOutput, Table};
pub use studies::{run_study, STUDIES};

/// Studies of a run with where they were written.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub studies: Vec<StudyOutput>,
    pub manifest: std::path::PathBuf,
    pub seconds: f64,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.studies.iter().all(StudyOutput::passed)
    }
}

/// Runs `names` in order on a pool of `cfg.workers` threads and writes the
/// tables and manifest under `out`.
pub fn run(names: &[&str], cfg: &RunConfig, out: &Path) -> LabResult<RunOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| LabError::Usage(format!("cannot build thread pool: {e}")))?;
    let start = Instant::now();
    let studies = pool.install(|| names.iter().map(|n| run_study(n, cfg)).collect::<LabResult<Vec<_>>>())?;
    let seconds = start.elapsed().as_secs_f64();
    let echo = serde_json::to_value(cfg)?;
    let manifest = output::write_run(out, &echo, &studies, seconds)?;
    Ok(RunOutcome {
        studies,
        manifest,
        seconds,
    })
}
