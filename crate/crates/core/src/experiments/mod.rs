//! Scenario drivers that turn a configuration into a report with verdicts.

pub mod config;
pub mod plot;
pub mod report;
mod scenarios;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ScenarioConfig, ScenarioKind, SceneKind};
pub use plot::{emit_plot_data, PlotKind};
pub use report::{Report, StageFailure, Table, Threshold, Verdict};
pub use scenarios::{build_mesh, build_scene, Scene};

use crate::error::{Error, Result};

/// Runs one scenario. Stage errors are recorded in the report, never returned.
pub fn run_scenario(cfg: &ScenarioConfig) -> Report {
    let mut report = Report::new(cfg.scenario.name(), cfg.seed, cfg.echo());
    let start = Instant::now();
    let outcome = match cfg.validate() {
        Err(msg) => Err(Error::InvalidArgument(msg)),
        Ok(()) => rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))
            .and_then(|pool| pool.install(|| scenarios::dispatch(cfg, &mut report))),
    };
    if let Err(e) = outcome {
        let (stage, message) = match e {
            Error::Stage { stage, source } => (stage, source.to_string()),
            other => ("setup".to_string(), other.to_string()),
        };
        log::error!("{}: stage `{stage}` failed: {message}", cfg.scenario);
        report.verdict(&format!("stage:{stage}"), f64::NAN, Threshold::Equals(0.0));
        report.failures.push(StageFailure { stage, message });
    }
    report.timings.insert("total".into(), start.elapsed().as_secs_f64());
    report
}

/// Runs a scenario and writes its report into `out`, returning the JSON path.
pub fn run_and_write(cfg: &ScenarioConfig, out: &Path) -> Result<(Report, PathBuf)> {
    let report = run_scenario(cfg);
    let path = report.write(out)?;
    Ok((report, path))
}
