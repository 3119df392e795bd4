use incivility::diagnostics::gradient_suite;
use incivility::nn::gradcheck::GradCheckReport;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::io::{ensure_out_dir, write_json, write_manifest};

#[derive(Debug, Clone, Serialize)]
struct GradCheckOutput<'a> {
    seed: u64,
    config_digest: String,
    passed: bool,
    reports: &'a [GradCheckReport],
}

/// Runs the layer and model gradient checks and writes `gradcheck.json`.
/// Fails when any check fails, after writing the report.
pub fn cmd_gradcheck(cfg: &PipelineConfig) -> Result<Vec<GradCheckReport>> {
    let reports = gradient_suite(cfg.seed)?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    ensure_out_dir(cfg)?;
    let path = cfg.out("gradcheck.json");
    write_json(
        &path,
        &GradCheckOutput {
            seed: cfg.seed,
            config_digest: cfg.digest(),
            passed: failed.is_empty(),
            reports: &reports,
        },
    )?;
    write_manifest(cfg, "gradcheck", &[path])?;
    if !failed.is_empty() {
        return Err(CliError::GradCheckFailed(failed.join(", ")));
    }
    Ok(reports)
}
