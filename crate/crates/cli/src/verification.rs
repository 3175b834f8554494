//! Sampling campaigns over the functional inequalities.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use srhlab_core::{Check, SuiteReport, VerifyContext};

use crate::config::ScenarioConfig;
use crate::diagnostics::format_float;
use crate::error::{CliError, CliResult};
use crate::run::write_json;

pub const DEFAULT_SAMPLES: usize = 100_000;
/// Largest accepted ratio between the EEP suprema of different `ε > 0`.
pub const EEP_UNIFORMITY_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub eps: f64,
    pub mass: f64,
    pub m1: f64,
    #[serde(flatten)]
    pub report: SuiteReport,
    /// Violation dumps, relative to the output directory.
    pub dumps: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Uniformity {
    pub eps: Vec<f64>,
    pub max: f64,
    pub min: f64,
    pub ratio: f64,
    pub within_factor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub seed: u64,
    pub n_samples: usize,
    pub suites: Vec<SuiteRow>,
    /// Spread of the EEP suprema over the positive `ε` of the sweep.
    pub eep_uniformity: Option<Uniformity>,
    pub violations: usize,
}

impl VerificationReport {
    pub fn suite(&self, eps: f64, check: Check) -> Option<&SuiteRow> {
        self.suites
            .iter()
            .find(|s| s.eps == eps && s.report.check == check)
    }
}

fn dump_name(check: Check, eps: f64, index: u64) -> PathBuf {
    PathBuf::from("violations").join(format!("{check}_eps_{eps}_{index}.json"))
}

/// Every check of the catalog with `n_samples` draws for each `ε` of the
/// sweep.
pub fn run_verification(cfg: &ScenarioConfig, n_samples: usize) -> CliResult<VerificationReport> {
    run_checks(cfg, n_samples, &Check::ALL)
}

/// As [`run_verification`] restricted to `checks`. Writes `constants.csv`,
/// `verify_report.json` and one JSON file per recorded violation under
/// `<output>/verify`.
pub fn run_checks(
    cfg: &ScenarioConfig,
    n_samples: usize,
    checks: &[Check],
) -> CliResult<VerificationReport> {
    if n_samples == 0 {
        return Err(CliError::Config("--samples: must be >= 1".into()));
    }
    let dir = cfg.output.join("verify");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut suites = Vec::new();
    for eps in cfg.eps_values() {
        let context = |what: &str| format!("{}: eps = {eps}: {what}", cfg.name);
        let params = cfg.sim_params(eps)?;
        let mass = match cfg.verify.mass {
            Some(m) => m,
            None => cfg.initial_state(&params)?.mass(&params),
        };
        let ctx = VerifyContext::new(&params, mass, cfg.verify.m1, cfg.seed)
            .map_err(|e| CliError::solver(context("verification setup"), e))?;
        for &check in checks {
            let report = ctx
                .run(check, n_samples)
                .map_err(|e| CliError::solver(context(check.name()), e))?;
            let mut dumps = Vec::new();
            for v in &report.records {
                let name = dump_name(check, eps, v.index);
                let path = dir.join(&name);
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
                }
                write_json(&path, v)?;
                dumps.push(name);
            }
            suites.push(SuiteRow {
                eps,
                mass: ctx.mass(),
                m1: ctx.m1,
                report,
                dumps,
            });
        }
    }

    let eep: Vec<(f64, f64)> = suites
        .iter()
        .filter(|s| s.report.check == Check::Eep && s.eps > 0.0)
        .map(|s| (s.eps, s.report.sup))
        .collect();
    let eep_uniformity = (eep.len() >= 2).then(|| {
        let max = eep.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let min = eep.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let ratio = max / min;
        Uniformity {
            eps: eep.iter().map(|e| e.0).collect(),
            max,
            min,
            ratio,
            within_factor: ratio < EEP_UNIFORMITY_FACTOR,
        }
    });

    let report = VerificationReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        n_samples,
        violations: suites.iter().map(|s| s.report.violations).sum(),
        suites,
        eep_uniformity,
    };
    write_constants(&dir.join("constants.csv"), &report)?;
    write_json(&dir.join("verify_report.json"), &report)?;
    Ok(report)
}

fn write_constants(path: &std::path::Path, report: &VerificationReport) -> CliResult<()> {
    let fail = |e: csv::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record([
        "eps",
        "check",
        "samples",
        "evaluated",
        "excluded",
        "sup",
        "sup_half",
        "doubling_drift",
        "violations",
    ])
    .map_err(fail)?;
    for s in &report.suites {
        let r = &s.report;
        w.write_record([
            format_float(s.eps),
            r.check.to_string(),
            r.samples.to_string(),
            r.evaluated.to_string(),
            r.excluded.to_string(),
            format_float(r.sup),
            format_float(r.sup_half),
            format_float(r.doubling_drift()),
            r.violations.to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
