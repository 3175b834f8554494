//! Scenario execution and ε-sweeps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srhlab_core::mesh::l1_distance;
use srhlab_core::{
    fit_decay_rate, relative_entropy, simulate_with, solve_equilibrium, DecayFit, EquilibriumState,
    Error, InvariantSummary, State,
};

use crate::config::ScenarioConfig;
use crate::diagnostics::write_diagnostics_file;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Distances {
    pub n: f64,
    pub p: f64,
    pub ntr: f64,
}

/// Outcome of one trajectory of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRun {
    pub eps: f64,
    pub srh: bool,
    pub mass: f64,
    pub n_star: f64,
    pub p_star: f64,
    pub ntr_inf: f64,
    pub fit: Option<DecayFit>,
    /// Why there is no fit, e.g. a relative entropy already at round-off.
    pub fit_error: Option<String>,
    pub final_l1: L1Distances,
    pub final_e_rel: f64,
    pub n_rows: usize,
    pub summary: InvariantSummary,
    /// Diagnostics file, relative to the output directory.
    pub csv: PathBuf,
}

/// `sup_t ‖n_ε - n_0‖₁ + ‖p_ε - p_0‖₁` over the common outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub eps: f64,
    pub sup_l1_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub runs: Vec<EpsRun>,
    /// Filled when the sweep contains `ε = 0` and at least one `ε > 0`.
    pub limit_table: Vec<LimitRow>,
    /// Every run started at round-off distance from its equilibrium.
    pub already_converged: bool,
    pub violations: usize,
}

impl RunReport {
    pub fn run(&self, eps: f64) -> Option<&EpsRun> {
        self.runs.iter().find(|r| r.eps == eps)
    }

    /// Largest over smallest fitted rate; `None` unless every run has a fit.
    pub fn rate_spread(&self) -> Option<f64> {
        let ks: Option<Vec<f64>> = self.runs.iter().map(|r| r.fit.map(|f| f.k)).collect();
        let ks = ks?;
        let max = ks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = ks.iter().copied().fold(f64::INFINITY, f64::min);
        (min > 0.0).then(|| max / min)
    }
}

pub fn diagnostics_file_name(eps: f64) -> PathBuf {
    PathBuf::from(format!("diagnostics_eps_{eps}.csv"))
}

struct Outcome {
    run: EpsRun,
    snapshots: Vec<State>,
}

fn run_one(cfg: &ScenarioConfig, eps: f64, keep_snapshots: bool, dir: &Path) -> CliResult<Outcome> {
    let context = |what: &str| format!("{}: eps = {eps}: {what}", cfg.name);
    let params = cfg.sim_params(eps)?;
    let start = cfg.initial_state(&params)?;
    let mut snapshots = Vec::new();
    let mut k = 0usize;
    let every = cfg.stepper.output_every;
    let traj = simulate_with(&start, &params, &cfg.stepper, |s| {
        k += 1;
        if keep_snapshots && k.is_multiple_of(every) {
            snapshots.push(s.clone());
        }
    })
    .map_err(|e| CliError::solver(context("simulation"), e))?;

    let csv = diagnostics_file_name(eps);
    write_diagnostics_file(&dir.join(&csv), &traj.rows)?;

    let (fit, fit_error) = match fit_decay_rate(&traj.rows) {
        Ok(f) => (Some(f), None),
        Err(e @ Error::WindowTooShort { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(CliError::solver(context("decay fit"), e)),
    };
    let eq = &traj.equilibrium;
    let last = &traj.final_state;
    let l1 = |a, b| l1_distance(a, b).map_err(|e| CliError::solver(context("final distances"), e));
    let final_l1 = L1Distances {
        n: l1(&last.n, &eq.n_inf)?,
        p: l1(&last.p, &eq.p_inf)?,
        ntr: l1(&last.ntr, &eq.ntr_field())?,
    };
    let final_e_rel = relative_entropy(last, eq, &params)
        .map_err(|e| CliError::solver(context("relative entropy"), e))?;
    Ok(Outcome {
        run: EpsRun {
            eps,
            srh: params.is_srh(),
            mass: eq.mass,
            n_star: eq.n_star,
            p_star: eq.p_star,
            ntr_inf: eq.ntr_inf,
            fit,
            fit_error,
            final_l1,
            final_e_rel,
            n_rows: traj.rows.len(),
            summary: traj.summary,
            csv,
        },
        snapshots,
    })
}

/// Runs every `ε` of the sweep (concurrently), writes one diagnostics CSV per
/// `ε` and `report.json` into `cfg.output`, and returns the report.
pub fn run_scenario(cfg: &ScenarioConfig) -> CliResult<RunReport> {
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let eps_values = cfg.eps_values();
    let want_limit = eps_values.contains(&0.0) && eps_values.iter().any(|&e| e > 0.0);

    let outcomes: Vec<CliResult<Outcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = eps_values
            .iter()
            .map(|&eps| {
                let dir = &dir;
                scope.spawn(move || run_one(cfg, eps, want_limit, dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut limit_table = Vec::new();
    if want_limit {
        let reference = outcomes
            .iter()
            .find(|o| o.run.eps == 0.0)
            .expect("sweep contains eps = 0");
        for o in outcomes.iter().filter(|o| o.run.eps > 0.0) {
            let mut sup = 0.0f64;
            for (a, b) in o.snapshots.iter().zip(&reference.snapshots) {
                let gap = l1_distance(&a.n, &b.n).and_then(|x| Ok(x + l1_distance(&a.p, &b.p)?));
                let gap =
                    gap.map_err(|e| CliError::solver(format!("{}: limit table", cfg.name), e))?;
                sup = sup.max(gap);
            }
            limit_table.push(LimitRow {
                eps: o.run.eps,
                sup_l1_gap: sup,
            });
        }
    }

    let runs: Vec<EpsRun> = outcomes.into_iter().map(|o| o.run).collect();
    let report = RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        already_converged: runs.iter().all(|r| r.fit.is_none()),
        violations: runs.iter().map(|r| r.summary.violation_count()).sum(),
        runs,
        limit_table,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

/// Equilibrium of the scenario at `eps`; the charge defaults to that of the
/// initial data.
pub fn scenario_equilibrium(
    cfg: &ScenarioConfig,
    eps: f64,
    mass: Option<f64>,
) -> CliResult<EquilibriumState> {
    let params = cfg.sim_params(eps)?;
    let mass = match mass {
        Some(m) => m,
        None => cfg.initial_state(&params)?.mass(&params),
    };
    solve_equilibrium(&params, mass)
        .map_err(|e| CliError::solver(format!("{}: equilibrium", cfg.name), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
