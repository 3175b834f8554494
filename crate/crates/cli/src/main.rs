use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use srhlab_cli::verification::DEFAULT_SAMPLES;
use srhlab_cli::{
    load_config, read_diagnostics_file, run_checks, run_scenario, scenario_equilibrium, CliError,
    CliResult, RunReport, ScenarioConfig,
};
use srhlab_core::{fit_decay_rate, Check};

#[derive(Parser)]
#[command(
    name = "srhlab",
    version,
    about = "Trap-assisted drift-diffusion-recombination runs and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the equilibrium of a scenario as JSON.
    Equilibrium {
        config: PathBuf,
        /// Defaults to `params.eps`.
        #[arg(long)]
        eps: Option<f64>,
        /// Conserved charge; defaults to that of the initial data.
        #[arg(long, allow_hyphen_values = true)]
        mass: Option<f64>,
    },
    /// Run a scenario at a single ε.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run every ε of the scenario's sweep.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample the functional inequalities.
    Verify {
        config: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        /// Restrict to these checks (repeatable); all by default.
        #[arg(long = "check")]
        checks: Vec<Check>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit the exponential decay rate of a diagnostics CSV.
    Fit { csv: PathBuf },
}

fn load(path: &Path, output: Option<PathBuf>) -> CliResult<ScenarioConfig> {
    let mut cfg = load_config(path)?;
    if let Some(dir) = output {
        cfg.output = dir;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    // a closed pipe (`| head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn summarize(report: &RunReport, cfg: &ScenarioConfig) {
    for r in &report.runs {
        let fit = match (&r.fit, &r.fit_error) {
            (Some(f), _) => format!(
                "K = {:.6} (r2 = {:.6}, {:.1} decades)",
                f.k, f.r2, f.decades
            ),
            (None, Some(e)) => format!("no fit: {e}"),
            (None, None) => "no fit".to_string(),
        };
        eprintln!(
            "eps = {:<6} {fit}; drift {:.1e}; violations {}",
            r.eps,
            r.summary.max_mass_drift,
            r.summary.violation_count()
        );
    }
    for row in &report.limit_table {
        eprintln!("limit gap eps = {:<6} {:.6e}", row.eps, row.sup_l1_gap);
    }
    if report.already_converged {
        eprintln!("already converged: the initial data sit at the equilibrium");
    }
    eprintln!("wrote {}", cfg.output.join("report.json").display());
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Equilibrium { config, eps, mass } => {
            let cfg = load(&config, None)?;
            let eq = scenario_equilibrium(&cfg, eps.unwrap_or(cfg.eps), mass)?;
            print_json(&eq);
            Ok(())
        }
        Command::Simulate {
            config,
            eps,
            output,
        } => {
            let mut cfg = load(&config, output)?;
            if let Some(e) = eps {
                if !(e >= 0.0 && e <= cfg.eps0) {
                    return Err(CliError::Config(format!(
                        "--eps: must lie in [0, {}], got {e}",
                        cfg.eps0
                    )));
                }
                cfg.eps = e;
            }
            cfg.eps_sweep = Some(vec![cfg.eps]);
            finish(run_scenario(&cfg)?, &cfg)
        }
        Command::Sweep { config, output } => {
            let cfg = load(&config, output)?;
            finish(run_scenario(&cfg)?, &cfg)
        }
        Command::Verify {
            config,
            samples,
            checks,
            output,
        } => {
            let cfg = load(&config, output)?;
            let checks = if checks.is_empty() {
                Check::ALL.to_vec()
            } else {
                checks
            };
            let report = run_checks(&cfg, samples, &checks)?;
            for s in &report.suites {
                let r = &s.report;
                eprintln!(
                    "eps = {:<6} {:<20} sup {:.6e} drift {:+.3} excluded {} violations {}",
                    s.eps,
                    r.check.name(),
                    r.sup,
                    r.doubling_drift(),
                    r.excluded,
                    r.violations
                );
            }
            if let Some(u) = &report.eep_uniformity {
                eprintln!(
                    "eep suprema over eps {:?}: max/min = {:.3} ({})",
                    u.eps,
                    u.ratio,
                    if u.within_factor {
                        "uniform"
                    } else {
                        "NOT uniform"
                    }
                );
            }
            eprintln!("wrote {}", cfg.output.join("verify").display());
            if report.violations > 0 {
                return Err(CliError::Violations(report.violations));
            }
            Ok(())
        }
        Command::Fit { csv } => {
            let rows = read_diagnostics_file(&csv)?;
            let fit = fit_decay_rate(&rows)
                .map_err(|e| CliError::solver(csv.display().to_string(), e))?;
            print_json(&fit);
            Ok(())
        }
    }
}

fn finish(report: RunReport, cfg: &ScenarioConfig) -> CliResult<()> {
    summarize(&report, cfg);
    if report.violations > 0 {
        return Err(CliError::Violations(report.violations));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
