//! Scenario files, ε-sweeps, verification campaigns and their reports.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod run;
pub mod verification;

pub use config::{load_config, parse_config, parse_config_named, ScenarioConfig, VerifySettings};
pub use diagnostics::{
    read_diagnostics, read_diagnostics_file, write_diagnostics, write_diagnostics_file,
};
pub use error::{CliError, CliResult};
pub use run::{run_scenario, scenario_equilibrium, EpsRun, L1Distances, LimitRow, RunReport};
pub use verification::{run_checks, run_verification, SuiteRow, Uniformity, VerificationReport};
