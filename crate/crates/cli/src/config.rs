//! Scenario documents.
//!
//! The document is TOML. It is walked by hand rather than through
//! `#[derive(Deserialize)]` so that every error carries the dotted key path,
//! e.g. `params.eps: must be >= 0, got -1`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use srhlab_core::{
    build_grid, Grid1D, InitialFamily, InitialSpec, Potential, PotentialFamily, PotentialPair,
    SimParams, State, StepperConfig,
};
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_N_CELLS: usize = 200;
pub const DEFAULT_T_END: f64 = 20.0;
pub const DEFAULT_OUTPUT_EVERY: usize = 10;

/// Validated scenario with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub output: PathBuf,
    pub tau_n: f64,
    pub tau_p: f64,
    pub n0: f64,
    pub p0: f64,
    pub eps: f64,
    pub eps0: f64,
    pub n_cells: usize,
    pub stepper: StepperConfig,
    pub initial: InitialSpec,
    pub potential_n: Potential,
    pub potential_p: Potential,
    pub eps_sweep: Option<Vec<f64>>,
    pub verify: VerifySettings,
}

/// Optional `[verify]` section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifySettings {
    /// Charge class of the sampled states; defaults to the charge of the
    /// initial data.
    pub mass: Option<f64>,
    /// Cap on `n̄`, `p̄` of sampled states.
    pub m1: Option<f64>,
}

impl ScenarioConfig {
    /// The `ε` values a sweep runs: the sweep list, or `params.eps` alone.
    pub fn eps_values(&self) -> Vec<f64> {
        self.eps_sweep.clone().unwrap_or_else(|| vec![self.eps])
    }

    pub fn grid(&self) -> CliResult<Grid1D> {
        build_grid(self.n_cells).map_err(|e| CliError::config("grid.n_cells", e))
    }

    pub fn potentials(&self) -> CliResult<PotentialPair> {
        PotentialPair::from_potentials(&self.grid()?, self.potential_n, self.potential_p)
            .map_err(|e| CliError::config("potential", e))
    }

    pub fn sim_params(&self, eps: f64) -> CliResult<SimParams> {
        SimParams::new(
            self.tau_n,
            self.tau_p,
            self.n0,
            self.p0,
            eps,
            self.eps0,
            self.potentials()?,
        )
        .map_err(|e| CliError::config("params", e))
    }

    pub fn initial_state(&self, params: &SimParams) -> CliResult<State> {
        self.initial.build(&self.grid()?, params).map_err(|e| {
            CliError::solver(
                format!("{}: initial data at eps = {}", self.name, params.eps),
                e,
            )
        })
    }

    /// Same scenario with a different `ε` list, keeping `eps0` admissible.
    pub fn with_sweep(&self, eps: Vec<f64>) -> Self {
        let mut cfg = self.clone();
        cfg.eps0 = eps.iter().copied().fold(cfg.eps0, f64::max);
        cfg.eps_sweep = Some(eps);
        cfg
    }
}

pub fn load_config(path: &Path) -> CliResult<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario")
        .to_string();
    parse_config_named(&text, &stem)
}

pub fn parse_config(text: &str) -> CliResult<ScenarioConfig> {
    parse_config_named(text, "scenario")
}

/// Parses a document; `default_name` is used when it has no `name` key.
pub fn parse_config_named(text: &str, default_name: &str) -> CliResult<ScenarioConfig> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| {
        CliError::Config(format!("malformed document: {}", e.message()))
    })?;
    let mut top = Section::new("", &root);

    let name = top
        .string("name")?
        .unwrap_or_else(|| default_name.to_string());
    let seed = match top.integer("seed")? {
        Some(s) if s < 0 => return Err(top.range("seed", format!("must be >= 0, got {s}"))),
        Some(s) => s as u64,
        None => 0,
    };
    let output = top
        .string("output")?
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out").join(&name));

    let params_tab = top
        .table("params")?
        .ok_or_else(|| CliError::Config("params: missing required section".into()))?;
    let grid_tab = top.table("grid")?;
    let stepper_tab = top.table("stepper")?;
    let initial_tab = top.table("initial")?;
    let potential_tab = top.table("potential")?;
    let sweep_tab = top.table("sweep")?;
    let verify_tab = top.table("verify")?;
    top.finish()?;

    let mut params = Section::new("params", params_tab);
    let tau_n = params.positive("tau_n")?.unwrap_or(1.0);
    let tau_p = params.positive("tau_p")?.unwrap_or(1.0);
    let n0 = params.positive("n0")?.unwrap_or(1.0);
    let p0 = params.positive("p0")?.unwrap_or(1.0);
    let eps = params.non_negative("eps")?;
    let eps0 = params.non_negative("eps0")?;
    params.finish()?;

    let n_cells = match grid_tab {
        Some(t) => {
            let mut grid = Section::new("grid", t);
            let n = grid.integer("n_cells")?;
            grid.finish()?;
            match n {
                Some(n) if n < 2 => {
                    return Err(CliError::Config(format!(
                        "grid.n_cells: must be >= 2, got {n}"
                    )))
                }
                Some(n) => n as usize,
                None => DEFAULT_N_CELLS,
            }
        }
        None => DEFAULT_N_CELLS,
    };

    let stepper = match stepper_tab {
        Some(t) => {
            let mut s = Section::new("stepper", t);
            let dt = s.positive("dt")?.unwrap_or(DEFAULT_DT);
            let t_end = s.non_negative("t_end")?.unwrap_or(DEFAULT_T_END);
            let every = match s.integer("output_every")? {
                Some(k) if k < 1 => {
                    return Err(s.range("output_every", format!("must be >= 1, got {k}")))
                }
                Some(k) => k as usize,
                None => DEFAULT_OUTPUT_EVERY,
            };
            s.finish()?;
            StepperConfig::new(dt, t_end, every).map_err(|e| CliError::config("stepper", e))?
        }
        None => StepperConfig::new(DEFAULT_DT, DEFAULT_T_END, DEFAULT_OUTPUT_EVERY)
            .expect("default stepper is valid"),
    };

    let initial = match initial_tab {
        Some(t) => {
            let mut s = Section::new("initial", t);
            let family = match s.string("family")? {
                Some(f) => f
                    .parse::<InitialFamily>()
                    .map_err(|e| CliError::Config(format!("initial.family: {e}")))?,
                None => InitialFamily::Constant,
            };
            let n_level = s.non_negative("n_level")?.unwrap_or(1.0);
            let p_level = s.non_negative("p_level")?.unwrap_or(1.0);
            let amplitude = s.float("amplitude")?.unwrap_or(0.0);
            let ntr = s.float("ntr")?;
            if let Some(t) = ntr {
                if !(0.0..=1.0).contains(&t) {
                    return Err(s.range("ntr", format!("must lie in [0, 1], got {t}")));
                }
            }
            let mass = s.float("mass")?.unwrap_or(0.0);
            s.finish()?;
            let spec = InitialSpec {
                family,
                n_level,
                p_level,
                amplitude,
                ntr,
                mass,
            };
            spec.validate()
                .map_err(|e| CliError::config("initial", e))?;
            spec
        }
        None => InitialSpec {
            family: InitialFamily::Constant,
            n_level: 1.0,
            p_level: 1.0,
            amplitude: 0.0,
            ntr: None,
            mass: 0.0,
        },
    };

    let (potential_n, potential_p) = match potential_tab {
        Some(t) => {
            let mut s = Section::new("potential", t);
            let family = s
                .potential_family("family")?
                .unwrap_or(PotentialFamily::Constant);
            let amplitude = s.float("amplitude")?.unwrap_or(0.0);
            let p_family = s.potential_family("p_family")?.unwrap_or(family);
            let p_amplitude = s.float("p_amplitude")?.unwrap_or(amplitude);
            s.finish()?;
            (
                Potential::new(family, amplitude),
                Potential::new(p_family, p_amplitude),
            )
        }
        None => (Potential::zero(), Potential::zero()),
    };

    let eps_sweep = match sweep_tab {
        Some(t) => {
            let mut s = Section::new("sweep", t);
            let list = s.float_list("eps")?;
            s.finish()?;
            let list =
                list.ok_or_else(|| CliError::Config("sweep.eps: missing required key".into()))?;
            if list.is_empty() {
                return Err(CliError::Config("sweep.eps: must not be empty".into()));
            }
            for (i, &e) in list.iter().enumerate() {
                if !(e >= 0.0 && e.is_finite()) {
                    return Err(CliError::Config(format!(
                        "sweep.eps[{i}]: must be >= 0, got {e}"
                    )));
                }
            }
            Some(list)
        }
        None => None,
    };

    let verify = match verify_tab {
        Some(t) => {
            let mut s = Section::new("verify", t);
            let mass = s.float("mass")?;
            let m1 = s.positive("m1")?;
            s.finish()?;
            VerifySettings { mass, m1 }
        }
        None => VerifySettings::default(),
    };

    let eps = match (eps, &eps_sweep) {
        (Some(e), _) => e,
        (None, Some(list)) => list[0],
        (None, None) => {
            return Err(CliError::Config(
                "params.eps: missing required key (or give a [sweep] eps list)".into(),
            ))
        }
    };
    let largest = eps_sweep.iter().flatten().copied().fold(eps, f64::max);
    let eps0 = match eps0 {
        Some(e0) => {
            if eps > e0 {
                return Err(CliError::Config(format!(
                    "params.eps: {eps} exceeds params.eps0 = {e0}"
                )));
            }
            for (i, &e) in eps_sweep.iter().flatten().enumerate() {
                if e > e0 {
                    return Err(CliError::Config(format!(
                        "sweep.eps[{i}]: {e} exceeds params.eps0 = {e0}"
                    )));
                }
            }
            e0
        }
        None => largest.max(1.0),
    };

    let cfg = ScenarioConfig {
        name,
        seed,
        output,
        tau_n,
        tau_p,
        n0,
        p0,
        eps,
        eps0,
        n_cells,
        stepper,
        initial,
        potential_n,
        potential_p,
        eps_sweep,
        verify,
    };
    cfg.sim_params(cfg.eps)?;
    Ok(cfg)
}

/// One table of the document plus the keys consumed so far.
struct Section<'a> {
    path: &'static str,
    table: &'a Table,
    seen: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(path: &'static str, table: &'a Table) -> Self {
        Self {
            path,
            table,
            seen: BTreeSet::new(),
        }
    }

    fn key(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn range(&self, key: &str, msg: String) -> CliError {
        CliError::Config(format!("{}: {msg}", self.key(key)))
    }

    fn get(&mut self, key: &'a str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.table.get(key)
    }

    fn type_error(&self, key: &str, expected: &str, got: &Value) -> CliError {
        CliError::Config(format!(
            "{}: expected {expected}, got {}",
            self.key(key),
            got.type_str()
        ))
    }

    fn table(&mut self, key: &'a str) -> CliResult<Option<&'a Table>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(t)),
            Some(v) => Err(self.type_error(key, "a table", v)),
        }
    }

    fn string(&mut self, key: &'a str) -> CliResult<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(self.type_error(key, "a string", v)),
        }
    }

    fn integer(&mut self, key: &'a str) -> CliResult<Option<i64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(*i)),
            Some(v) => Err(self.type_error(key, "an integer", v)),
        }
    }

    fn as_float(&self, key: &str, v: &Value) -> CliResult<f64> {
        let x = match v {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            v => return Err(self.type_error(key, "a number", v)),
        };
        if !x.is_finite() {
            return Err(self.range(key, format!("must be finite, got {x}")));
        }
        Ok(x)
    }

    fn float(&mut self, key: &'a str) -> CliResult<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => self.as_float(key, v).map(Some),
        }
    }

    fn positive(&mut self, key: &'a str) -> CliResult<Option<f64>> {
        let x = self.float(key)?;
        match x {
            Some(x) if x <= 0.0 => Err(self.range(key, format!("must be > 0, got {x}"))),
            x => Ok(x),
        }
    }

    fn non_negative(&mut self, key: &'a str) -> CliResult<Option<f64>> {
        let x = self.float(key)?;
        match x {
            Some(x) if x < 0.0 => Err(self.range(key, format!("must be >= 0, got {x}"))),
            x => Ok(x),
        }
    }

    fn float_list(&mut self, key: &'a str) -> CliResult<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .enumerate()
                .map(|(i, v)| self.as_float(&format!("{key}[{i}]"), v))
                .collect::<CliResult<Vec<_>>>()
                .map(Some),
            Some(v) => Err(self.type_error(key, "an array of numbers", v)),
        }
    }

    fn potential_family(&mut self, key: &'a str) -> CliResult<Option<PotentialFamily>> {
        match self.string(key)? {
            None => Ok(None),
            Some(s) => s
                .replace('-', "_")
                .parse()
                .map(Some)
                .map_err(|e: String| self.range(key, e)),
        }
    }

    /// Rejects keys that were never asked for.
    fn finish(self) -> CliResult<()> {
        match self.table.keys().find(|k| !self.seen.contains(k.as_str())) {
            Some(k) => Err(CliError::Config(format!("{}: unknown key", self.key(k)))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config("[params]\neps = 0.1\n").unwrap();
        assert_eq!(cfg.n_cells, 200);
        assert_eq!(cfg.stepper.dt, 1e-3);
        assert_eq!(cfg.stepper.t_end, 20.0);
        assert_eq!(cfg.stepper.output_every, 10);
        assert_eq!(cfg.eps0, 1.0);
        assert_eq!(cfg.eps_values(), vec![0.1]);
        assert_eq!(cfg.output, PathBuf::from("out/scenario"));
    }

    #[test]
    fn negative_eps_names_the_key() {
        let err = parse_config("[params]\neps = -1\n").unwrap_err();
        assert!(err.to_string().contains("params.eps"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn sweep_with_zero_is_valid() {
        let cfg = parse_config("[params]\neps = 1\n[sweep]\neps = [1, 0.1, 0]\n").unwrap();
        assert_eq!(cfg.eps_values(), vec![1.0, 0.1, 0.0]);
        assert!(cfg.sim_params(0.0).unwrap().is_srh());
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let err = parse_config("[params]\neps = 1\nfoo = 2\n").unwrap_err();
        assert!(err.to_string().contains("params.foo: unknown key"), "{err}");
        let err = parse_config("[params]\neps = 1\n[gird]\nn_cells = 3\n").unwrap_err();
        assert!(err.to_string().contains("gird"), "{err}");
    }

    #[test]
    fn missing_params_section() {
        let err = parse_config("[grid]\nn_cells = 10\n").unwrap_err();
        assert!(
            err.to_string().contains("params: missing required section"),
            "{err}"
        );
    }

    #[test]
    fn sweep_must_respect_eps0() {
        let err =
            parse_config("[params]\neps = 0.1\neps0 = 0.5\n[sweep]\neps = [0.1, 1]\n").unwrap_err();
        assert!(err.to_string().contains("sweep.eps[1]"), "{err}");
    }

    #[test]
    fn family_names_resolve() {
        let doc = "[params]\neps = 0.1\n[initial]\nfamily = \"gaussian-bump\"\namplitude = 0.5\n\
                   [potential]\nfamily = \"double-well\"\namplitude = 1.5\np_family = \"cosine_well\"\n";
        let cfg = parse_config(doc).unwrap();
        assert_eq!(cfg.initial.family, InitialFamily::GaussianBump);
        assert_eq!(
            cfg.potential_n,
            Potential::new(PotentialFamily::DoubleWell, 1.5)
        );
        assert_eq!(
            cfg.potential_p,
            Potential::new(PotentialFamily::CosineWell, 1.5)
        );
        let err =
            parse_config("[params]\neps = 0.1\n[potential]\nfamily = \"bowl\"\n").unwrap_err();
        assert!(err.to_string().contains("potential.family"), "{err}");
    }

    #[test]
    fn type_errors_are_path_qualified() {
        let err = parse_config("[params]\neps = \"small\"\n").unwrap_err();
        assert!(
            err.to_string().contains("params.eps: expected a number"),
            "{err}"
        );
        let err = parse_config("[params]\neps = 1\n[stepper]\noutput_every = 0\n").unwrap_err();
        assert!(err.to_string().contains("stepper.output_every"), "{err}");
    }
}
