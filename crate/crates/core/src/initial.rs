//! Catalog of initial data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::equilibrium::solve_equilibrium;
use crate::error::{Error, Result};
use crate::mesh::{Field, Grid1D};
use crate::params::SimParams;
use crate::rates::ntr_quasi_equilibrium;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialFamily {
    /// `n ≡ n_level`, `p ≡ p_level`.
    Constant,
    /// Carriers pushed to opposite halves: `n` scaled by `1 ± a`, `p` by `1 ∓ a`.
    Step,
    /// Gaussian bumps of height `a` on top of the levels, `n` at 0.3, `p` at 0.7.
    GaussianBump,
    /// Vacuum on `[0.4, 0.6]`; empty traps on `[0, 0.2)`, full traps on `[0.8, 1]`.
    ZeroPatch,
    /// The equilibrium of charge `mass`.
    Equilibrium,
}

impl InitialFamily {
    pub const ALL: [InitialFamily; 5] = [
        InitialFamily::Constant,
        InitialFamily::Step,
        InitialFamily::GaussianBump,
        InitialFamily::ZeroPatch,
        InitialFamily::Equilibrium,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitialFamily::Constant => "constant",
            InitialFamily::Step => "step",
            InitialFamily::GaussianBump => "gaussian_bump",
            InitialFamily::ZeroPatch => "zero_patch",
            InitialFamily::Equilibrium => "equilibrium",
        }
    }
}

impl fmt::Display for InitialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitialFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|f| f.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|f| f.name()).collect();
                format!(
                    "unknown initial family `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

const BUMP_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSpec {
    pub family: InitialFamily,
    pub n_level: f64,
    pub p_level: f64,
    pub amplitude: f64,
    /// Uniform trap occupancy; `None` uses the slaved value of `(n, p)`.
    pub ntr: Option<f64>,
    /// Charge used by the equilibrium family.
    pub mass: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            family: InitialFamily::Constant,
            n_level: 1.0,
            p_level: 1.0,
            amplitude: 0.0,
            ntr: None,
            mass: 0.0,
        }
    }
}

impl InitialSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n_level", self.n_level), ("p_level", self.p_level)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if !self.amplitude.is_finite() || !self.mass.is_finite() {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                reason: "must be finite".into(),
            });
        }
        if self.family == InitialFamily::Step && !(0.0..=1.0).contains(&self.amplitude) {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                reason: format!("step amplitude must lie in [0, 1], got {}", self.amplitude),
            });
        }
        if self.family == InitialFamily::GaussianBump && self.amplitude < 0.0 {
            return Err(Error::InvalidParameter {
                name: "amplitude",
                reason: format!("bump amplitude must be >= 0, got {}", self.amplitude),
            });
        }
        if let Some(t) = self.ntr {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::OutOfUnitInterval(t));
            }
        }
        Ok(())
    }

    /// Carrier profiles before the trap occupancy is attached.
    pub fn carriers(&self, grid: &Grid1D) -> (Field, Field) {
        let (nl, pl, a) = (self.n_level, self.p_level, self.amplitude);
        match self.family {
            InitialFamily::Constant | InitialFamily::Equilibrium => {
                (grid.constant(nl), grid.constant(pl))
            }
            InitialFamily::Step => (
                grid.sample(|x| {
                    if x < 0.5 {
                        nl * (1.0 + a)
                    } else {
                        nl * (1.0 - a)
                    }
                }),
                grid.sample(|x| {
                    if x < 0.5 {
                        pl * (1.0 - a)
                    } else {
                        pl * (1.0 + a)
                    }
                }),
            ),
            InitialFamily::GaussianBump => {
                let bump =
                    |x: f64, c: f64| a * (-(x - c).powi(2) / (2.0 * BUMP_WIDTH.powi(2))).exp();
                (
                    grid.sample(|x| nl + bump(x, 0.3)),
                    grid.sample(|x| pl + bump(x, 0.7)),
                )
            }
            InitialFamily::ZeroPatch => {
                let vacuum = |x: f64| (0.4..=0.6).contains(&x);
                (
                    grid.sample(|x| if vacuum(x) { 0.0 } else { nl * (1.0 + a * x) }),
                    grid.sample(|x| {
                        if vacuum(x) {
                            0.0
                        } else {
                            pl * (1.0 + a * (1.0 - x))
                        }
                    }),
                )
            }
        }
    }

    /// Builds the initial state on `params`' grid. On the SRH branch the
    /// occupancy is always the slaved one.
    pub fn build(&self, grid: &Grid1D, params: &SimParams) -> Result<State> {
        self.validate()?;
        if self.family == InitialFamily::Equilibrium {
            let eq = solve_equilibrium(params, self.mass)?;
            let mut s = State::from_equilibrium(&eq);
            if params.is_srh() {
                s.ntr = ntr_quasi_equilibrium(&s.n, &s.p, params)?;
            }
            return Ok(s);
        }
        let (n, p) = self.carriers(grid);
        let slaved = ntr_quasi_equilibrium(&n, &p, params)?;
        let ntr = if params.is_srh() {
            slaved
        } else if let Some(t) = self.ntr {
            grid.constant(t)
        } else if self.family == InitialFamily::ZeroPatch {
            let mut v = slaved.into_vec();
            for (x, t) in grid.centers().iter().zip(v.iter_mut()) {
                if *x < 0.2 {
                    *t = 0.0;
                } else if *x >= 0.8 {
                    *t = 1.0;
                }
            }
            Field::new(v)?
        } else {
            slaved
        };
        State::new(0.0, n, p, ntr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, PotentialPair};

    fn spec(family: InitialFamily) -> InitialSpec {
        InitialSpec {
            family,
            n_level: 2.0,
            p_level: 0.5,
            amplitude: 0.5,
            ntr: None,
            mass: 0.3,
        }
    }

    #[test]
    fn families_parse_by_name() {
        for f in InitialFamily::ALL {
            assert_eq!(f.name().parse::<InitialFamily>().unwrap(), f);
        }
        assert_eq!(
            "gaussian-bump".parse::<InitialFamily>().unwrap(),
            InitialFamily::GaussianBump
        );
        assert!("ramp".parse::<InitialFamily>().is_err());
    }

    #[test]
    fn every_family_builds_an_admissible_state() {
        let g = build_grid(50).unwrap();
        for eps in [0.0, 0.1] {
            let params = SimParams::unit(eps, PotentialPair::flat(&g));
            for f in InitialFamily::ALL {
                let s = spec(f).build(&g, &params).unwrap();
                assert!(s.box_violation().is_none(), "{f}");
            }
        }
    }

    #[test]
    fn zero_patch_touches_the_boundary() {
        let g = build_grid(50).unwrap();
        let params = SimParams::unit(0.5, PotentialPair::flat(&g));
        let s = spec(InitialFamily::ZeroPatch).build(&g, &params).unwrap();
        assert_eq!(s.n.min(), 0.0);
        assert_eq!(s.p.min(), 0.0);
        assert_eq!(s.ntr.min(), 0.0);
        assert_eq!(s.ntr.max(), 1.0);
    }

    #[test]
    fn equilibrium_family_carries_requested_charge() {
        let g = build_grid(20).unwrap();
        let params = SimParams::unit(0.4, PotentialPair::flat(&g));
        let s = spec(InitialFamily::Equilibrium).build(&g, &params).unwrap();
        assert!((s.mass(&params) - 0.3).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_amplitudes() {
        let mut s = spec(InitialFamily::Step);
        s.amplitude = 1.5;
        assert!(s.validate().is_err());
        let mut s = spec(InitialFamily::Constant);
        s.ntr = Some(2.0);
        assert!(s.validate().is_err());
    }
}
