use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::PotentialPair;

/// Physical constants of the trap-assisted recombination model.
///
/// `eps = 0` selects the Shockley–Read–Hall branch, where the trapped-state
/// occupancy is slaved to `(n, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub tau_n: f64,
    pub tau_p: f64,
    pub n0: f64,
    pub p0: f64,
    pub eps: f64,
    /// Upper end of the admissible `eps` range; enters the equilibrium bounds.
    pub eps0: f64,
    pub potentials: PotentialPair,
}

impl SimParams {
    pub fn new(
        tau_n: f64,
        tau_p: f64,
        n0: f64,
        p0: f64,
        eps: f64,
        eps0: f64,
        potentials: PotentialPair,
    ) -> Result<Self> {
        let params = Self {
            tau_n,
            tau_p,
            n0,
            p0,
            eps,
            eps0,
            potentials,
        };
        params.validate()?;
        Ok(params)
    }

    /// Unit constants (`τ = n₀ = p₀ = 1`) with the given potentials.
    pub fn unit(eps: f64, potentials: PotentialPair) -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0, eps, eps.max(1.0), potentials)
            .expect("unit parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau_n", self.tau_n),
            ("tau_p", self.tau_p),
            ("n0", self.n0),
            ("p0", self.p0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eps",
                reason: format!("must be >= 0, got {}", self.eps),
            });
        }
        if !(self.eps0 >= self.eps && self.eps0.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eps0",
                reason: format!("must be >= eps = {}, got {}", self.eps, self.eps0),
            });
        }
        if self.eps > 0.0 && !(self.eps0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eps0",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Same constants with a different relaxation parameter; `eps0` grows if
    /// needed.
    pub fn with_eps(&self, eps: f64) -> Self {
        Self {
            eps,
            eps0: self.eps0.max(eps),
            ..self.clone()
        }
    }

    pub fn is_srh(&self) -> bool {
        self.eps == 0.0
    }

    pub fn n_cells(&self) -> usize {
        self.potentials.n_cells()
    }

    pub fn np0(&self) -> f64 {
        self.n0 * self.p0
    }
}
