//! Stationary states: the constants `n*`, `p*` and the trapped occupancy.
//!
//! Every equilibrium has the form `n∞ = n* μ_n`, `p∞ = p* μ_p` with
//! `n* p* = n₀ p₀` and `ntr∞ = n*/(n* + n₀)`. The remaining freedom is fixed
//! by the conserved charge
//!
//! ```text
//! f(n*) = n* μ̄_n - n₀p₀ μ̄_p / n* + ε n*/(n* + n₀) = M
//! ```
//!
//! which is strictly increasing in `n*`, so the root is unique.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Field;
use crate::params::SimParams;

/// Relative bracket width at which bisection stops.
pub const ROOT_REL_TOL: f64 = 1e-13;

/// Widening factor applied to the analytic `[α, β]` bracket.
const BRACKET_SAFETY: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub n_star: f64,
    pub p_star: f64,
    pub ntr_inf: f64,
    pub n_inf: Field,
    pub p_inf: Field,
    /// Conserved charge `n̄ - p̄ + ε n̄_tr` selecting this equilibrium.
    pub mass: f64,
}

impl EquilibriumState {
    /// Trapped occupancy as a constant field.
    pub fn ntr_field(&self) -> Field {
        Field::from_vec(vec![self.ntr_inf; self.n_inf.len()])
    }
}

/// Explicit uniform-in-`ε` bounds `α ≤ n* ≤ β` (and the mirrored pair for `p*`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumBounds {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_p: f64,
    pub beta_p: f64,
}

/// Bounds on `n*` built from `|M| + ε₀`; the `p*` pair swaps the roles of the
/// two carriers and flips the sign of `M`.
pub fn equilibrium_bounds(params: &SimParams, mass: f64) -> EquilibriumBounds {
    let mu_n = params.potentials.mu_n_bar();
    let mu_p = params.potentials.mu_p_bar();
    let np0 = params.np0();
    let shift = mass.abs() + params.eps0;

    let side = |own: f64, other: f64| {
        let q = np0 * other / own;
        let beta = shift / own + q.sqrt();
        (q / beta, beta)
    };
    let (alpha, beta) = side(mu_n, mu_p);
    let (alpha_p, beta_p) = side(mu_p, mu_n);
    EquilibriumBounds {
        alpha,
        beta,
        alpha_p,
        beta_p,
    }
}

/// `f(n*) - M` for the stationary charge balance.
fn charge_residual(
    n_star: f64,
    mu_n: f64,
    mu_p: f64,
    np0: f64,
    n0: f64,
    eps: f64,
    mass: f64,
) -> f64 {
    n_star * mu_n - np0 * mu_p / n_star + eps * n_star / (n_star + n0) - mass
}

/// Solves for the unique equilibrium with charge `mass`.
pub fn solve_equilibrium(params: &SimParams, mass: f64) -> Result<EquilibriumState> {
    params.validate()?;
    if !mass.is_finite() {
        return Err(Error::InvalidParameter {
            name: "mass",
            reason: format!("must be finite, got {mass}"),
        });
    }
    let pot = &params.potentials;
    let mu_n = pot.mu_n_bar();
    let mu_p = pot.mu_p_bar();
    let np0 = params.np0();

    let n_star = if params.is_srh() {
        srh_root(mu_n, mu_p, np0, mass)
    } else {
        let bounds = equilibrium_bounds(params, mass);
        let mut lo = bounds.alpha / BRACKET_SAFETY;
        let mut hi = bounds.beta * BRACKET_SAFETY;
        let g = |x: f64| charge_residual(x, mu_n, mu_p, np0, params.n0, params.eps, mass);
        if !(g(lo) < 0.0 && g(hi) > 0.0) {
            return Err(Error::BracketFailure { lo, hi });
        }
        while hi - lo > ROOT_REL_TOL * lo {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mid = 0.5 * (lo + hi);
        [lo, mid, hi]
            .into_iter()
            .min_by(|a, b| g(*a).abs().total_cmp(&g(*b).abs()))
            .expect("non-empty")
    };

    let p_star = np0 / n_star;
    let ntr_inf = n_star / (n_star + params.n0);
    Ok(EquilibriumState {
        n_star,
        p_star,
        ntr_inf,
        n_inf: pot.mu_n.map(|m| n_star * m),
        p_inf: pot.mu_p.map(|m| p_star * m),
        mass,
    })
}

/// Positive root of `μ̄_n x² - M x - n₀p₀ μ̄_p = 0`, written without
/// cancellation for either sign of `M`.
fn srh_root(mu_n: f64, mu_p: f64, np0: f64, mass: f64) -> f64 {
    let c = np0 * mu_p;
    let disc = (mass * mass + 4.0 * mu_n * c).sqrt();
    if mass >= 0.0 {
        (mass + disc) / (2.0 * mu_n)
    } else {
        2.0 * c / (disc - mass)
    }
}

/// Recomputes `n* μ̄_n - p* μ̄_p + ε ntr∞` from the stored constants.
pub fn equilibrium_mass(state: &EquilibriumState, params: &SimParams) -> f64 {
    state.n_star * params.potentials.mu_n_bar() - state.p_star * params.potentials.mu_p_bar()
        + params.eps * state.ntr_inf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, Potential, PotentialFamily, PotentialPair};
    use approx::assert_relative_eq;

    fn flat(eps: f64, n0: f64, p0: f64, eps0: f64) -> SimParams {
        let g = build_grid(8).unwrap();
        SimParams::new(1.0, 1.0, n0, p0, eps, eps0, PotentialPair::flat(&g)).unwrap()
    }

    #[test]
    fn symmetric_srh_equilibrium() {
        let eq = solve_equilibrium(&flat(0.0, 1.0, 1.0, 1.0), 0.0).unwrap();
        assert_eq!(eq.n_star, 1.0);
        assert_eq!(eq.p_star, 1.0);
        assert_eq!(eq.ntr_inf, 0.5);
    }

    #[test]
    fn symmetric_equilibrium_for_any_eps() {
        for eps in [0.01, 0.3, 1.0] {
            let eq = solve_equilibrium(&flat(eps, 1.0, 1.0, 1.0), eps / 2.0).unwrap();
            assert_relative_eq!(eq.n_star, 1.0, max_relative = 1e-12);
            assert_relative_eq!(eq.p_star, 1.0, max_relative = 1e-12);
            assert_relative_eq!(eq.ntr_inf, 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn tabulated_root_eps_tenth() {
        // 40-digit bisection of n - 1/n + 0.1 n/(n + 1) = 0
        let eq = solve_equilibrium(&flat(0.1, 1.0, 1.0, 1.0), 0.0).unwrap();
        assert_relative_eq!(eq.n_star, 0.975_613_381_808_118_03, max_relative = 1e-13);
        assert_relative_eq!(eq.p_star, 1.024_996_190_752_002_5, max_relative = 1e-13);
        assert_relative_eq!(eq.ntr_inf, 0.493_828_089_438_844_84, max_relative = 1e-13);
    }

    #[test]
    fn bounds_examples() {
        let b = equilibrium_bounds(&flat(0.5, 1.0, 1.0, 1.0), 0.0);
        assert_relative_eq!(b.beta, 2.0, max_relative = 1e-15);
        assert_relative_eq!(b.alpha, 0.5, max_relative = 1e-15);

        let params = flat(0.0, 4.0, 4.0, 0.0);
        let b = equilibrium_bounds(&params, 0.0);
        assert_eq!(b.beta, 4.0);
        assert_eq!(b.alpha, 4.0);
        assert_eq!(solve_equilibrium(&params, 0.0).unwrap().n_star, 4.0);
    }

    #[test]
    fn mass_examples() {
        let params = flat(0.0, 1.0, 1.0, 1.0);
        let eq = solve_equilibrium(&params, 0.0).unwrap();
        assert_eq!(equilibrium_mass(&eq, &params), 0.0);

        let params = flat(0.1, 1.0, 1.0, 1.0);
        let eq = EquilibriumState {
            n_star: 1.0,
            p_star: 1.0,
            ntr_inf: 0.5,
            n_inf: Field::new(vec![1.0; 8]).unwrap(),
            p_inf: Field::new(vec![1.0; 8]).unwrap(),
            mass: 0.05,
        };
        assert_relative_eq!(equilibrium_mass(&eq, &params), 0.05, max_relative = 1e-15);
    }

    #[test]
    fn root_increases_with_mass() {
        let g = build_grid(16).unwrap();
        let pot = PotentialPair::from_potentials(
            &g,
            Potential::new(PotentialFamily::CosineWell, 1.0),
            Potential::new(PotentialFamily::DoubleWell, -0.5),
        )
        .unwrap();
        let params = SimParams::new(0.7, 1.3, 2.0, 0.5, 0.2, 1.0, pot).unwrap();
        let mut last = 0.0;
        for k in -20..=20 {
            let eq = solve_equilibrium(&params, 0.25 * k as f64).unwrap();
            assert!(eq.n_star > last);
            last = eq.n_star;
        }
    }

    #[test]
    fn small_eps_approaches_srh_root() {
        let params = flat(0.0, 1.5, 0.5, 1.0);
        let base = solve_equilibrium(&params, 0.3).unwrap().n_star;
        let slope = {
            let h = 1e-6;
            (solve_equilibrium(&params.with_eps(h), 0.3).unwrap().n_star - base) / h
        };
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let n = solve_equilibrium(&params.with_eps(eps), 0.3)
                .unwrap()
                .n_star;
            assert!((n - base).abs() <= 1.01 * slope.abs() * eps, "eps {eps}");
        }
    }
}
