//! Trap-assisted reaction rates and their quasi-stationary reduction.
//!
//! Cellwise, with `ν = n/(n₀μ_n)` and `π = p/(p₀μ_p)`:
//!
//! ```text
//! R_n = (ntr - ν (1 - ntr)) / τ_n
//! R_p = (1 - ntr - π ntr) / τ_p
//! ```
//!
//! Setting `R_n = R_p` gives the slaved occupancy and the SRH rate
//! `R = (1 - νπ) / (τ_n (1 + π) + τ_p (1 + ν))`.

use crate::error::Result;
use crate::mesh::{check_same_grid, Field};
use crate::params::SimParams;

#[inline]
pub(crate) fn rn_cell(nu: f64, ntr: f64, tau_n: f64) -> f64 {
    (ntr - nu * (1.0 - ntr)) / tau_n
}

#[inline]
pub(crate) fn rp_cell(pi: f64, ntr: f64, tau_p: f64) -> f64 {
    (1.0 - ntr - pi * ntr) / tau_p
}

#[inline]
pub(crate) fn ntr_eq_cell(nu: f64, pi: f64, tau_n: f64, tau_p: f64) -> f64 {
    (tau_n + tau_p * nu) / (tau_n + tau_p + tau_n * pi + tau_p * nu)
}

#[inline]
pub(crate) fn srh_cell(nu: f64, pi: f64, tau_n: f64, tau_p: f64) -> f64 {
    (1.0 - nu * pi) / (tau_n * (1.0 + pi) + tau_p * (1.0 + nu))
}

/// `n / (n₀ μ_n)` cellwise.
pub(crate) fn scaled_n(n: &Field, params: &SimParams) -> Result<Field> {
    n.zip_map(&params.potentials.mu_n, |n, m| n / (params.n0 * m))
}

/// `p / (p₀ μ_p)` cellwise.
pub(crate) fn scaled_p(p: &Field, params: &SimParams) -> Result<Field> {
    p.zip_map(&params.potentials.mu_p, |p, m| p / (params.p0 * m))
}

/// Electron exchange rate with the trap level.
pub fn rate_rn(n: &Field, ntr: &Field, params: &SimParams) -> Result<Field> {
    let nu = scaled_n(n, params)?;
    nu.zip_map(ntr, |nu, t| rn_cell(nu, t, params.tau_n))
}

/// Hole exchange rate with the trap level.
pub fn rate_rp(p: &Field, ntr: &Field, params: &SimParams) -> Result<Field> {
    let pi = scaled_p(p, params)?;
    pi.zip_map(ntr, |pi, t| rp_cell(pi, t, params.tau_p))
}

/// Trapped occupancy solving `R_n = R_p` for frozen `(n, p)`.
pub fn ntr_quasi_equilibrium(n: &Field, p: &Field, params: &SimParams) -> Result<Field> {
    let nu = scaled_n(n, params)?;
    let pi = scaled_p(p, params)?;
    nu.zip_map(&pi, |nu, pi| {
        ntr_eq_cell(nu, pi, params.tau_n, params.tau_p)
    })
}

/// Shockley–Read–Hall recombination rate.
pub fn rate_srh(n: &Field, p: &Field, params: &SimParams) -> Result<Field> {
    check_same_grid(n, p)?;
    let nu = scaled_n(n, params)?;
    let pi = scaled_p(p, params)?;
    nu.zip_map(&pi, |nu, pi| srh_cell(nu, pi, params.tau_n, params.tau_p))
}
