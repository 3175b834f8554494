//! Discrete entropy, entropy production and the quantities derived from them.
//!
//! The entropy is
//!
//! ```text
//! E = h Σ [ n ln(n/(n₀μ_n)) - (n - n₀μ_n) + p ln(p/(p₀μ_p)) - (p - p₀μ_p) + ε Φ(ntr) ]
//! ```
//!
//! where `Φ(x) = x ln x + (1-x) ln(1-x) + ln 2` is the antiderivative of
//! `ln(s/(1-s))` vanishing at `1/2`. The flux part of the production uses
//! `μ_{i+1/2} (u_{i+1} - u_i)(ln u_{i+1} - ln u_i) / h` with `u = n/μ`, which is
//! `μ (Δu)² / (h u_log)` for the logarithmic mean `u_log`. This is exactly the
//! rate at which the flux operator of [`crate::mesh`] dissipates `E`.
//!
//! All functionals share one set of logarithms per cell; `ln μ = -V` is read
//! off the potential.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::equilibrium::EquilibriumState;
use crate::error::{Error, Result};
use crate::mesh::{check_same_grid, edge_mean, l1_distance, Field};
use crate::params::SimParams;
use crate::rates::{rn_cell, rp_cell, srh_cell};

/// Log arguments are clamped into this range; clamping marks the value as
/// singular.
pub const LOG_FLOOR: f64 = 1e-300;
pub const LOG_CEIL: f64 = 1e300;

/// `x ln x` with `0 ln 0 = 0`, given `ln x`.
#[inline]
fn xlnx_with(x: f64, ln_x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * ln_x
    }
}

/// `x ln(x/y) - (x - y)`, the Boltzmann relative density; `y > 0`.
#[inline]
pub(crate) fn boltzmann(x: f64, y: f64) -> f64 {
    boltzmann_with(x, (x / y).ln(), y)
}

/// [`boltzmann`] with `ln(x/y)` supplied.
#[inline]
fn boltzmann_with(x: f64, ln_ratio: f64, y: f64) -> f64 {
    if x == 0.0 {
        y
    } else {
        x * ln_ratio - (x - y)
    }
}

#[inline]
fn phi_with(x: f64, ln_x: f64, ln_1mx: f64) -> f64 {
    xlnx_with(x, ln_x) + xlnx_with(1.0 - x, ln_1mx) + LN_2
}

#[inline]
fn phi(x: f64) -> f64 {
    phi_with(x, x.ln(), (1.0 - x).ln())
}

/// `∫_{1/2}^{x} ln(s/(1-s)) ds` in closed form.
pub fn trap_potential(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfUnitInterval(x));
    }
    Ok(phi(x))
}

/// Entropy production value with a flag telling whether any log argument was
/// clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub value: f64,
    pub singular: bool,
}

/// Clamps logarithms into `[ln LOG_FLOOR, ln LOG_CEIL]`, remembering whether
/// it had to.
#[derive(Default)]
struct Clamp {
    singular: bool,
}

impl Clamp {
    #[inline]
    fn ln(&mut self, ln_x: f64) -> f64 {
        let (lo, hi) = (LN_FLOOR, LN_CEIL);
        if ln_x < lo {
            self.singular = true;
            lo
        } else if ln_x > hi {
            self.singular = true;
            hi
        } else {
            ln_x
        }
    }
}

// ln(1e-300) and ln(1e300)
const LN_FLOOR: f64 = -690.775_527_898_213_7;
const LN_CEIL: f64 = 690.775_527_898_213_7;

/// Cellwise logarithms of a state, `-∞` at zero.
struct StateLogs {
    n: Vec<f64>,
    p: Vec<f64>,
    t: Vec<f64>,
    one_minus_t: Vec<f64>,
}

fn ln_all(f: &Field) -> Vec<f64> {
    f.iter().map(|x| x.ln()).collect()
}

impl StateLogs {
    fn carriers(n: &Field, p: &Field) -> Self {
        Self {
            n: ln_all(n),
            p: ln_all(p),
            t: Vec::new(),
            one_minus_t: Vec::new(),
        }
    }

    fn new(state: &State) -> Self {
        Self {
            t: ln_all(&state.ntr),
            one_minus_t: state.ntr.iter().map(|x| (1.0 - x).ln()).collect(),
            ..Self::carriers(&state.n, &state.p)
        }
    }
}

fn check_state(state: &State, params: &SimParams) -> Result<()> {
    check_same_grid(&state.n, &state.p)?;
    check_same_grid(&state.n, &state.ntr)?;
    check_same_grid(&state.n, &params.potentials.mu_n)
}

/// `Σ_i [boltzmann(n, c_n μ_n) + boltzmann(p, c_p μ_p)]` for reference
/// constants `c_n`, `c_p`.
fn carrier_sum(
    n: &Field,
    p: &Field,
    logs: &StateLogs,
    params: &SimParams,
    c_n: f64,
    c_p: f64,
) -> f64 {
    let pot = &params.potentials;
    let (ln_cn, ln_cp) = (c_n.ln(), c_p.ln());
    let mut total = 0.0;
    for i in 0..n.len() {
        total += boltzmann_with(n[i], logs.n[i] - ln_cn + pot.v_n[i], c_n * pot.mu_n[i])
            + boltzmann_with(p[i], logs.p[i] - ln_cp + pot.v_p[i], c_p * pot.mu_p[i]);
    }
    total
}

fn trap_sum(ntr: &Field, logs: &StateLogs) -> f64 {
    (0..ntr.len())
        .map(|i| phi_with(ntr[i].clamp(0.0, 1.0), logs.t[i], logs.one_minus_t[i]))
        .sum()
}

fn entropy_with(state: &State, logs: &StateLogs, params: &SimParams) -> f64 {
    let carriers = carrier_sum(&state.n, &state.p, logs, params, params.n0, params.p0);
    let trap = if params.eps == 0.0 {
        0.0
    } else {
        trap_sum(&state.ntr, logs)
    };
    state.n.h() * (carriers + params.eps * trap)
}

/// Total entropy of a state. At `ε = 0` the trap term drops out.
pub fn entropy(state: &State, params: &SimParams) -> Result<f64> {
    check_state(state, params)?;
    Ok(entropy_with(state, &StateLogs::new(state), params))
}

/// Entropy of the SRH system, `E₀(n, p)`.
pub fn entropy_srh(n: &Field, p: &Field, params: &SimParams) -> Result<f64> {
    check_same_grid(n, p)?;
    check_same_grid(n, &params.potentials.mu_n)?;
    let logs = StateLogs::carriers(n, p);
    Ok(n.h() * carrier_sum(n, p, &logs, params, params.n0, params.p0))
}

/// `Σ_edges μ_e (u_{i+1} - u_i)(ln u_{i+1} - ln u_i) / h` with `u = f/μ` and
/// `ln u = ln f + V`.
fn flux_dissipation(f: &Field, ln_f: &[f64], mu: &Field, v: &Field, clamp: &mut Clamp) -> f64 {
    let m = f.len();
    let mut total = 0.0;
    let mut u_prev = f[0] / mu[0];
    let mut lu_prev = clamp.ln(ln_f[0] + v[0]);
    for i in 1..m {
        let u = f[i] / mu[i];
        let lu = clamp.ln(ln_f[i] + v[i]);
        total += edge_mean(mu[i - 1], mu[i]) * (u - u_prev) * (lu - lu_prev);
        u_prev = u;
        lu_prev = lu;
    }
    total / f.h()
}

fn flux_with(n: &Field, p: &Field, logs: &StateLogs, params: &SimParams, clamp: &mut Clamp) -> f64 {
    let pot = &params.potentials;
    flux_dissipation(n, &logs.n, &pot.mu_n, &pot.v_n, clamp)
        + flux_dissipation(p, &logs.p, &pot.mu_p, &pot.v_p, clamp)
}

/// Flux part of the production, `∫|J_n|²/n + ∫|J_p|²/p`.
pub fn flux_production(n: &Field, p: &Field, params: &SimParams) -> Result<Production> {
    check_same_grid(n, p)?;
    check_same_grid(n, &params.potentials.mu_n)?;
    let mut clamp = Clamp::default();
    let value = flux_with(n, p, &StateLogs::carriers(n, p), params, &mut clamp);
    Ok(Production {
        value,
        singular: clamp.singular,
    })
}

/// Single-carrier flux production `∫|J|²/f` for weight `μ = e^{-V}`.
pub fn carrier_flux_production(f: &Field, mu: &Field) -> Result<Production> {
    check_same_grid(f, mu)?;
    let mut clamp = Clamp::default();
    let v = mu.map(|m| -m.ln());
    let value = flux_dissipation(f, &ln_all(f), mu, &v, &mut clamp);
    Ok(Production {
        value,
        singular: clamp.singular,
    })
}

fn production_with(state: &State, logs: &StateLogs, params: &SimParams) -> Production {
    let mut clamp = Clamp::default();
    let flux = flux_with(&state.n, &state.p, logs, params, &mut clamp);
    let pot = &params.potentials;
    let (ln_n0, ln_p0) = (params.n0.ln(), params.p0.ln());
    let mut reaction = 0.0;
    for i in 0..state.n.len() {
        let t = state.ntr[i];
        let nu = state.n[i] / (params.n0 * pot.mu_n[i]);
        let pi = state.p[i] / (params.p0 * pot.mu_p[i]);
        let ln_t = clamp.ln(logs.t[i]);
        let ln_1mt = clamp.ln(logs.one_minus_t[i]);
        let ln_nu = clamp.ln(logs.n[i] - ln_n0 + pot.v_n[i]);
        let ln_pi = clamp.ln(logs.p[i] - ln_p0 + pot.v_p[i]);
        // -R_n ln(ν(1-ntr)/ntr) - R_p ln(π ntr/(1-ntr))
        reaction -= rn_cell(nu, t, params.tau_n) * (ln_nu + ln_1mt - ln_t)
            + rp_cell(pi, t, params.tau_p) * (ln_pi + ln_t - ln_1mt);
    }
    Production {
        value: flux + state.n.h() * reaction,
        singular: clamp.singular,
    }
}

/// Entropy production `D(n, p, ntr)`.
pub fn entropy_production(state: &State, params: &SimParams) -> Result<Production> {
    check_state(state, params)?;
    Ok(production_with(state, &StateLogs::new(state), params))
}

/// Entropy production of the SRH system,
/// `D₀ = flux terms - h Σ R ln(np/(n₀μ_n p₀μ_p))`.
pub fn production_srh(n: &Field, p: &Field, params: &SimParams) -> Result<Production> {
    check_same_grid(n, p)?;
    check_same_grid(n, &params.potentials.mu_n)?;
    let logs = StateLogs::carriers(n, p);
    let mut clamp = Clamp::default();
    let flux = flux_with(n, p, &logs, params, &mut clamp);
    let pot = &params.potentials;
    let (ln_n0, ln_p0) = (params.n0.ln(), params.p0.ln());
    let mut reaction = 0.0;
    for i in 0..n.len() {
        let nu = n[i] / (params.n0 * pot.mu_n[i]);
        let pi = p[i] / (params.p0 * pot.mu_p[i]);
        let r = srh_cell(nu, pi, params.tau_n, params.tau_p);
        let ln_nu = clamp.ln(logs.n[i] - ln_n0 + pot.v_n[i]);
        let ln_pi = clamp.ln(logs.p[i] - ln_p0 + pot.v_p[i]);
        reaction -= r * (ln_nu + ln_pi);
    }
    Ok(Production {
        value: flux + n.h() * reaction,
        singular: clamp.singular,
    })
}

fn relative_with(
    state: &State,
    logs: &StateLogs,
    eq: &EquilibriumState,
    params: &SimParams,
) -> f64 {
    let carriers = carrier_sum(&state.n, &state.p, logs, params, eq.n_star, eq.p_star);
    let trap = if params.eps == 0.0 {
        0.0
    } else {
        let t_inf = eq.ntr_inf;
        let phi_inf = phi(t_inf);
        let slope = (t_inf / (1.0 - t_inf)).ln();
        trap_sum(&state.ntr, logs)
            - state.ntr.len() as f64 * phi_inf
            - slope * state.ntr.iter().map(|x| x - t_inf).sum::<f64>()
    };
    state.n.h() * (carriers + params.eps * trap)
}

/// `E - E∞` in the form relative to the equilibrium profiles.
pub fn relative_entropy(state: &State, eq: &EquilibriumState, params: &SimParams) -> Result<f64> {
    check_state(state, params)?;
    check_same_grid(&state.n, &eq.n_inf)?;
    Ok(relative_with(state, &StateLogs::new(state), eq, params))
}

/// Pinsker-type lower bound on the relative entropy.
pub fn ckp_bound(state: &State, eq: &EquilibriumState, params: &SimParams) -> Result<f64> {
    let l1_n = l1_distance(&state.n, &eq.n_inf)?;
    let l1_p = l1_distance(&state.p, &eq.p_inf)?;
    let l1_t = state.ntr.h()
        * state
            .ntr
            .iter()
            .map(|x| (x - eq.ntr_inf).abs())
            .sum::<f64>();
    Ok(ckp_from_distances(state, eq, params, l1_n, l1_p, l1_t))
}

fn ckp_from_distances(
    state: &State,
    eq: &EquilibriumState,
    params: &SimParams,
    l1_n: f64,
    l1_p: f64,
    l1_t: f64,
) -> f64 {
    let nbar = state.n.average();
    let pbar = state.p.average();
    3.0 / (2.0 * nbar + 4.0 * eq.n_inf.average()) * l1_n * l1_n
        + 3.0 / (2.0 * pbar + 4.0 * eq.p_inf.average()) * l1_p * l1_p
        + 2.0 * params.eps * l1_t * l1_t
}

/// Upper bound `M₁` on `n̄` and `p̄` along any entropy-dissipating trajectory.
pub fn l1_mass_cap(params: &SimParams, e_initial: f64) -> f64 {
    let pot = &params.potentials;
    2.5 * (params.n0 * pot.mu_n_bar()).max(params.p0 * pot.mu_p_bar()) + 0.75 * e_initial
}

/// One line of the per-output diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub nbar: f64,
    pub pbar: f64,
    pub ntrbar: f64,
    pub mass: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E_rel")]
    pub e_rel: f64,
    pub l1_n: f64,
    pub l1_p: f64,
    pub l1_ntr: f64,
    pub ckp: f64,
    pub maxn: f64,
    pub maxp: f64,
    pub singular_flag: bool,
}

impl DiagnosticsRow {
    pub fn evaluate(state: &State, eq: &EquilibriumState, params: &SimParams) -> Result<Self> {
        check_state(state, params)?;
        check_same_grid(&state.n, &eq.n_inf)?;
        let logs = StateLogs::new(state);
        let production = production_with(state, &logs, params);
        let l1_n = l1_distance(&state.n, &eq.n_inf)?;
        let l1_p = l1_distance(&state.p, &eq.p_inf)?;
        let l1_ntr = state.ntr.h()
            * state
                .ntr
                .iter()
                .map(|x| (x - eq.ntr_inf).abs())
                .sum::<f64>();
        Ok(Self {
            t: state.t,
            nbar: state.n.average(),
            pbar: state.p.average(),
            ntrbar: state.ntr.average(),
            mass: state.mass(params),
            e: entropy_with(state, &logs, params),
            d: production.value,
            e_rel: relative_with(state, &logs, eq, params),
            l1_n,
            l1_p,
            l1_ntr,
            ckp: ckp_from_distances(state, eq, params, l1_n, l1_p, l1_ntr),
            maxn: state.n.max(),
            maxp: state.p.max(),
            singular_flag: production.singular,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_equilibrium;
    use crate::mesh::{build_grid, Potential, PotentialFamily, PotentialPair};
    use approx::assert_abs_diff_eq;

    fn flat(n_cells: usize, eps: f64) -> SimParams {
        let g = build_grid(n_cells).unwrap();
        SimParams::unit(eps, PotentialPair::flat(&g))
    }

    fn uniform(n_cells: usize, n: f64, p: f64, ntr: f64) -> State {
        State::new(
            0.0,
            Field::new(vec![n; n_cells]).unwrap(),
            Field::new(vec![p; n_cells]).unwrap(),
            Field::new(vec![ntr; n_cells]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn trap_potential_values() {
        assert_eq!(trap_potential(0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(trap_potential(0.0).unwrap(), LN_2, epsilon = 1e-16);
        assert_abs_diff_eq!(trap_potential(1.0).unwrap(), LN_2, epsilon = 1e-16);
        assert_abs_diff_eq!(
            trap_potential(0.0).unwrap() + trap_potential(1.0).unwrap(),
            2.0 * LN_2,
            epsilon = 1e-15
        );
        assert!(trap_potential(1.5).is_err());
        assert!(trap_potential(-1e-9).is_err());
    }

    #[test]
    fn trap_potential_derivative_matches_integrand() {
        for &x in &[0.05, 0.2, 0.5, 0.77, 0.93] {
            let h = 1e-6;
            let fd = (phi(x + h) - phi(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, (x / (1.0 - x)).ln(), epsilon = 1e-8);
            assert!(phi(x) >= 0.0);
        }
    }

    #[test]
    fn entropy_vanishes_at_reference_state() {
        let g = build_grid(10).unwrap();
        let pot = PotentialPair::from_potentials(
            &g,
            Potential::new(PotentialFamily::CosineWell, 1.0),
            Potential::new(PotentialFamily::DoubleWell, 0.4),
        )
        .unwrap();
        let params = SimParams::new(1.0, 1.0, 2.0, 3.0, 0.4, 1.0, pot).unwrap();
        let state = State::new(
            0.0,
            params.potentials.mu_n.map(|m| 2.0 * m),
            params.potentials.mu_p.map(|m| 3.0 * m),
            g.constant(0.5),
        )
        .unwrap();
        assert_abs_diff_eq!(entropy(&state, &params).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_of_empty_electrons() {
        let state = uniform(4, 0.0, 1.0, 0.5);
        assert_abs_diff_eq!(
            entropy(&state, &flat(4, 0.3)).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn entropy_at_zero_eps_matches_srh_entropy() {
        let state = uniform(6, 2.5, 0.3, 0.9);
        let params = flat(6, 0.0);
        assert_eq!(
            entropy(&state, &params).unwrap(),
            entropy_srh(&state.n, &state.p, &params).unwrap()
        );
    }

    #[test]
    fn production_vanishes_at_equilibrium() {
        let g = build_grid(20).unwrap();
        let pot = PotentialPair::from_potentials(
            &g,
            Potential::new(PotentialFamily::PiecewiseLinear, 1.2),
            Potential::new(PotentialFamily::CosineWell, -0.6),
        )
        .unwrap();
        let params = SimParams::new(0.5, 2.0, 1.5, 0.7, 0.2, 1.0, pot).unwrap();
        let eq = solve_equilibrium(&params, 0.4).unwrap();
        let state = State::new(0.0, eq.n_inf.clone(), eq.p_inf.clone(), eq.ntr_field()).unwrap();
        let d = entropy_production(&state, &params).unwrap();
        assert!(d.value.abs() < 1e-12, "{}", d.value);
        assert!(!d.singular);
        assert_abs_diff_eq!(
            relative_entropy(&state, &eq, &params).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            ckp_bound(&state, &eq, &params).unwrap(),
            0.0,
            epsilon = 1e-20
        );
    }

    #[test]
    fn production_of_uniform_state() {
        let d = entropy_production(&uniform(5, 2.0, 1.0, 0.5), &flat(5, 0.1)).unwrap();
        assert_abs_diff_eq!(d.value, 0.5 * LN_2, epsilon = 1e-15);
    }

    #[test]
    fn srh_production_of_uniform_state() {
        let params = flat(5, 0.0);
        let s = uniform(5, 2.0, 1.0, 0.5);
        let d0 = production_srh(&s.n, &s.p, &params).unwrap();
        assert_abs_diff_eq!(d0.value, 0.2 * LN_2, epsilon = 1e-15);
        let reference = uniform(5, 1.0, 1.0, 0.5);
        assert_eq!(
            entropy_srh(&reference.n, &reference.p, &params).unwrap(),
            0.0
        );
        assert_eq!(
            production_srh(&reference.n, &reference.p, &params)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn production_flags_vacuum_cells() {
        let state = State::new(
            0.0,
            Field::new(vec![0.0, 1.0, 2.0]).unwrap(),
            Field::new(vec![1.0, 1.0, 1.0]).unwrap(),
            Field::new(vec![0.0, 0.5, 1.0]).unwrap(),
        )
        .unwrap();
        let d = entropy_production(&state, &flat(3, 1.0)).unwrap();
        assert!(d.singular);
        assert!(d.value.is_finite() && d.value > 0.0);
    }

    #[test]
    fn pinsker_single_species_example() {
        // f = 2, g = 1: 3/8 against 2 ln 2 - 1
        let lhs = 3.0 / (2.0 * 2.0 + 4.0 * 1.0);
        let rhs = boltzmann(2.0, 1.0);
        assert_abs_diff_eq!(rhs, 2.0 * LN_2 - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lhs, 0.375, epsilon = 1e-15);
        assert!(lhs <= rhs);
    }

    #[test]
    fn mass_cap_examples() {
        let params = flat(4, 0.5);
        assert_eq!(l1_mass_cap(&params, 0.0), 2.5);
        assert_eq!(l1_mass_cap(&params, 4.0), 5.5);
    }

    #[test]
    fn relative_entropy_identity_needs_matching_charge() {
        let params = flat(8, 0.5);
        let eq = solve_equilibrium(&params, 0.0).unwrap();
        // n̄ - p̄ + ε n̄tr = 0.3 ≠ 0
        let state = uniform(8, 1.5, 1.4, 0.4);
        let e_inf = entropy(
            &State::new(0.0, eq.n_inf.clone(), eq.p_inf.clone(), eq.ntr_field()).unwrap(),
            &params,
        )
        .unwrap();
        let direct = entropy(&state, &params).unwrap() - e_inf;
        let rel = relative_entropy(&state, &eq, &params).unwrap();
        assert!((direct - rel).abs() > 1e-3);
    }
}
