//! Implicit time integration of the drift-diffusion-recombination system.
//!
//! Both branches solve backward Euler by a Picard iteration whose sub-problems
//! are linear and positivity preserving:
//!
//! * `ε > 0`: the trap ODE is affine in `ntr` at frozen `(n, p)` and is solved
//!   exactly per cell; then `n` and `p` each solve a tridiagonal M-matrix
//!   system with the own-species part of the reaction implicit. After the
//!   iteration has converged, `ntr` is corrected with the rates the carrier
//!   solves actually used, so `n̄ - p̄ + ε n̄tr` is conserved to rounding.
//! * `ε = 0`: the SRH denominator is frozen at the current iterate and the
//!   numerator's own-species-linear part is implicit.
//!
//! On both branches the `n` and `p` solves of one sweep only see the previous
//! iterate, so they are done together in a single tridiagonal pass.
//!
//! At convergence each step is the fully implicit Euler step, which makes the
//! equilibrium an exact fixed point and the entropy non-increasing.

use serde::{Deserialize, Serialize};

use crate::entropy::{entropy, entropy_production, l1_mass_cap, DiagnosticsRow};
use crate::equilibrium::{solve_equilibrium, EquilibriumState};
use crate::error::{Error, Result};
use crate::mesh::{
    check_same_grid, solve_tridiagonal_pair, Field, FluxOperator, TridiagonalSystem,
};
use crate::params::SimParams;
use crate::rates::ntr_eq_cell;

/// Default relative tolerance of the Picard iteration.
pub const DEFAULT_LINEAR_TOL: f64 = 1e-12;
/// Picard sweeps allowed per step before giving up.
pub const MAX_PICARD_ITERATIONS: usize = 200;

/// Slack used by the inline invariant checks.
pub const MASS_TOL: f64 = 1e-10;
pub const MONOTONE_TOL: f64 = 1e-10;
pub const CKP_TOL: f64 = 1e-10;
pub const PRODUCTION_TOL: f64 = 1e-12;

/// Time after which the trapped occupancy must stay strictly inside `(0, 1)`.
pub const RAMP_TIME: f64 = 1.0;

/// A snapshot of the carriers and the trap occupancy.
///
/// On the SRH branch `ntr` holds the slaved occupancy of `(n, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub n: Field,
    pub p: Field,
    pub ntr: Field,
}

impl State {
    pub fn new(t: f64, n: Field, p: Field, ntr: Field) -> Result<Self> {
        check_same_grid(&n, &p)?;
        check_same_grid(&n, &ntr)?;
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidParameter {
                name: "t",
                reason: format!("must be finite and >= 0, got {t}"),
            });
        }
        Ok(Self { t, n, p, ntr })
    }

    /// State sitting on the given equilibrium.
    pub fn from_equilibrium(eq: &EquilibriumState) -> Self {
        Self {
            t: 0.0,
            n: eq.n_inf.clone(),
            p: eq.p_inf.clone(),
            ntr: eq.ntr_field(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n.len()
    }

    /// Conserved charge `n̄ - p̄ + ε n̄tr`.
    pub fn mass(&self, params: &SimParams) -> f64 {
        self.n.average() - self.p.average() + params.eps * self.ntr.average()
    }

    /// Largest cellwise distance to another state in any component.
    pub fn sup_distance(&self, other: &State) -> Result<f64> {
        check_same_grid(&self.n, &other.n)?;
        let d = |a: &Field, b: &Field| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        Ok(d(&self.n, &other.n)
            .max(d(&self.p, &other.p))
            .max(d(&self.ntr, &other.ntr)))
    }

    /// Index of the first cell violating `n, p ≥ 0`, `0 ≤ ntr ≤ 1`.
    pub fn box_violation(&self) -> Option<usize> {
        (0..self.n_cells()).find(|&i| {
            !(self.n[i] >= 0.0 && self.p[i] >= 0.0 && (0.0..=1.0).contains(&self.ntr[i]))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub t_end: f64,
    pub output_every: usize,
    pub linear_tol: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 20.0,
            output_every: 10,
            linear_tol: DEFAULT_LINEAR_TOL,
        }
    }
}

impl StepperConfig {
    pub fn new(dt: f64, t_end: f64, output_every: usize) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            output_every,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {}", self.dt),
            });
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "t_end",
                reason: format!("must be finite and >= 0, got {}", self.t_end),
            });
        }
        if self.output_every == 0 {
            return Err(Error::InvalidParameter {
                name: "output_every",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.linear_tol > 0.0 && self.linear_tol < 1.0) {
            return Err(Error::InvalidParameter {
                name: "linear_tol",
                reason: format!("must lie in (0, 1), got {}", self.linear_tol),
            });
        }
        Ok(())
    }

    /// Number of steps taken to reach `t_end`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Reusable stepping machinery for one parameter set.
pub struct Stepper<'a> {
    params: &'a SimParams,
    cfg: StepperConfig,
    op_n: ImplicitDiffusion,
    op_p: ImplicitDiffusion,
    /// `1/(n₀ μ_n)` and `1/(p₀ μ_p)`.
    inv_scale_n: Vec<f64>,
    inv_scale_p: Vec<f64>,
    /// `1/(τ_n n₀ μ_n)` and `1/(τ_p p₀ μ_p)`.
    kn: Vec<f64>,
    kp: Vec<f64>,
    ws: Workspace,
    history: Option<History>,
    last_iterations: usize,
}

/// Bands of `I - dt L` for one carrier; the reaction sink is added per solve.
/// The diagonal is kept as its left- and right-edge parts so that it is
/// accumulated as `((1 + dt k) + left) + right`.
struct ImplicitDiffusion {
    sub: Vec<f64>,
    sup: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl ImplicitDiffusion {
    fn new(mu: &Field, dt: f64) -> Result<Self> {
        let op = FluxOperator::new(mu)?;
        let m = mu.len();
        let mut sub = vec![0.0; m - 1];
        let mut sup = vec![0.0; m - 1];
        let mut diag = vec![0.0; m];
        op.assemble_implicit(dt, &vec![0.0; m], &mut sub, &mut diag, &mut sup);
        // sub[e] = -a_e/μ_e and sup[e] = -a_e/μ_{e+1}
        let mut left = vec![0.0; m];
        let mut right = vec![0.0; m];
        for e in 0..m - 1 {
            right[e] = -sub[e];
            left[e + 1] = -sup[e];
        }
        Ok(Self {
            sub,
            sup,
            left,
            right,
        })
    }

    /// `-dt L x`, accumulated edge by edge so that the entries sum to zero
    /// up to the rounding of the (small) edge terms.
    fn flux_into(&self, x: &[f64], out: &mut [f64]) {
        let m = out.len();
        let (right, sup, x) = (&self.right[..m - 1], &self.sup[..m - 1], &x[..m]);
        let mut inflow = 0.0;
        for e in 0..m - 1 {
            let t = right[e] * x[e] + sup[e] * x[e + 1];
            out[e] = t - inflow;
            inflow = t;
        }
        out[m - 1] = -inflow;
    }
}

struct Carrier {
    diag: Vec<f64>,
    rhs: Vec<f64>,
    sink: Vec<f64>,
    scratch: Vec<f64>,
    next: Vec<f64>,
    /// `-dt L` applied to the state at the start of the step.
    flux_old: Vec<f64>,
}

impl Carrier {
    fn new(m: usize) -> Self {
        Self {
            diag: vec![0.0; m],
            rhs: vec![0.0; m],
            sink: vec![0.0; m],
            scratch: vec![0.0; m],
            next: vec![0.0; m],
            flux_old: vec![0.0; m],
        }
    }

    fn assemble(&mut self, op: &ImplicitDiffusion, dt: f64) {
        for i in 0..self.diag.len() {
            self.diag[i] = ((1.0 + dt * self.sink[i]) + op.left[i]) + op.right[i];
        }
    }
}

struct Workspace {
    n: Carrier,
    p: Carrier,
    aux: Vec<f64>,
}

impl Workspace {
    fn new(m: usize) -> Self {
        Self {
            n: Carrier::new(m),
            p: Carrier::new(m),
            aux: vec![0.0; m],
        }
    }

    /// Solves `(I - dt L + dt diag(sink)) δ = rhs` for both carriers and
    /// stores `old + δ` in their `next` buffers.
    ///
    /// Working with the increment matters for conservation: the diagonal is
    /// dominated by the diffusion part, so its rounding perturbs the identity
    /// and reaction parts by ~1e-14 relative. Applied to the state that is a
    /// steady charge leak; applied to `δ ~ dt` it is negligible.
    fn solve_pair(
        &mut self,
        op_n: &ImplicitDiffusion,
        op_p: &ImplicitDiffusion,
        dt: f64,
        n_old: &[f64],
        p_old: &[f64],
    ) {
        self.n.assemble(op_n, dt);
        self.p.assemble(op_p, dt);
        let (n, p) = (&mut self.n, &mut self.p);
        solve_tridiagonal_pair(
            TridiagonalSystem {
                sub: &op_n.sub,
                diag: &n.diag,
                sup: &op_n.sup,
                rhs: &n.rhs,
            },
            TridiagonalSystem {
                sub: &op_p.sub,
                diag: &p.diag,
                sup: &op_p.sup,
                rhs: &p.rhs,
            },
            &mut n.next,
            &mut p.next,
            &mut n.scratch,
            &mut p.scratch,
        );
        // the M-matrix keeps the exact update nonnegative; the clamp only
        // removes rounding below zero next to vacuum
        for (x, old) in n.next.iter_mut().zip(n_old) {
            *x = (old + *x).max(0.0);
        }
        for (x, old) in p.next.iter_mut().zip(p_old) {
            *x = (old + *x).max(0.0);
        }
    }

    fn start_step(
        &mut self,
        op_n: &ImplicitDiffusion,
        op_p: &ImplicitDiffusion,
        n_old: &[f64],
        p_old: &[f64],
    ) {
        op_n.flux_into(n_old, &mut self.n.flux_old);
        op_p.flux_into(p_old, &mut self.p.flux_old);
    }
}

/// The last step taken, used to extrapolate the first Picard iterate when the
/// caller continues from the state it was handed.
struct History {
    t: f64,
    n: Vec<f64>,
    p: Vec<f64>,
    guess_n: Vec<f64>,
    guess_p: Vec<f64>,
}

impl History {
    fn guess(&self, s: &State) -> Option<(Vec<f64>, Vec<f64>)> {
        if s.t != self.t || s.n.values() != self.n.as_slice() || s.p.values() != self.p.as_slice() {
            return None;
        }
        Some((self.guess_n.clone(), self.guess_p.clone()))
    }

    fn record(slot: &mut Option<History>, before: &State, after: &State) {
        let h = slot.get_or_insert_with(|| History {
            t: 0.0,
            n: Vec::new(),
            p: Vec::new(),
            guess_n: Vec::new(),
            guess_p: Vec::new(),
        });
        h.t = after.t;
        let extrapolate = |out: &mut Vec<f64>, last: &mut Vec<f64>, a: &Field, b: &Field| {
            last.clear();
            last.extend_from_slice(a.values());
            out.clear();
            out.extend(a.iter().zip(b).map(|(x, y)| (x + (x - y)).max(0.0)));
        };
        extrapolate(&mut h.guess_n, &mut h.n, &after.n, &before.n);
        extrapolate(&mut h.guess_p, &mut h.p, &after.p, &before.p);
    }
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (a, b) in new.iter().zip(old) {
        // NaN never wins a comparison; non-finite iterates are caught after
        // the step
        let d = (a - b).abs();
        if d > diff {
            diff = d;
        }
        if a.abs() > scale {
            scale = a.abs();
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

impl<'a> Stepper<'a> {
    pub fn new(params: &'a SimParams, cfg: StepperConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let pot = &params.potentials;
        Ok(Self {
            params,
            cfg,
            op_n: ImplicitDiffusion::new(&pot.mu_n, cfg.dt)?,
            op_p: ImplicitDiffusion::new(&pot.mu_p, cfg.dt)?,
            inv_scale_n: pot.mu_n.iter().map(|m| 1.0 / (params.n0 * m)).collect(),
            inv_scale_p: pot.mu_p.iter().map(|m| 1.0 / (params.p0 * m)).collect(),
            kn: pot
                .mu_n
                .iter()
                .map(|m| 1.0 / (params.n0 * m) * (1.0 / params.tau_n))
                .collect(),
            kp: pot
                .mu_p
                .iter()
                .map(|m| 1.0 / (params.p0 * m) * (1.0 / params.tau_p))
                .collect(),
            ws: Workspace::new(params.n_cells()),
            history: None,
            last_iterations: 0,
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    /// Picard sweeps used by the most recent step.
    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    /// Advances one step on the branch selected by `ε`.
    pub fn advance(&mut self, state: &State) -> Result<State> {
        check_same_grid(&state.n, &self.params.potentials.mu_n)?;
        check_same_grid(&state.n, &state.p)?;
        check_same_grid(&state.n, &state.ntr)?;
        let next = if self.params.is_srh() {
            self.advance_srh(state)?
        } else {
            self.advance_trap(state)?
        };
        if !(next.n.is_all_finite() && next.p.is_all_finite() && next.ntr.is_all_finite()) {
            return Err(self.breakdown(state.t, "non-finite values"));
        }
        History::record(&mut self.history, state, &next);
        Ok(next)
    }

    fn initial_iterate(&self, s: &State) -> (Vec<f64>, Vec<f64>) {
        self.history
            .as_ref()
            .and_then(|h| h.guess(s))
            .unwrap_or_else(|| (s.n.values().to_vec(), s.p.values().to_vec()))
    }

    fn breakdown(&self, t: f64, reason: &str) -> Error {
        Error::SolverBreakdown {
            t,
            reason: reason.to_string(),
        }
    }

    fn advance_trap(&mut self, s: &State) -> Result<State> {
        let SimParams {
            tau_n, tau_p, eps, ..
        } = *self.params;
        let dt = self.cfg.dt;
        let m = s.n_cells();
        let (n_old, p_old, t_old) = (s.n.values(), s.p.values(), s.ntr.values());

        let (mut n_it, mut p_it) = self.initial_iterate(s);
        let mut ntr = vec![0.0; m];
        let (rn, rp) = (1.0 / tau_n, 1.0 / tau_p);
        // ν/τ_n = n·kn and π/τ_p = p·kp
        let (kn, kp) = (&self.kn, &self.kp);
        let ws = &mut self.ws;
        ws.start_step(&self.op_n, &self.op_p, n_old, p_old);

        let mut converged = false;
        for iter in 1..=MAX_PICARD_ITERATIONS {
            {
                // bounds-checked once here rather than per cell
                let (n_it, p_it, kn, kp) = (&n_it[..m], &p_it[..m], &kn[..m], &kp[..m]);
                let (n_old, p_old, t_old, ntr) =
                    (&n_old[..m], &p_old[..m], &t_old[..m], &mut ntr[..m]);
                let (n_sink, n_rhs, n_flux) =
                    (&mut ws.n.sink[..m], &mut ws.n.rhs[..m], &ws.n.flux_old[..m]);
                let (p_sink, p_rhs, p_flux) =
                    (&mut ws.p.sink[..m], &mut ws.p.rhs[..m], &ws.p.flux_old[..m]);
                for i in 0..m {
                    let nu_rate = n_it[i] * kn[i];
                    let gain = rp + nu_rate;
                    let loss = rp + rn + p_it[i] * kp[i] + nu_rate;
                    ntr[i] = (eps * t_old[i] + dt * gain) / (eps + dt * loss);
                    n_sink[i] = (1.0 - ntr[i]) * kn[i];
                    n_rhs[i] = dt * (ntr[i] * rn - n_sink[i] * n_old[i]) - n_flux[i];
                    p_sink[i] = ntr[i] * kp[i];
                    p_rhs[i] = dt * ((1.0 - ntr[i]) * rp - p_sink[i] * p_old[i]) - p_flux[i];
                }
            }
            ws.solve_pair(&self.op_n, &self.op_p, dt, n_old, p_old);

            let change = relative_change(&ws.n.next, &n_it).max(relative_change(&ws.p.next, &p_it));
            if !change.is_finite() {
                return Err(self.breakdown(s.t, "non-finite Picard iterate"));
            }
            // keep the previous iterate in `next` for the trap correction
            std::mem::swap(&mut n_it, &mut ws.n.next);
            std::mem::swap(&mut p_it, &mut ws.p.next);
            if change <= self.cfg.linear_tol {
                self.last_iterations = iter;
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(self.breakdown(s.t, "Picard iteration did not converge"));
        }

        // ntr already balances the trap equation against the previous
        // iterate; shift it by the rate change of the final carrier update.
        let (n_prev, p_prev) = (&ws.n.next, &ws.p.next);
        for i in 0..m {
            let dn = (n_it[i] - n_prev[i]) * (1.0 - ntr[i]) * kn[i];
            let dp = -(p_it[i] - p_prev[i]) * ntr[i] * kp[i];
            ntr[i] = (ntr[i] + dt / eps * (dp - dn)).clamp(0.0, 1.0);
        }

        Ok(State {
            t: s.t + dt,
            n: Field::from_vec(n_it),
            p: Field::from_vec(p_it),
            ntr: Field::from_vec(ntr),
        })
    }

    fn advance_srh(&mut self, s: &State) -> Result<State> {
        let SimParams { tau_n, tau_p, .. } = *self.params;
        let dt = self.cfg.dt;
        let m = s.n_cells();
        let (n_old, p_old) = (s.n.values(), s.p.values());
        let (sn, sp) = (&self.inv_scale_n, &self.inv_scale_p);

        let (mut n_it, mut p_it) = self.initial_iterate(s);
        let ws = &mut self.ws;
        ws.start_step(&self.op_n, &self.op_p, n_old, p_old);

        let mut converged = false;
        for iter in 1..=MAX_PICARD_ITERATIONS {
            {
                // bounds-checked once here rather than per cell
                let (n_it, p_it, sn, sp) = (&n_it[..m], &p_it[..m], &sn[..m], &sp[..m]);
                let (n_old, p_old, aux) = (&n_old[..m], &p_old[..m], &mut ws.aux[..m]);
                let (n_sink, n_rhs, n_flux) =
                    (&mut ws.n.sink[..m], &mut ws.n.rhs[..m], &ws.n.flux_old[..m]);
                let (p_sink, p_rhs, p_flux) =
                    (&mut ws.p.sink[..m], &mut ws.p.rhs[..m], &ws.p.flux_old[..m]);
                for i in 0..m {
                    let pi = p_it[i] * sp[i];
                    let nu = n_it[i] * sn[i];
                    let inv_den = 1.0 / (tau_n * (1.0 + pi) + tau_p * (1.0 + nu));
                    aux[i] = inv_den;
                    n_sink[i] = pi * sn[i] * inv_den;
                    n_rhs[i] = dt * (inv_den - n_sink[i] * n_old[i]) - n_flux[i];
                    p_sink[i] = nu * sp[i] * inv_den;
                    p_rhs[i] = dt * (inv_den - p_sink[i] * p_old[i]) - p_flux[i];
                }
            }
            ws.solve_pair(&self.op_n, &self.op_p, dt, n_old, p_old);

            let change = relative_change(&ws.n.next, &n_it).max(relative_change(&ws.p.next, &p_it));
            if !change.is_finite() {
                return Err(self.breakdown(s.t, "non-finite Picard iterate"));
            }
            std::mem::swap(&mut n_it, &mut ws.n.next);
            std::mem::swap(&mut p_it, &mut ws.p.next);
            if change <= self.cfg.linear_tol {
                self.last_iterations = iter;
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(self.breakdown(s.t, "Picard iteration did not converge"));
        }

        let ntr = (0..m)
            .map(|i| ntr_eq_cell(n_it[i] * sn[i], p_it[i] * sp[i], tau_n, tau_p))
            .collect();
        Ok(State {
            t: s.t + dt,
            n: Field::from_vec(n_it),
            p: Field::from_vec(p_it),
            ntr: Field::from_vec(ntr),
        })
    }
}

/// One step of the trap-assisted system (`ε > 0`).
pub fn step(state: &State, params: &SimParams, cfg: &StepperConfig) -> Result<State> {
    if params.is_srh() {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: "trap stepper needs eps > 0".into(),
        });
    }
    Stepper::new(params, *cfg)?.advance(state)
}

/// One step of the SRH system (`ε = 0`).
pub fn step_srh(state: &State, params: &SimParams, cfg: &StepperConfig) -> Result<State> {
    if !params.is_srh() {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: "SRH stepper needs eps = 0".into(),
        });
    }
    Stepper::new(params, *cfg)?.advance(state)
}

/// Invariants tracked along a run. Counters count offending steps or rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub initial_mass: f64,
    pub max_mass_drift: f64,
    pub min_n: f64,
    pub min_p: f64,
    pub min_ntr: f64,
    pub max_ntr: f64,
    /// Range of `ntr` over all steps with `t ≥ RAMP_TIME`.
    pub late_ntr_range: Option<(f64, f64)>,
    pub initial_entropy: f64,
    pub mass_cap: f64,
    pub max_nbar: f64,
    pub max_pbar: f64,
    pub max_picard_iterations: usize,
    pub total_picard_iterations: usize,
    pub conservation_violations: usize,
    pub box_violations: usize,
    pub monotonicity_violations: usize,
    pub negative_production: usize,
    pub ckp_violations: usize,
    pub mass_cap_violations: usize,
    pub singular_rows: usize,
}

impl InvariantSummary {
    fn new(initial: &State, params: &SimParams) -> Result<Self> {
        let e0 = entropy(initial, params)?;
        Ok(Self {
            initial_mass: initial.mass(params),
            max_mass_drift: 0.0,
            min_n: initial.n.min(),
            min_p: initial.p.min(),
            min_ntr: initial.ntr.min(),
            max_ntr: initial.ntr.max(),
            late_ntr_range: None,
            initial_entropy: e0,
            mass_cap: l1_mass_cap(params, e0),
            max_nbar: initial.n.average(),
            max_pbar: initial.p.average(),
            max_picard_iterations: 0,
            total_picard_iterations: 0,
            conservation_violations: 0,
            box_violations: 0,
            monotonicity_violations: 0,
            negative_production: 0,
            ckp_violations: 0,
            mass_cap_violations: 0,
            singular_rows: 0,
        })
    }

    fn observe_step(&mut self, s: &State, params: &SimParams) {
        let drift = (s.mass(params) - self.initial_mass).abs();
        self.max_mass_drift = self.max_mass_drift.max(drift);
        if drift > MASS_TOL {
            self.conservation_violations += 1;
        }
        if s.box_violation().is_some() {
            self.box_violations += 1;
        }
        let (lo, hi) = (s.ntr.min(), s.ntr.max());
        self.min_n = self.min_n.min(s.n.min());
        self.min_p = self.min_p.min(s.p.min());
        self.min_ntr = self.min_ntr.min(lo);
        self.max_ntr = self.max_ntr.max(hi);
        if s.t >= RAMP_TIME - 1e-12 {
            self.late_ntr_range = Some(match self.late_ntr_range {
                None => (lo, hi),
                Some((a, b)) => (a.min(lo), b.max(hi)),
            });
        }
    }

    fn observe_row(&mut self, row: &DiagnosticsRow, previous: Option<&DiagnosticsRow>) {
        if let Some(prev) = previous {
            if row.e > prev.e + MONOTONE_TOL {
                self.monotonicity_violations += 1;
            }
        }
        if row.d < -PRODUCTION_TOL {
            self.negative_production += 1;
        }
        if row.e_rel < row.ckp - CKP_TOL {
            self.ckp_violations += 1;
        }
        self.max_nbar = self.max_nbar.max(row.nbar);
        self.max_pbar = self.max_pbar.max(row.pbar);
        if row.nbar > self.mass_cap || row.pbar > self.mass_cap {
            self.mass_cap_violations += 1;
        }
        if row.singular_flag {
            self.singular_rows += 1;
        }
    }

    /// Total count of invariant violations (singular rows are not violations).
    pub fn violation_count(&self) -> usize {
        self.conservation_violations
            + self.box_violations
            + self.monotonicity_violations
            + self.negative_production
            + self.ckp_violations
            + self.mass_cap_violations
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub rows: Vec<DiagnosticsRow>,
    pub final_state: State,
    pub equilibrium: EquilibriumState,
    pub summary: InvariantSummary,
}

/// Runs to `t_end`, recording a diagnostics row every `output_every` steps.
pub fn simulate(initial: &State, params: &SimParams, cfg: &StepperConfig) -> Result<Trajectory> {
    simulate_with(initial, params, cfg, |_| {})
}

/// As [`simulate`], additionally handing every intermediate state to `visit`.
pub fn simulate_with(
    initial: &State,
    params: &SimParams,
    cfg: &StepperConfig,
    mut visit: impl FnMut(&State),
) -> Result<Trajectory> {
    let mut stepper = Stepper::new(params, *cfg)?;
    check_same_grid(&initial.n, &params.potentials.mu_n)?;
    let eq = solve_equilibrium(params, initial.mass(params))?;
    let mut summary = InvariantSummary::new(initial, params)?;
    let n_steps = cfg.n_steps();
    let mut rows = Vec::with_capacity(n_steps / cfg.output_every + 1);
    let mut state = initial.clone();
    for k in 1..=n_steps {
        state = stepper.advance(&state)?;
        summary.max_picard_iterations =
            summary.max_picard_iterations.max(stepper.last_iterations());
        summary.total_picard_iterations += stepper.last_iterations();
        summary.observe_step(&state, params);
        visit(&state);
        if k % cfg.output_every == 0 {
            let row = DiagnosticsRow::evaluate(&state, &eq, params)?;
            summary.observe_row(&row, rows.last());
            rows.push(row);
        }
    }
    Ok(Trajectory {
        rows,
        final_state: state,
        equilibrium: eq,
        summary,
    })
}

/// Defect of the entropy balance `E(b) - E(a) + ∫_a^b D = 0` along the
/// discrete trajectory, with `∫D` by the trapezoid rule over the steps, divided
/// by `b - a`. First order in `dt` for the implicit scheme.
pub fn weak_law_residual(
    initial: &State,
    params: &SimParams,
    dt: f64,
    window: (f64, f64),
) -> Result<f64> {
    let (a, b) = window;
    if !(0.0 <= a && a < b) {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("need 0 <= a < b, got ({a}, {b})"),
        });
    }
    let cfg = StepperConfig::new(dt, b, 1)?;
    let first = (a / dt).round() as usize;
    let mut stepper = Stepper::new(params, cfg)?;
    let mut state = initial.clone();
    let mut opening = None;
    let mut integral = 0.0;
    let mut d_prev = 0.0;
    for k in 0..=cfg.n_steps() {
        if k > 0 {
            state = stepper.advance(&state)?;
        }
        if k < first {
            continue;
        }
        let d = entropy_production(&state, params)?.value;
        match opening {
            None => opening = Some(entropy(&state, params)?),
            Some(_) => integral += 0.5 * dt * (d_prev + d),
        }
        d_prev = d;
    }
    let e_a = opening.expect("window contains at least one step");
    Ok((entropy(&state, params)? - e_a + integral).abs() / (b - a))
}
