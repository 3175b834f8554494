//! Monte-Carlo checks of the functional inequalities behind the convergence
//! estimates.
//!
//! Two kinds of checks live here. Exact checks carry a known constant and must
//! never fail: indirect diffusion transfer (factor 4), reaction domination
//! (factor 1), the Pinsker bound and the mass identity. Empirical checks have
//! an existential constant; for those the suite reports the supremum of
//! `lhs / rhs` over the samples, which is a lower estimate of the constant.
//!
//! Every sample is drawn from its own ChaCha8 stream, `(seed, index)`, so a
//! suite is reproducible and any single sample can be regenerated.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::entropy::{
    boltzmann, carrier_flux_production, ckp_bound, entropy_production, relative_entropy,
};
use crate::equilibrium::{solve_equilibrium, EquilibriumState};
use crate::error::{Error, Result};
use crate::mesh::{check_same_grid, gradient_norm_sq, variance, Field};
use crate::params::SimParams;
use crate::rates::{ntr_quasi_equilibrium, rn_cell, rp_cell};

/// Sampled occupancies stay this far from 0 and 1.
pub const TRAP_MARGIN: f64 = 1e-3;
pub const MAX_ATTEMPTS: usize = 100;
/// Charge residual allowed in a sampled state.
pub const SAMPLE_RESIDUAL_TOL: f64 = 1e-12;
/// Residual allowed in the constraints handed to the EEP checks.
pub const CONSTRAINT_TOL: f64 = 1e-10;
pub const UNIT_CIRCLE_TOL: f64 = 1e-14;
/// Right-hand sides below this count as zero.
pub const ZERO_RHS: f64 = 1e-14;
/// With a zero right-hand side, a left side above this is a violation.
pub const ZERO_LHS: f64 = 1e-10;
pub const MASS_IDENTITY_TOL: f64 = 1e-10;
const EXACT_REL_SLACK: f64 = 1e-12;
const EXACT_ABS_SLACK: f64 = 1e-15;
/// Violations kept in full per suite; the rest are only counted.
pub const MAX_RECORDS: usize = 16;

// bounds of the flux-lemma weight g
const FLUX_GAMMA: f64 = 0.5;
const FLUX_GAMMA_SUP: f64 = 4.0;
const LOGSOB_MODES: usize = 4;
const FLUX_MODES: usize = 2;

#[inline]
fn exact_fails(lhs: f64, rhs: f64) -> bool {
    !(lhs <= rhs * (1.0 + EXACT_REL_SLACK) + EXACT_ABS_SLACK)
}

/// Result of one sample of an inequality `lhs ≤ C rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Ratio {
        value: f64,
    },
    /// Both sides vanish (an equilibrium-like sample); carries no information.
    Excluded,
    Violation {
        lhs: f64,
        rhs: f64,
    },
}

impl Outcome {
    fn empirical(lhs: f64, rhs: f64) -> Self {
        if !(lhs.is_finite() && rhs.is_finite()) {
            Outcome::Violation { lhs, rhs }
        } else if rhs <= ZERO_RHS {
            if lhs <= ZERO_LHS {
                Outcome::Excluded
            } else {
                Outcome::Violation { lhs, rhs }
            }
        } else {
            Outcome::Ratio { value: lhs / rhs }
        }
    }

    fn exact(lhs: f64, rhs: f64) -> Self {
        if exact_fails(lhs, rhs) {
            Outcome::Violation { lhs, rhs }
        } else if rhs > 0.0 {
            Outcome::Ratio { value: lhs / rhs }
        } else {
            Outcome::Excluded
        }
    }

    pub fn is_violation(&self) -> bool {
        matches!(self, Outcome::Violation { .. })
    }
}

/// A sampled state of charge `mass` with `n̄, p̄ ≤ M₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleState {
    pub state: State,
    pub mass: f64,
    pub seed: u64,
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

/// Positive shape with a log-uniform spread of the per-cell log-amplitudes.
fn rough_shape(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let spread = log_uniform(rng, 1e-3, 3.0);
    (0..len)
        .map(|_| (spread * rng.gen_range(-1.0..=1.0)).exp())
        .collect()
}

/// Random combination of the first `modes` cosine modes, scaled to sup norm 1.
fn smooth_profile(rng: &mut impl Rng, len: usize, modes: usize) -> Vec<f64> {
    let coeffs: Vec<f64> = (1..=modes)
        .map(|k| rng.gen_range(-1.0..=1.0) / k as f64)
        .collect();
    let h = 1.0 / len as f64;
    let mut s: Vec<f64> = (0..len)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * x).cos())
                .sum()
        })
        .collect();
    let sup = s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if sup > 0.0 {
        s.iter_mut().for_each(|v| *v /= sup);
    }
    s
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn rescale(v: &mut [f64], target: f64) {
    let factor = target / mean(v);
    v.iter_mut().for_each(|x| *x *= factor);
}

/// `h Σ f_i²` over an iterator of cell values.
fn norm_sq(len: usize, values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>() / len as f64
}

/// Draws an admissible state of charge `mass` with `n̄ ≤ M₁/2` and `p̄ ≤ M₁`.
///
/// Occupancies are uniform in `[δ, 1-δ]`, carrier shapes log-uniform per cell.
/// `n̄` is drawn from the interval that keeps `p̄ = n̄ + ε n̄tr - M` inside
/// `(0, M₁]`. On the SRH branch the occupancy is the slaved one.
pub fn sample_admissible(
    params: &SimParams,
    mass: f64,
    m1: f64,
    seed: u64,
) -> Result<AdmissibleState> {
    sample_admissible_with(&mut stream(seed, 0), params, mass, m1, seed)
}

fn sample_admissible_with(
    rng: &mut ChaCha8Rng,
    params: &SimParams,
    mass: f64,
    m1: f64,
    seed: u64,
) -> Result<AdmissibleState> {
    if !(m1 > 0.0 && m1.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "m1",
            reason: format!("must be finite and > 0, got {m1}"),
        });
    }
    let len = params.n_cells();
    let eps = params.eps;
    for _ in 0..MAX_ATTEMPTS {
        let ntr: Vec<f64> = (0..len)
            .map(|_| rng.gen_range(TRAP_MARGIN..=1.0 - TRAP_MARGIN))
            .collect();
        let trapped = if params.is_srh() {
            0.0
        } else {
            eps * mean(&ntr)
        };
        let lo = (mass - trapped).max(0.0);
        let hi = (0.5 * m1).min(m1 + mass - trapped);
        if !(lo < hi) {
            continue;
        }
        let nbar = rng.gen_range(lo..hi);
        let pbar = nbar + trapped - mass;
        if !(pbar > 0.0 && pbar <= m1 && nbar > 0.0) {
            continue;
        }
        let mut n = rough_shape(rng, len);
        rescale(&mut n, nbar);
        let mut p = rough_shape(rng, len);
        rescale(&mut p, pbar);
        let (n, p) = (Field::new(n)?, Field::new(p)?);
        let ntr = if params.is_srh() {
            ntr_quasi_equilibrium(&n, &p, params)?
        } else {
            Field::new(ntr)?
        };
        let state = State::new(0.0, n, p, ntr)?;
        let residual = (state.mass(params) - mass).abs();
        if residual > SAMPLE_RESIDUAL_TOL * mass.abs().max(1.0) {
            return Err(Error::ConstraintResidual {
                residual,
                tolerance: SAMPLE_RESIDUAL_TOL,
            });
        }
        return Ok(AdmissibleState { state, mass, seed });
    }
    Err(Error::Infeasible(format!(
        "no state of charge {mass} with n̄ ≤ {} and p̄ ≤ {m1} after {MAX_ATTEMPTS} attempts",
        0.5 * m1
    )))
}

/// `(E - E∞) / D` for an admissible state in `eq`'s charge class.
pub fn eep_ratio(
    state: &AdmissibleState,
    eq: &EquilibriumState,
    params: &SimParams,
) -> Result<Outcome> {
    let e_rel = relative_entropy(&state.state, eq, params)?;
    let d = entropy_production(&state.state, params)?.value;
    Ok(Outcome::empirical(e_rel, d))
}

/// Square roots of the scaled equilibrium values `(ν∞, π∞, ν_tr∞, ν'_tr∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRoots {
    pub nu: f64,
    pub pi: f64,
    pub nu_tr: f64,
    pub nu_tr_prime: f64,
}

impl EquilibriumRoots {
    pub fn new(eq: &EquilibriumState, params: &SimParams) -> Self {
        Self {
            nu: (eq.n_star / params.n0).sqrt(),
            pi: (eq.p_star / params.p0).sqrt(),
            nu_tr: eq.ntr_inf.sqrt(),
            nu_tr_prime: (1.0 - eq.ntr_inf).sqrt(),
        }
    }
}

/// Square-root variables `a = √ν`, `b = √π`, `c = √ntr`, `d = √(1-ntr)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub a: Field,
    pub b: Field,
    pub c: Field,
    pub d: Field,
}

impl QuadState {
    pub fn new(a: Field, b: Field, c: Field, d: Field) -> Result<Self> {
        check_same_grid(&a, &b)?;
        check_same_grid(&a, &c)?;
        check_same_grid(&a, &d)?;
        for f in [&a, &b, &c, &d] {
            if let Some(i) = f.iter().position(|&v| v < 0.0) {
                return Err(Error::BoundaryState(i));
            }
        }
        let residual = c
            .iter()
            .zip(d.iter())
            .fold(0.0_f64, |r, (c, d)| r.max((c * c + d * d - 1.0).abs()));
        if residual > UNIT_CIRCLE_TOL {
            return Err(Error::ConstraintResidual {
                residual,
                tolerance: UNIT_CIRCLE_TOL,
            });
        }
        Ok(Self { a, b, c, d })
    }

    pub fn from_state(state: &State, params: &SimParams) -> Result<Self> {
        let pot = &params.potentials;
        check_same_grid(&state.n, &pot.mu_n)?;
        let a = state
            .n
            .zip_map(&pot.mu_n, |n, m| (n / (params.n0 * m)).sqrt())?;
        let b = state
            .p
            .zip_map(&pot.mu_p, |p, m| (p / (params.p0 * m)).sqrt())?;
        let c = state.ntr.map(f64::sqrt);
        let d = state.ntr.map(|t| (1.0 - t).sqrt());
        Self::new(a, b, c, d)
    }

    /// The constant state at the equilibrium roots.
    pub fn equilibrium(eq: &EquilibriumState, params: &SimParams) -> Self {
        let r = EquilibriumRoots::new(eq, params);
        let konst = |v: f64| eq.n_inf.map(|_| v);
        Self {
            a: konst(r.nu),
            b: konst(r.pi),
            c: konst(r.nu_tr),
            d: konst(r.nu_tr_prime),
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `(‖ad - c‖², ‖bc - d‖²)`.
    fn reaction_norms(&self) -> (f64, f64) {
        let len = self.len();
        let cells = || {
            self.a
                .iter()
                .zip(self.b.iter())
                .zip(self.c.iter().zip(self.d.iter()))
        };
        let ad_c = norm_sq(len, cells().map(|((a, _), (c, d))| a * d - c));
        let bc_d = norm_sq(len, cells().map(|((_, b), (c, d))| b * c - d));
        (ad_c, bc_d)
    }
}

/// Both sides of the homogeneous inequality
/// `(a-ν∞)² + (b-π∞)² + (c-ν_tr∞)² ≤ C ((ad-c)² + (bc-d)²)` with `C = 1`.
///
/// The constants must satisfy `n₀μ̄_n a² - p₀μ̄_p b² + ε c² = M` and
/// `c² + d² = 1`, with `M` the charge of `eq`.
pub fn homogeneous_eep_check(
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    params: &SimParams,
    eq: &EquilibriumState,
) -> Result<(f64, f64)> {
    if [a, b, c, d].iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "abcd",
            reason: format!("must be nonnegative, got ({a}, {b}, {c}, {d})"),
        });
    }
    let pot = &params.potentials;
    let charge = params.n0 * pot.mu_n_bar() * a * a - params.p0 * pot.mu_p_bar() * b * b
        + params.eps * c * c;
    let residual = (charge - eq.mass).abs().max((c * c + d * d - 1.0).abs());
    if residual > CONSTRAINT_TOL {
        return Err(Error::ConstraintResidual {
            residual,
            tolerance: CONSTRAINT_TOL,
        });
    }
    let r = EquilibriumRoots::new(eq, params);
    let lhs = (a - r.nu).powi(2) + (b - r.pi).powi(2) + (c - r.nu_tr).powi(2);
    let rhs = (a * d - c).powi(2) + (b * c - d).powi(2);
    Ok((lhs, rhs))
}

/// Both sides of the inhomogeneous EEP inequality with `C = 1`.
///
/// `rhs = ‖ad-c‖² + ‖bc-d‖² + ‖∇a‖² + ‖∇b‖² + Σ ‖x - x̄‖²` over `x ∈ {a,b,c,d}`.
pub fn inhomogeneous_eep_check(
    q: &QuadState,
    params: &SimParams,
    eq: &EquilibriumState,
) -> Result<(f64, f64)> {
    let pot = &params.potentials;
    check_same_grid(&q.a, &pot.mu_n)?;
    let len = q.len();
    let a2 = norm_sq(len, q.a.iter().copied());
    let b2 = norm_sq(len, q.b.iter().copied());
    let c2 = norm_sq(len, q.c.iter().copied());
    let d2 = norm_sq(len, q.d.iter().copied());
    let mu_a2 =
        q.a.iter()
            .zip(pot.mu_n.iter())
            .map(|(a, m)| m * a * a)
            .sum::<f64>()
            / len as f64;
    let mu_b2 =
        q.b.iter()
            .zip(pot.mu_p.iter())
            .map(|(b, m)| m * b * b)
            .sum::<f64>()
            / len as f64;
    let charge = params.n0 * mu_a2 - params.p0 * mu_b2 + params.eps * c2;
    let residual = (charge - eq.mass).abs().max((c2 + d2 - 1.0).abs());
    if residual > CONSTRAINT_TOL {
        return Err(Error::ConstraintResidual {
            residual,
            tolerance: CONSTRAINT_TOL,
        });
    }
    let r = EquilibriumRoots::new(eq, params);
    let lhs = (a2.sqrt() - r.nu).powi(2)
        + (b2.sqrt() - r.pi).powi(2)
        + norm_sq(len, q.c.iter().map(|c| c - r.nu_tr));
    let (ad_c, bc_d) = q.reaction_norms();
    let rhs = ad_c
        + bc_d
        + gradient_norm_sq(&q.a)
        + gradient_norm_sq(&q.b)
        + variance(&q.a)
        + variance(&q.b)
        + variance(&q.c)
        + variance(&q.d);
    Ok((lhs, rhs))
}

/// Both pairs of the indirect diffusion transfer inequalities
/// `‖c - c̄‖² ≤ 4(‖bc - d‖² + ‖b - b̄‖²)` and `‖d - d̄‖² ≤ 4(‖ad - c‖² + ‖a - ā‖²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTransfer {
    pub lhs_c: f64,
    pub rhs_c: f64,
    pub lhs_d: f64,
    pub rhs_d: f64,
}

impl DiffusionTransfer {
    pub fn holds(&self) -> bool {
        !exact_fails(self.lhs_c, self.rhs_c) && !exact_fails(self.lhs_d, self.rhs_d)
    }
}

pub fn indirect_diffusion_check(q: &QuadState) -> DiffusionTransfer {
    let (ad_c, bc_d) = q.reaction_norms();
    DiffusionTransfer {
        lhs_c: variance(&q.c),
        rhs_c: 4.0 * (bc_d + variance(&q.b)),
        lhs_d: variance(&q.d),
        rhs_d: 4.0 * (ad_c + variance(&q.a)),
    }
}

/// `lhs = (f̄/ḡ - avg(f/g))²`, `rhs = ‖∇√(f/g)‖²`.
pub fn flux_lemma_check(f: &Field, g: &Field) -> Result<(f64, f64)> {
    check_same_grid(f, g)?;
    if let Some(cell) = g.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveWeight {
            cell,
            value: g[cell],
        });
    }
    if let Some(i) = f.iter().position(|&v| v < 0.0) {
        return Err(Error::BoundaryState(i));
    }
    let ratio = f.zip_map(g, |f, g| f / g)?;
    let lhs = (f.average() / g.average() - ratio.average()).powi(2);
    let rhs = gradient_norm_sq(&ratio.map(f64::sqrt));
    Ok((lhs, rhs))
}

/// `lhs = ∫ n ln(ñ/μ̃_n)` with both tildes normalised to mass one,
/// `rhs = ∫ |J_n|²/n`.
pub fn logsob_ratio_check(n: &Field, params: &SimParams) -> Result<(f64, f64)> {
    let mu = &params.potentials.mu_n;
    check_same_grid(n, mu)?;
    if let Some(i) = n.iter().position(|&v| v < 0.0) {
        return Err(Error::BoundaryState(i));
    }
    let (nbar, mubar) = (n.average(), mu.average());
    if !(nbar > 0.0) {
        return Ok((0.0, 0.0));
    }
    // ∫ñ = ∫μ̃ = 1, so ∫ ñ ln(ñ/μ̃) is a sum of nonnegative Boltzmann terms
    let lhs = nbar
        * n.iter()
            .zip(mu.iter())
            .map(|(n, m)| boltzmann(n / nbar, m / mubar))
            .sum::<f64>()
        / n.len() as f64;
    let rhs = carrier_flux_production(n, mu)?.value;
    Ok((lhs, rhs))
}

/// Both pairs of the reaction domination inequalities
/// `‖√(ν ntr') - √ntr‖² ≤ -τ_n ∫ R_n ln(ν ntr'/ntr)` and
/// `‖√(π ntr) - √ntr'‖² ≤ -τ_p ∫ R_p ln(π ntr/ntr')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionDomination {
    pub lhs_n: f64,
    pub rhs_n: f64,
    pub lhs_p: f64,
    pub rhs_p: f64,
}

impl ReactionDomination {
    pub fn holds(&self) -> bool {
        !exact_fails(self.lhs_n, self.rhs_n) && !exact_fails(self.lhs_p, self.rhs_p)
    }
}

/// Requires an interior state: `n, p > 0` and `ntr ∈ (0, 1)`.
pub fn reaction_domination_check(state: &State, params: &SimParams) -> Result<ReactionDomination> {
    let pot = &params.potentials;
    check_same_grid(&state.n, &pot.mu_n)?;
    let mut out = ReactionDomination {
        lhs_n: 0.0,
        rhs_n: 0.0,
        lhs_p: 0.0,
        rhs_p: 0.0,
    };
    for i in 0..state.n_cells() {
        let (n, p, t) = (state.n[i], state.p[i], state.ntr[i]);
        if !(n > 0.0 && p > 0.0 && t > 0.0 && t < 1.0) {
            return Err(Error::BoundaryState(i));
        }
        let nu = n / (params.n0 * pot.mu_n[i]);
        let pi = p / (params.p0 * pot.mu_p[i]);
        let s = 1.0 - t;
        out.lhs_n += ((nu * s).sqrt() - t.sqrt()).powi(2);
        out.rhs_n -= params.tau_n * rn_cell(nu, t, params.tau_n) * (nu * s / t).ln();
        out.lhs_p += ((pi * t).sqrt() - s.sqrt()).powi(2);
        out.rhs_p -= params.tau_p * rp_cell(pi, t, params.tau_p) * (pi * t / s).ln();
    }
    let h = state.n.h();
    out.lhs_n *= h;
    out.rhs_n *= h;
    out.lhs_p *= h;
    out.rhs_p *= h;
    Ok(out)
}

/// Residual of `(n̄-n̄∞) ln(n*/n₀) + (p̄-p̄∞) ln(p*/p₀) - ε (n̄tr-ntr∞) ln((1-ntr∞)/ntr∞)`,
/// which vanishes on `eq`'s charge class.
pub fn mass_identity_check(
    state: &State,
    eq: &EquilibriumState,
    params: &SimParams,
) -> Result<f64> {
    check_same_grid(&state.n, &eq.n_inf)?;
    let t_inf = eq.ntr_inf;
    let value = (state.n.average() - eq.n_inf.average()) * (eq.n_star / params.n0).ln()
        + (state.p.average() - eq.p_inf.average()) * (eq.p_star / params.p0).ln()
        - params.eps * (state.ntr.average() - t_inf) * ((1.0 - t_inf) / t_inf).ln();
    Ok(value.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Eep,
    Homogeneous,
    Inhomogeneous,
    FluxLemma,
    LogSobolev,
    IndirectDiffusion,
    ReactionDomination,
    Ckp,
    MassIdentity,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::Eep,
        Check::Homogeneous,
        Check::Inhomogeneous,
        Check::FluxLemma,
        Check::LogSobolev,
        Check::IndirectDiffusion,
        Check::ReactionDomination,
        Check::Ckp,
        Check::MassIdentity,
    ];

    pub const EXACT: [Check; 4] = [
        Check::IndirectDiffusion,
        Check::ReactionDomination,
        Check::Ckp,
        Check::MassIdentity,
    ];

    pub const EMPIRICAL: [Check; 5] = [
        Check::Eep,
        Check::Homogeneous,
        Check::Inhomogeneous,
        Check::FluxLemma,
        Check::LogSobolev,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Eep => "eep",
            Check::Homogeneous => "homogeneous",
            Check::Inhomogeneous => "inhomogeneous",
            Check::FluxLemma => "flux_lemma",
            Check::LogSobolev => "log_sobolev",
            Check::IndirectDiffusion => "indirect_diffusion",
            Check::ReactionDomination => "reaction_domination",
            Check::Ckp => "ckp",
            Check::MassIdentity => "mass_identity",
        }
    }

    /// Exact checks have a known constant and must never fail.
    pub fn is_exact(self) -> bool {
        Self::EXACT.contains(&self)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let key = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| format!("unknown check `{s}`"))
    }
}

/// A failed sample with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: Check,
    pub seed: u64,
    pub index: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub params: SimParams,
    pub mass: f64,
    pub fields: BTreeMap<String, Vec<f64>>,
}

/// Aggregate of one check over `samples` draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub check: Check,
    pub samples: usize,
    /// Samples that produced a ratio.
    pub evaluated: usize,
    pub excluded: usize,
    /// Largest `lhs / rhs`; for the mass identity, the largest residual.
    pub sup: f64,
    /// Same over the first half of the samples.
    pub sup_half: f64,
    pub violations: usize,
    pub records: Vec<Violation>,
}

impl SuiteReport {
    /// Relative growth of the supremum from half to all samples.
    pub fn doubling_drift(&self) -> f64 {
        if self.sup_half > 0.0 {
            (self.sup - self.sup_half) / self.sup_half
        } else if self.sup > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// Parameters, equilibrium and sampling bounds shared by all suites.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub params: SimParams,
    pub eq: EquilibriumState,
    /// Upper bound on `n̄` and `p̄` of sampled states.
    pub m1: f64,
    pub seed: u64,
}

impl VerifyContext {
    /// `m1 = None` picks `2 (n̄∞ + p̄∞ + ε₀)`, which leaves room for every
    /// occupancy on both sides of the equilibrium.
    pub fn new(params: &SimParams, mass: f64, m1: Option<f64>, seed: u64) -> Result<Self> {
        params.validate()?;
        let eq = solve_equilibrium(params, mass)?;
        let m1 =
            m1.unwrap_or_else(|| 2.0 * (eq.n_inf.average() + eq.p_inf.average() + params.eps0));
        if !(m1 > 0.0 && m1.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "m1",
                reason: format!("must be finite and > 0, got {m1}"),
            });
        }
        Ok(Self {
            params: params.clone(),
            eq,
            m1,
            seed,
        })
    }

    pub fn mass(&self) -> f64 {
        self.eq.mass
    }

    fn admissible(&self, rng: &mut ChaCha8Rng) -> Result<AdmissibleState> {
        sample_admissible_with(rng, &self.params, self.eq.mass, self.m1, self.seed)
    }

    /// Constant `(a, b, c, d)` obeying both constraints with `n̄, p̄ ≤ M₁`.
    fn homogeneous_sample(&self, rng: &mut ChaCha8Rng) -> Result<[f64; 4]> {
        let pot = &self.params.potentials;
        let (wn, wp) = (
            self.params.n0 * pot.mu_n_bar(),
            self.params.p0 * pot.mu_p_bar(),
        );
        let mass = self.eq.mass;
        for _ in 0..MAX_ATTEMPTS {
            let c2: f64 = rng.gen_range(0.0..=1.0);
            let trapped = self.params.eps * c2;
            let lo = (mass - trapped).max(0.0);
            let hi = self.m1.min(mass - trapped + self.m1);
            if !(lo < hi) {
                continue;
            }
            let nbar = rng.gen_range(lo..hi);
            let pbar = (nbar + trapped - mass).max(0.0);
            return Ok([
                (nbar / wn).sqrt(),
                (pbar / wp).sqrt(),
                c2.sqrt(),
                (1.0 - c2).sqrt(),
            ]);
        }
        Err(Error::Infeasible(format!(
            "no homogeneous state of charge {mass} below M₁ = {}",
            self.m1
        )))
    }

    /// Random unit-circle occupancies with independent nonnegative `a`, `b`.
    fn quad_sample(&self, rng: &mut ChaCha8Rng) -> Result<QuadState> {
        let len = self.params.n_cells();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let theta0 = rng.gen_range(0.0..=half_pi);
        let spread = log_uniform(rng, 1e-3, 1.0) * half_pi;
        let theta: Vec<f64> = (0..len)
            .map(|_| (theta0 + spread * rng.gen_range(-1.0..=1.0)).clamp(0.0, half_pi))
            .collect();
        let mut carrier = |cap: f64| -> Vec<f64> {
            let level = rng.gen_range(0.0..=cap.sqrt());
            let mut v = rough_shape(rng, len);
            let m = mean(&v);
            v.iter_mut().for_each(|x| *x *= level / m);
            v
        };
        let pot = &self.params.potentials;
        let a = carrier(self.m1 / (self.params.n0 * pot.mu_n.min()));
        let b = carrier(self.m1 / (self.params.p0 * pot.mu_p.min()));
        QuadState::new(
            Field::new(a)?,
            Field::new(b)?,
            Field::new(theta.iter().map(|t| t.cos()).collect())?,
            Field::new(theta.iter().map(|t| t.sin()).collect())?,
        )
    }

    /// Smooth `g ∈ [γ, Γ]` and `f = g w` with smooth positive `w` and `f̄ = M₁`.
    /// The ratio of the two sides is linear in `f̄`, so its supremum over
    /// `f̄ ≤ M₁` sits at `f̄ = M₁`.
    fn flux_sample(&self, rng: &mut ChaCha8Rng) -> Result<(Field, Field)> {
        let len = self.params.n_cells();
        let half_log = 0.5 * (FLUX_GAMMA_SUP / FLUX_GAMMA).ln();
        let g: Vec<f64> = smooth_profile(rng, len, FLUX_MODES)
            .into_iter()
            .map(|s| FLUX_GAMMA * (half_log * (1.0 + s)).exp())
            .collect();
        let amp = log_uniform(rng, 1e-3, 3.0);
        let mut f: Vec<f64> = smooth_profile(rng, len, FLUX_MODES)
            .into_iter()
            .zip(&g)
            .map(|(s, g)| g * (amp * s).exp())
            .collect();
        rescale(&mut f, self.m1);
        Ok((Field::new(f)?, Field::new(g)?))
    }

    /// Smooth positive `n = μ_n e^{A s}`.
    fn logsob_sample(&self, rng: &mut ChaCha8Rng) -> Result<Field> {
        let amp = log_uniform(rng, 1e-3, 3.0);
        let s = smooth_profile(rng, self.params.n_cells(), LOGSOB_MODES);
        let mut n: Vec<f64> = s
            .iter()
            .zip(self.params.potentials.mu_n.iter())
            .map(|(s, m)| m * (amp * s).exp())
            .collect();
        rescale(&mut n, self.params.n0 * self.params.potentials.mu_n_bar());
        Field::new(n)
    }

    /// Draws sample `index` of `check` and evaluates it.
    pub fn evaluate(&self, check: Check, index: u64) -> Result<(Outcome, Option<Violation>)> {
        let mut rng = stream(self.seed, index);
        let params = &self.params;
        let mut fields: Vec<(&str, &Field)> = Vec::new();
        let owned_state;
        let owned_quad;
        let owned_pair;
        let owned_field;
        let homogeneous;
        let outcome = match check {
            Check::Eep => {
                owned_state = self.admissible(&mut rng)?;
                let o = eep_ratio(&owned_state, &self.eq, params)?;
                fields.extend(state_fields(&owned_state.state));
                o
            }
            Check::Ckp => {
                owned_state = self.admissible(&mut rng)?;
                let s = &owned_state.state;
                let o = Outcome::exact(
                    ckp_bound(s, &self.eq, params)?,
                    relative_entropy(s, &self.eq, params)?,
                );
                fields.extend(state_fields(s));
                o
            }
            Check::MassIdentity => {
                owned_state = self.admissible(&mut rng)?;
                let s = &owned_state.state;
                let residual = mass_identity_check(s, &self.eq, params)?;
                fields.extend(state_fields(s));
                if residual > MASS_IDENTITY_TOL || !residual.is_finite() {
                    Outcome::Violation {
                        lhs: residual,
                        rhs: MASS_IDENTITY_TOL,
                    }
                } else {
                    Outcome::Ratio { value: residual }
                }
            }
            Check::ReactionDomination => {
                owned_state = self.admissible(&mut rng)?;
                let s = &owned_state.state;
                let r = reaction_domination_check(s, params)?;
                fields.extend(state_fields(s));
                worse_of(
                    Outcome::exact(r.lhs_n, r.rhs_n),
                    Outcome::exact(r.lhs_p, r.rhs_p),
                )
            }
            Check::Inhomogeneous => {
                owned_state = self.admissible(&mut rng)?;
                owned_quad = QuadState::from_state(&owned_state.state, params)?;
                let (lhs, rhs) = inhomogeneous_eep_check(&owned_quad, params, &self.eq)?;
                fields.extend(quad_fields(&owned_quad));
                Outcome::empirical(lhs, rhs)
            }
            Check::IndirectDiffusion => {
                owned_quad = self.quad_sample(&mut rng)?;
                let r = indirect_diffusion_check(&owned_quad);
                fields.extend(quad_fields(&owned_quad));
                worse_of(
                    Outcome::exact(r.lhs_c, r.rhs_c),
                    Outcome::exact(r.lhs_d, r.rhs_d),
                )
            }
            Check::Homogeneous => {
                let [a, b, c, d] = self.homogeneous_sample(&mut rng)?;
                let (lhs, rhs) = homogeneous_eep_check(a, b, c, d, params, &self.eq)?;
                homogeneous = Field::new(vec![a, b, c, d])?;
                fields.push(("abcd", &homogeneous));
                Outcome::empirical(lhs, rhs)
            }
            Check::FluxLemma => {
                owned_pair = self.flux_sample(&mut rng)?;
                let (lhs, rhs) = flux_lemma_check(&owned_pair.0, &owned_pair.1)?;
                fields.push(("f", &owned_pair.0));
                fields.push(("g", &owned_pair.1));
                Outcome::empirical(lhs, rhs)
            }
            Check::LogSobolev => {
                owned_field = self.logsob_sample(&mut rng)?;
                let (lhs, rhs) = logsob_ratio_check(&owned_field, params)?;
                fields.push(("n", &owned_field));
                Outcome::empirical(lhs, rhs)
            }
        };
        let violation = match outcome {
            Outcome::Violation { lhs, rhs } => Some(Violation {
                check,
                seed: self.seed,
                index,
                lhs,
                rhs,
                params: params.clone(),
                mass: self.eq.mass,
                fields: fields
                    .into_iter()
                    .map(|(k, f)| (k.to_string(), f.values().to_vec()))
                    .collect(),
            }),
            _ => None,
        };
        Ok((outcome, violation))
    }

    /// Runs `check` on samples `0..n_samples`.
    pub fn run(&self, check: Check, n_samples: usize) -> Result<SuiteReport> {
        let mut report = SuiteReport {
            check,
            samples: n_samples,
            evaluated: 0,
            excluded: 0,
            sup: 0.0,
            sup_half: 0.0,
            violations: 0,
            records: Vec::new(),
        };
        let half = n_samples.div_ceil(2);
        for index in 0..n_samples {
            if index == half {
                report.sup_half = report.sup;
            }
            let (outcome, violation) = self.evaluate(check, index as u64)?;
            match outcome {
                Outcome::Ratio { value } => {
                    report.evaluated += 1;
                    report.sup = report.sup.max(value);
                }
                Outcome::Excluded => report.excluded += 1,
                Outcome::Violation { .. } => {
                    report.violations += 1;
                    if let Some(v) = violation {
                        if report.records.len() < MAX_RECORDS {
                            report.records.push(v);
                        }
                    }
                }
            }
        }
        if n_samples <= 1 {
            report.sup_half = report.sup;
        }
        Ok(report)
    }
}

fn worse_of(x: Outcome, y: Outcome) -> Outcome {
    match (x, y) {
        (Outcome::Violation { .. }, _) => x,
        (_, Outcome::Violation { .. }) => y,
        (Outcome::Ratio { value: u }, Outcome::Ratio { value: v }) => {
            Outcome::Ratio { value: u.max(v) }
        }
        (Outcome::Ratio { .. }, Outcome::Excluded) => x,
        _ => y,
    }
}

fn state_fields(s: &State) -> [(&'static str, &Field); 3] {
    [("n", &s.n), ("p", &s.p), ("ntr", &s.ntr)]
}

fn quad_fields(q: &QuadState) -> [(&'static str, &Field); 4] {
    [("a", &q.a), ("b", &q.b), ("c", &q.c), ("d", &q.d)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, Potential, PotentialFamily, PotentialPair};

    fn cosine_params(eps: f64) -> SimParams {
        let g = build_grid(32).unwrap();
        let pot = Potential::new(PotentialFamily::CosineWell, 1.0);
        let pair = PotentialPair::from_potentials(&g, pot, pot).unwrap();
        SimParams::new(1.0, 2.0, 1.5, 0.5, eps, 1.0, pair).unwrap()
    }

    #[test]
    fn sampler_is_deterministic_and_feasible() {
        let params = cosine_params(0.1);
        let a = sample_admissible(&params, 0.4, 6.0, 7).unwrap();
        let b = sample_admissible(&params, 0.4, 6.0, 7).unwrap();
        assert_eq!(a, b);
        assert!((a.state.mass(&params) - 0.4).abs() <= 1e-12);
        assert!(a.state.n.average() <= 3.0 && a.state.p.average() <= 6.0);
        assert!(a.state.ntr.min() >= TRAP_MARGIN && a.state.ntr.max() <= 1.0 - TRAP_MARGIN);
        assert_ne!(a, sample_admissible(&params, 0.4, 6.0, 8).unwrap());
    }

    #[test]
    fn sampler_reports_infeasible_charge() {
        let params = cosine_params(0.1);
        let m1 = 3.0;
        let err = sample_admissible(&params, m1 + 0.1 + 1.0, m1, 1).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn srh_samples_carry_slaved_traps() {
        let params = cosine_params(0.0);
        let s = sample_admissible(&params, -0.3, 5.0, 3).unwrap();
        let slaved = ntr_quasi_equilibrium(&s.state.n, &s.state.p, &params).unwrap();
        assert_eq!(s.state.ntr, slaved);
    }

    #[test]
    fn equilibrium_is_excluded_from_eep() {
        let params = cosine_params(0.1);
        let eq = solve_equilibrium(&params, 0.2).unwrap();
        let s = AdmissibleState {
            state: State::from_equilibrium(&eq),
            mass: 0.2,
            seed: 0,
        };
        assert_eq!(eep_ratio(&s, &eq, &params).unwrap(), Outcome::Excluded);
    }

    // Constant state on a flat potential with n₀ = p₀ = τ = 1, ε = 0.1:
    // n = 2, p = 1/2, ntr = 0.3, so M = 1.53. The ratio was evaluated with
    // 50-digit scalar arithmetic.
    #[test]
    fn homogeneous_eep_ratio_matches_scalar_oracle() {
        let g = build_grid(8).unwrap();
        let params = SimParams::unit(0.1, PotentialPair::flat(&g));
        let eq = solve_equilibrium(&params, 1.53).unwrap();
        let s = AdmissibleState {
            state: State::new(0.0, g.constant(2.0), g.constant(0.5), g.constant(0.3)).unwrap(),
            mass: 1.53,
            seed: 0,
        };
        let Outcome::Ratio { value } = eep_ratio(&s, &eq, &params).unwrap() else {
            panic!("expected a ratio");
        };
        approx::assert_relative_eq!(value, EEP_ORACLE, max_relative = 1e-12);
    }

    const EEP_ORACLE: f64 = 0.010903224102918990949;

    #[test]
    fn equilibrium_roots_zero_both_eep_sides() {
        for eps in [0.0, 0.01, 1.0] {
            let params = cosine_params(eps);
            let eq = solve_equilibrium(&params, -0.7).unwrap();
            let r = EquilibriumRoots::new(&eq, &params);
            let (lhs, rhs) =
                homogeneous_eep_check(r.nu, r.pi, r.nu_tr, r.nu_tr_prime, &params, &eq).unwrap();
            assert!(lhs < 1e-28 && rhs < 1e-28, "{lhs} {rhs}");
            let q = QuadState::equilibrium(&eq, &params);
            let q_state = QuadState::from_state(&State::from_equilibrium(&eq), &params).unwrap();
            for (x, y) in q.a.iter().zip(q_state.a.iter()) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn homogeneous_check_rejects_off_constraint_input() {
        let params = cosine_params(0.1);
        let eq = solve_equilibrium(&params, 0.0).unwrap();
        let err = homogeneous_eep_check(2.0, 0.1, 0.6, 0.8, &params, &eq).unwrap_err();
        assert!(matches!(err, Error::ConstraintResidual { .. }));
    }

    #[test]
    fn inhomogeneous_equilibrium_and_constant_states() {
        let g = build_grid(16).unwrap();
        let params = SimParams::unit(0.5, PotentialPair::flat(&g));
        let eq = solve_equilibrium(&params, 0.3).unwrap();
        let (lhs, rhs) =
            inhomogeneous_eep_check(&QuadState::equilibrium(&eq, &params), &params, &eq).unwrap();
        assert!(lhs < 1e-28 && rhs < 1e-28);

        // a constant state reduces to the homogeneous sides
        let (a, c) = (1.2_f64, 0.6_f64);
        let d = (1.0 - c * c).sqrt();
        let b = (a * a + 0.5 * c * c - 0.3).sqrt();
        let q = QuadState::new(g.constant(a), g.constant(b), g.constant(c), g.constant(d)).unwrap();
        let (li, ri) = inhomogeneous_eep_check(&q, &params, &eq).unwrap();
        let (lh, rh) = homogeneous_eep_check(a, b, c, d, &params, &eq).unwrap();
        assert!((li - lh).abs() < 1e-13 && (ri - rh).abs() < 1e-13);
    }

    #[test]
    fn quad_state_enforces_unit_circle() {
        let g = build_grid(4).unwrap();
        let err = QuadState::new(
            g.constant(1.0),
            g.constant(1.0),
            g.constant(0.6),
            g.constant(0.7),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ConstraintResidual { .. }));
    }

    #[test]
    fn diffusion_transfer_trivial_cases() {
        let g = build_grid(16).unwrap();
        let a = g.sample(|x| 1.0 + x);
        let r = indirect_diffusion_check(
            &QuadState::new(a.clone(), a.clone(), g.constant(0.6), g.constant(0.8)).unwrap(),
        );
        assert!(r.lhs_c < 1e-30 && r.lhs_d < 1e-30);
        assert!(r.holds());
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = indirect_diffusion_check(
            &QuadState::new(a.clone(), a, g.constant(h), g.constant(h)).unwrap(),
        );
        assert!(r.lhs_d < 1e-30);
    }

    #[test]
    fn flux_lemma_trivial_cases() {
        let g = build_grid(64).unwrap();
        let w = g.sample(|x| 1.0 + 0.5 * (3.0 * x).sin());
        let (lhs, rhs) = flux_lemma_check(&w.map(|v| 3.0 * v), &w).unwrap();
        assert!(lhs < 1e-28 && rhs < 1e-24);
        let f = g.sample(|x| 1.0 + x * x);
        let (lhs, rhs) = flux_lemma_check(&f, &g.constant(1.0)).unwrap();
        assert!(lhs < 1e-28 && rhs > 0.0);
        assert!(flux_lemma_check(&f, &g.constant(0.0)).is_err());
    }

    #[test]
    fn logsob_vanishes_on_weight_and_is_nonnegative() {
        let params = cosine_params(0.1);
        let mu = params.potentials.mu_n.clone();
        let (lhs, rhs) = logsob_ratio_check(&mu.map(|m| 2.5 * m), &params).unwrap();
        assert!(lhs.abs() < 1e-14 && rhs < 1e-24);
        let ctx = VerifyContext::new(&params, 0.0, None, 11).unwrap();
        for i in 0..50 {
            let n = ctx.logsob_sample(&mut stream(11, i)).unwrap();
            assert!(logsob_ratio_check(&n, &params).unwrap().0 >= -1e-12);
        }
    }

    #[test]
    fn reaction_domination_at_equilibrium_and_slaved_traps() {
        let params = cosine_params(0.1);
        let eq = solve_equilibrium(&params, 0.5).unwrap();
        let r = reaction_domination_check(&State::from_equilibrium(&eq), &params).unwrap();
        assert!(r.lhs_n < 1e-28 && r.rhs_n.abs() < 1e-28 && r.holds());

        let g = build_grid(32).unwrap();
        let n = g.sample(|x| 0.5 + x);
        let p = g.sample(|x| 2.0 - x);
        let ntr = ntr_quasi_equilibrium(&n, &p, &params).unwrap();
        let s = State::new(0.0, n, p, ntr).unwrap();
        assert!(reaction_domination_check(&s, &params).unwrap().holds());
        let mut edge = s.clone();
        edge.ntr.values_mut()[3] = 1.0;
        assert!(matches!(
            reaction_domination_check(&edge, &params),
            Err(Error::BoundaryState(3))
        ));
    }

    #[test]
    fn mass_identity_symmetric_and_equilibrium() {
        let params = cosine_params(0.1);
        let eq = solve_equilibrium(&params, 0.25).unwrap();
        assert!(mass_identity_check(&State::from_equilibrium(&eq), &eq, &params).unwrap() < 1e-15);

        // M = ε/2 puts the equilibrium at n* = n₀, p* = p₀
        let g = build_grid(16).unwrap();
        let flat = SimParams::unit(0.2, PotentialPair::flat(&g));
        let eq = solve_equilibrium(&flat, 0.1).unwrap();
        let s = State::new(0.0, g.sample(|x| 3.0 * x), g.constant(0.2), g.constant(0.9)).unwrap();
        assert!(mass_identity_check(&s, &eq, &flat).unwrap() < 1e-12);
    }

    #[test]
    fn suites_are_reproducible_and_clean() {
        let params = cosine_params(0.1);
        let ctx = VerifyContext::new(&params, 0.3, None, 5).unwrap();
        for check in Check::ALL {
            let r = ctx.run(check, 40).unwrap();
            assert_eq!(r.violations, 0, "{check}: {:?}", r.records.first());
            assert!(r.sup.is_finite() && r.sup >= r.sup_half, "{check}");
            assert_eq!(r, ctx.run(check, 40).unwrap());
        }
        let one = ctx.run(Check::Eep, 1).unwrap();
        assert_eq!(one.evaluated + one.excluded + one.violations, 1);
    }

    #[test]
    fn checks_parse_by_name() {
        for c in Check::ALL {
            assert_eq!(c.name().parse::<Check>().unwrap(), c);
        }
        assert!("flux-lemma".parse::<Check>().is_ok());
    }
}
