//! Structure-preserving finite-volume solver for trap-assisted
//! drift-diffusion-recombination with entropy diagnostics.
//!
//! Carriers `n`, `p` diffuse in confining potentials and exchange charge with
//! a trap level of occupancy `ntr`, which relaxes on the time scale `ε`. At
//! `ε = 0` the occupancy is slaved to the carriers and the system reduces to
//! Shockley–Read–Hall recombination.

pub mod decay;
pub mod dynamics;
pub mod entropy;
pub mod equilibrium;
pub mod error;
pub mod initial;
pub mod mesh;
pub mod params;
pub mod rates;
pub mod verify;

pub use decay::{fit_decay_rate, DecayFit};
pub use dynamics::{
    simulate, simulate_with, step, step_srh, weak_law_residual, InvariantSummary, State, Stepper,
    StepperConfig, Trajectory,
};
pub use entropy::{
    ckp_bound, entropy, entropy_production, entropy_srh, l1_mass_cap, production_srh,
    relative_entropy, trap_potential, DiagnosticsRow, Production,
};
pub use equilibrium::{equilibrium_bounds, solve_equilibrium, EquilibriumBounds, EquilibriumState};
pub use error::{Error, Result};
pub use initial::{InitialFamily, InitialSpec};
pub use mesh::{
    build_grid, Field, FluxOperator, Grid1D, Potential, PotentialFamily, PotentialPair,
};
pub use params::SimParams;
pub use rates::{ntr_quasi_equilibrium, rate_rn, rate_rp, rate_srh};
pub use verify::{
    eep_ratio, flux_lemma_check, homogeneous_eep_check, indirect_diffusion_check,
    inhomogeneous_eep_check, logsob_ratio_check, mass_identity_check, reaction_domination_check,
    sample_admissible, AdmissibleState, Check, DiffusionTransfer, EquilibriumRoots, Outcome,
    QuadState, ReactionDomination, SuiteReport, VerifyContext, Violation,
};
