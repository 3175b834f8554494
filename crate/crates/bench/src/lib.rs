//! Fixtures shared by the benchmarks.

use srhlab_core::{
    build_grid, InitialFamily, InitialSpec, Potential, PotentialFamily, PotentialPair, SimParams,
    State,
};

/// Step data in a single well, the workhorse of the bundled scenarios.
pub fn step_fixture(n_cells: usize, eps: f64) -> (SimParams, State) {
    let grid = build_grid(n_cells).expect("valid grid");
    let well = Potential::new(PotentialFamily::CosineWell, 1.0);
    let potentials = PotentialPair::from_potentials(&grid, well, well).expect("finite potentials");
    let params = SimParams::unit(eps, potentials);
    let spec = InitialSpec {
        family: InitialFamily::Step,
        n_level: 2.0,
        p_level: 0.5,
        amplitude: 0.5,
        ntr: None,
        mass: 0.0,
    };
    let state = spec.build(&grid, &params).expect("valid initial data");
    (params, state)
}
