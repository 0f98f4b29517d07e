//! Shared fixtures for the benchmarks.

use gsp_fdi::attack::{make_historic, LoadScenarioSpec};
use gsp_fdi::{grid_laplacians, solve_ac, ComplexState, GridCase, LaplacianMode, LaplacianPair, SolverOptions};

pub struct Fixture {
    pub case: GridCase,
    pub pair: LaplacianPair,
    pub historic: Vec<ComplexState>,
    pub nominal: ComplexState,
}

/// IEEE-14 with `n_historic` seeded load scenarios and its nominal state.
pub fn ieee14_fixture(n_historic: usize) -> Fixture {
    let case = GridCase::ieee14();
    let pair = grid_laplacians(&case, LaplacianMode::Ac).expect("ieee14 Laplacians");
    let spec = LoadScenarioSpec { sigma: 0.05, count: n_historic, seed: 7 };
    let historic = make_historic(&case, &spec, &SolverOptions::default()).expect("historic states");
    let nominal = solve_ac(&case, &SolverOptions::default()).expect("nominal flow");
    Fixture { case, pair, historic, nominal }
}
