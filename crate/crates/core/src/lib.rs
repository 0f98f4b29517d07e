//! Detection of false data injection in power grid state estimates using
//! graph signal processing on admittance Laplacians.
//!
//! ```
//! use gsp_fdi::attack::{apply_attack, make_historic, AttackSpec, LoadScenarioSpec};
//! use gsp_fdi::{calibrate, detect, grid_laplacians, solve_ac, GridCase, LaplacianMode, SolverOptions};
//!
//! let case = GridCase::ieee14();
//! let pair = grid_laplacians(&case, LaplacianMode::Ac)?;
//! let spec = LoadScenarioSpec { sigma: 0.05, count: 100, seed: 1 };
//! let historic = make_historic(&case, &spec, &SolverOptions::default())?;
//! let model = calibrate(&pair, &historic, &Default::default())?;
//!
//! let state = solve_ac(&case, &SolverOptions::default())?;
//! let attacked = apply_attack(&case, &state, &AttackSpec::single(9, 10.0, 0.0))?.state;
//! assert!(detect(&model, &attacked)?.verdict.is_attack());
//! # Ok::<(), gsp_fdi::Error>(())
//! ```

pub mod attack;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod gsp;
pub mod powerflow;
pub mod rng;

pub use attack::{apply_attack, apply_noise, AttackSpec, AttackTarget, LoadScenarioSpec, NoiseSpec};
pub use detector::{
    calibrate, detect, CalibrationParams, DetectionReport, DetectorModel, Epsilons, SignalPart, TermId,
    ThresholdRule, Verdict,
};
pub use error::{Error, Result};
pub use experiment::ExperimentConfig;
pub use grid::{grid_laplacians, GridCase, LaplacianMode, LaplacianPair};
pub use gsp::{LaplacianKind, SpectralBasis};
pub use powerflow::{solve_ac, solve_dc, ComplexState, SolverOptions};
