//! State-estimator output model: true state, Gaussian estimation noise and
//! false data injection, plus randomized load scenarios.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BusKind, GridCase};
use crate::powerflow::{solve_ac, ComplexState, Provenance, SolverOptions};
use crate::rng::{domain, stream_id, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_e: f64,
    pub seed: u64,
}

/// One attacked bus: polar offsets applied to the estimated voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackTarget {
    pub bus: usize,
    #[serde(default)]
    pub delta_angle_deg: f64,
    #[serde(default)]
    pub delta_magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub targets: Vec<AttackTarget>,
}

impl AttackSpec {
    pub fn single(bus: usize, delta_angle_deg: f64, delta_magnitude: f64) -> Self {
        AttackSpec { targets: vec![AttackTarget { bus, delta_angle_deg, delta_magnitude }] }
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadScenarioSpec {
    pub sigma: f64,
    pub count: usize,
    pub seed: u64,
}

impl LoadScenarioSpec {
    fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || self.count == 0 {
            return Err(Error::InvalidParameter(format!(
                "load scenarios need sigma >= 0 and count >= 1, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

/// Attacked state together with the implied additive offset `c = v_fdi - v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub state: ComplexState,
    pub offset: Vec<Complex64>,
}

/// Scenario `index` of the load model: every PQ bus gets `P = P0 |y_P|`,
/// `Q = Q0 |y_Q|` with `y ~ Normal(1, sigma^2)`, drawn in bus order (P then Q).
pub fn scenario(case: &GridCase, sigma: f64, seed: u64, index: u64) -> Result<GridCase> {
    let normal = Normal::new(1.0, sigma)
        .map_err(|e| Error::InvalidParameter(format!("load sigma {sigma}: {e}")))?;
    let mut rng = stream_rng(seed, stream_id(domain::SCENARIO, index, 0));
    let mut out = case.clone();
    for bus in out.buses.iter_mut().filter(|b| b.kind == BusKind::Pq) {
        let yp: f64 = normal.sample(&mut rng);
        let yq: f64 = normal.sample(&mut rng);
        bus.p *= yp.abs();
        bus.q *= yq.abs();
    }
    Ok(out)
}

pub fn random_scenarios(case: &GridCase, spec: &LoadScenarioSpec) -> Result<Vec<GridCase>> {
    spec.validate()?;
    (0..spec.count as u64)
        .map(|i| scenario(case, spec.sigma, spec.seed, i))
        .collect()
}

/// Solves `spec.count` random scenarios. Scenarios whose power flow fails are
/// skipped and further scenario indices drawn, up to `10 * count` attempts.
pub fn make_historic(
    case: &GridCase,
    spec: &LoadScenarioSpec,
    opts: &SolverOptions,
) -> Result<Vec<ComplexState>> {
    spec.validate()?;
    let cap = 10 * spec.count;
    let mut states = Vec::with_capacity(spec.count);
    let mut next = 0usize;
    while states.len() < spec.count {
        if next >= cap {
            return Err(Error::RedrawCapExceeded { cap, found: states.len(), wanted: spec.count });
        }
        let batch_end = (next + spec.count - states.len()).min(cap);
        let solved: Vec<Option<ComplexState>> = (next..batch_end)
            .into_par_iter()
            .map(|i| {
                let sc = scenario(case, spec.sigma, spec.seed, i as u64).ok()?;
                solve_ac(&sc, opts).ok()
            })
            .collect();
        states.extend(solved.into_iter().flatten());
        next = batch_end;
    }
    states.truncate(spec.count);
    Ok(states)
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma` to the real
/// and imaginary part of every entry (real then imaginary, in bus order).
pub fn apply_noise_with<R: Rng + ?Sized>(state: &ComplexState, sigma: f64, rng: &mut R) -> Result<ComplexState> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(ComplexState { v: state.v.clone(), provenance: Provenance::Noisy });
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let v = state
        .v
        .iter()
        .map(|c| {
            let re = normal.sample(rng);
            let im = normal.sample(rng);
            c + Complex64::new(re, im)
        })
        .collect();
    Ok(ComplexState { v, provenance: Provenance::Noisy })
}

pub fn apply_noise(state: &ComplexState, spec: &NoiseSpec) -> Result<ComplexState> {
    let mut rng = stream_rng(spec.seed, stream_id(domain::NOISE, 0, 0));
    apply_noise_with(state, spec.sigma_e, &mut rng)
}

/// Applies polar offsets `V_k += dV`, `phi_k += dphi` at every target bus.
pub fn apply_attack(case: &GridCase, state: &ComplexState, spec: &AttackSpec) -> Result<AttackOutcome> {
    let m = case.bus_count();
    if state.len() != m {
        return Err(Error::Dimension { expected: m, got: state.len() });
    }
    let slack = case.slack_index() + 1;
    let mut v = state.v.clone();
    for t in &spec.targets {
        if t.bus == 0 || t.bus > m {
            return Err(Error::InvalidAttack(format!("bus {} does not exist", t.bus)));
        }
        if t.bus == slack {
            return Err(Error::InvalidAttack(format!("bus {} is the slack bus", t.bus)));
        }
        if t.delta_angle_deg == 0.0 && t.delta_magnitude == 0.0 {
            continue;
        }
        let k = t.bus - 1;
        let magnitude = v[k].norm() + t.delta_magnitude;
        if !(magnitude > 0.0) {
            return Err(Error::InvalidAttack(format!(
                "bus {}: attacked magnitude {magnitude} is not positive",
                t.bus
            )));
        }
        v[k] = Complex64::from_polar(magnitude, v[k].arg() + t.delta_angle_deg.to_radians());
    }
    let offset = v.iter().zip(&state.v).map(|(a, b)| a - b).collect();
    Ok(AttackOutcome { state: ComplexState { v, provenance: Provenance::Attacked }, offset })
}
