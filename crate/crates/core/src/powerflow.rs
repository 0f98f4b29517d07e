//! AC (Newton-Raphson, polar coordinates) and DC power flow.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_admittance_ac, build_admittance_dc, BusKind, ComplexAdmittance, GridCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Clean,
    Noisy,
    Attacked,
}

/// Complex bus voltages in p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexState {
    pub v: Vec<Complex64>,
    pub provenance: Provenance,
}

impl ComplexState {
    pub fn clean(v: Vec<Complex64>) -> Self {
        ComplexState { v, provenance: Provenance::Clean }
    }

    pub fn from_polar(magnitudes: &[f64], angles_rad: &[f64]) -> Self {
        let v = magnitudes
            .iter()
            .zip(angles_rad)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect();
        Self::clean(v)
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.v.iter().map(|c| c.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.v.iter().map(|c| c.im).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.v.iter().map(|c| c.norm()).collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.v.iter().map(|c| c.arg()).collect()
    }

    /// Euclidean norm of the complex vector.
    pub fn norm(&self) -> f64 {
        self.v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn to_records(&self) -> Vec<BusVoltage> {
        self.v
            .iter()
            .enumerate()
            .map(|(i, c)| BusVoltage { id: i + 1, v: c.norm(), angle_deg: c.arg().to_degrees() })
            .collect()
    }

    /// Builds a state from per-bus records; ids must cover `1..=M`.
    pub fn from_records(records: &[BusVoltage]) -> Result<Self> {
        let m = records.len();
        let mut v = vec![None; m];
        for r in records {
            if r.id == 0 || r.id > m {
                return Err(Error::InvalidParameter(format!("state bus id {} out of range", r.id)));
            }
            v[r.id - 1] = Some(Complex64::from_polar(r.v, r.angle_deg.to_radians()));
        }
        let v = v
            .into_iter()
            .enumerate()
            .map(|(i, c)| c.ok_or_else(|| Error::InvalidParameter(format!("state misses bus {}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::clean(v))
    }
}

/// One bus of a state file: magnitude in p.u., angle in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusVoltage {
    pub id: usize,
    pub v: f64,
    pub angle_deg: f64,
}

/// JSON layout shared by `powerflow` output and `detect` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub buses: Vec<BusVoltage>,
}

/// Complex power injections `s = diag(v) (Y v)*` in p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerInjection {
    pub s: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Maximum power mismatch (infinity norm, p.u.).
    pub tol: f64,
    pub max_iter: usize,
    /// Start from V = setpoint / 1.0 and zero angles; otherwise angles are
    /// initialised from the DC power flow.
    pub flat_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iter: 20, flat_start: true }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(format!(
                "solver options need tol > 0 and max_iter >= 1, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

/// Converged AC solution with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AcSolution {
    pub state: ComplexState,
    pub iterations: usize,
    pub mismatch: f64,
}

pub fn injections_from_state(adm: &ComplexAdmittance, state: &ComplexState) -> Result<PowerInjection> {
    let m = adm.dim();
    if state.len() != m {
        return Err(Error::Dimension { expected: m, got: state.len() });
    }
    let v = DVector::from_column_slice(&state.v);
    let i = &adm.y * &v;
    let s = v.iter().zip(i.iter()).map(|(vk, ik)| vk * ik.conj()).collect();
    Ok(PowerInjection { s })
}

/// Solves the AC power flow and returns the bus voltages.
pub fn solve_ac(case: &GridCase, opts: &SolverOptions) -> Result<ComplexState> {
    solve_ac_detailed(case, opts).map(|sol| sol.state)
}

struct BusSets {
    pvpq: Vec<usize>,
    pq: Vec<usize>,
}

fn mismatch_vector(case: &GridCase, s: &[Complex64], sets: &BusSets) -> DVector<f64> {
    let n = sets.pvpq.len() + sets.pq.len();
    let mut f = DVector::zeros(n);
    for (row, &k) in sets.pvpq.iter().enumerate() {
        f[row] = s[k].re - case.buses[k].p;
    }
    for (row, &k) in sets.pq.iter().enumerate() {
        f[sets.pvpq.len() + row] = s[k].im - case.buses[k].q;
    }
    f
}

fn jacobian(y: &DMatrix<Complex64>, v: &[Complex64], sets: &BusSets) -> DMatrix<f64> {
    let m = v.len();
    let vv = DVector::from_column_slice(v);
    let ibus = y * &vv;
    let vnorm: Vec<Complex64> = v.iter().map(|c| c / c.norm()).collect();
    let j = Complex64::new(0.0, 1.0);

    // dS/dtheta = j diag(v) conj(diag(i) - Y diag(v))
    // dS/d|v|   = diag(v) conj(Y diag(vnorm)) + conj(diag(i)) diag(vnorm)
    let mut ds_dva = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    let mut ds_dvm = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for r in 0..m {
        for c in 0..m {
            let mut inner = -y[(r, c)] * v[c];
            if r == c {
                inner += ibus[r];
            }
            ds_dva[(r, c)] = j * v[r] * inner.conj();
            let mut dm = v[r] * (y[(r, c)] * vnorm[c]).conj();
            if r == c {
                dm += ibus[r].conj() * vnorm[r];
            }
            ds_dvm[(r, c)] = dm;
        }
    }

    let n1 = sets.pvpq.len();
    let n = n1 + sets.pq.len();
    let mut jac = DMatrix::zeros(n, n);
    for (ri, &r) in sets.pvpq.iter().enumerate() {
        for (ci, &c) in sets.pvpq.iter().enumerate() {
            jac[(ri, ci)] = ds_dva[(r, c)].re;
        }
        for (ci, &c) in sets.pq.iter().enumerate() {
            jac[(ri, n1 + ci)] = ds_dvm[(r, c)].re;
        }
    }
    for (ri, &r) in sets.pq.iter().enumerate() {
        for (ci, &c) in sets.pvpq.iter().enumerate() {
            jac[(n1 + ri, ci)] = ds_dva[(r, c)].im;
        }
        for (ci, &c) in sets.pq.iter().enumerate() {
            jac[(n1 + ri, n1 + ci)] = ds_dvm[(r, c)].im;
        }
    }
    jac
}

/// Newton-Raphson in polar coordinates with analytic Jacobian.
///
/// Reactive limits at PV buses are not enforced. The slack angle is 0.
pub fn solve_ac_detailed(case: &GridCase, opts: &SolverOptions) -> Result<AcSolution> {
    opts.validate()?;
    let m = case.bus_count();
    let adm = build_admittance_ac(case);
    let sets = BusSets {
        pvpq: (0..m).filter(|&k| case.buses[k].kind != BusKind::Slack).collect(),
        pq: (0..m).filter(|&k| case.buses[k].kind == BusKind::Pq).collect(),
    };

    let mut vm: Vec<f64> = case
        .buses
        .iter()
        .map(|b| if b.kind == BusKind::Pq { 1.0 } else { b.v })
        .collect();
    let mut va = if opts.flat_start { vec![0.0; m] } else { solve_dc(case)? };

    let mut iterations = 0;
    loop {
        let state = ComplexState::from_polar(&vm, &va);
        let s = injections_from_state(&adm, &state)?.s;
        let f = mismatch_vector(case, &s, &sets);
        let mismatch = f.amax();
        if !mismatch.is_finite() {
            return Err(Error::NotConverged { iterations, mismatch });
        }
        if mismatch < opts.tol {
            return Ok(AcSolution { state, iterations, mismatch });
        }
        if iterations == opts.max_iter {
            return Err(Error::NotConverged { iterations, mismatch });
        }
        let jac = jacobian(&adm.y, &state.v, &sets);
        let dx = jac.lu().solve(&(-f)).ok_or(Error::Singular("power-flow Jacobian"))?;
        let n1 = sets.pvpq.len();
        for (i, &k) in sets.pvpq.iter().enumerate() {
            va[k] += dx[i];
        }
        for (i, &k) in sets.pq.iter().enumerate() {
            vm[k] += dx[n1 + i];
        }
        iterations += 1;
    }
}

/// DC power flow: solves `p = Y_dc phi` with the slack angle pinned at 0.
pub fn solve_dc(case: &GridCase) -> Result<Vec<f64>> {
    let m = case.bus_count();
    let slack = case.slack_index();
    let lap = build_admittance_dc(case).yr;
    let keep: Vec<usize> = (0..m).filter(|&k| k != slack).collect();
    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |r, c| lap[(keep[r], keep[c])]);
    let p = DVector::from_iterator(keep.len(), keep.iter().map(|&k| case.buses[k].p));
    let phi = reduced
        .lu()
        .solve(&p)
        .ok_or(Error::Singular("reduced DC susceptance matrix"))?;
    let mut out = vec![0.0; m];
    for (i, &k) in keep.iter().enumerate() {
        out[k] = phi[i];
    }
    Ok(out)
}
