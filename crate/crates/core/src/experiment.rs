//! Monte Carlo experiments: smoothness of nominal states, detection curves
//! for single-bus angle and magnitude attacks (with and without estimation
//! noise), a multi-bus attack report and a comparison against two
//! norm-based baselines.
//!
//! Trials use common random numbers: the clean state of trial `t` on bus
//! `b` depends only on `(seed, b, t)`, and its noise draw is a shared
//! standard-normal vector scaled by the noise level. Every sweep therefore
//! compares detectors and attack sizes on identical load situations.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{apply_attack, make_historic, scenario, AttackSpec, AttackTarget, LoadScenarioSpec};
use crate::detector::{
    calibrate, calibrate_split, calibrate_threshold, detect, residual_norm, CalibrationParams, DetectionReport,
    DetectorModel, Epsilons, SignalPart, TermId, ThresholdRule,
};
use crate::error::{Error, Result};
use crate::grid::{grid_laplacians, GridCase, LaplacianMode, LaplacianPair};
use crate::gsp::{filter_and_stat, total_variation};
use crate::powerflow::{solve_ac, ComplexState, Provenance, SolverOptions};
use crate::rng::{derive_seed, domain, stream_id, stream_rng};

/// Scenario re-draws allowed for one trial state before giving up.
const TRIAL_REDRAWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Bundled case name (`ieee14`, `ieee30`) or a path to a case file.
    pub case: String,
    /// Cases for the smoothness table.
    pub smoothness_cases: Vec<String>,
    pub load_sigma: f64,
    pub n_historic: usize,
    pub trials: usize,
    /// Attacked buses; empty means every non-slack bus.
    pub buses: Vec<usize>,
    pub angle_grid: Vec<f64>,
    pub magnitude_grid: Vec<f64>,
    pub noise_sigmas: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Confidence scale for the single-model experiments (noise, multi-bus, comparison).
    pub alpha_sigma: f64,
    pub alpha_sigma_s: f64,
    pub epsilons: Epsilons,
    pub rule: ThresholdRule,
    pub min_terms: usize,
    pub seed: u64,
    pub multi_bus_targets: Vec<usize>,
    pub multi_bus_angle_deg: f64,
    pub multi_bus_magnitude: f64,
    pub solver: SolverOptions,
    pub output_dir: Option<PathBuf>,
}

fn grid(lo: i32, hi: i32, step: f64) -> Vec<f64> {
    (lo..=hi).map(|i| i as f64 * step).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            case: "ieee14".into(),
            smoothness_cases: vec!["ieee14".into(), "ieee30".into()],
            load_sigma: 0.05,
            n_historic: 100,
            trials: 100,
            buses: Vec::new(),
            angle_grid: grid(-12, 12, 1.0),
            magnitude_grid: grid(-10, 10, 0.02),
            noise_sigmas: vec![0.001, 0.005, 0.01],
            alphas: vec![0.5, 1.0, 2.0],
            alpha_sigma: 2.0,
            alpha_sigma_s: 2.0,
            epsilons: Epsilons::default(),
            rule: ThresholdRule::Averaged,
            min_terms: 1,
            seed: 2024,
            multi_bus_targets: vec![6, 9, 10, 11, 12, 13, 14],
            multi_bus_angle_deg: 3.0,
            multi_bus_magnitude: 0.03,
            solver: SolverOptions::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; relative case paths resolve against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let rebase = |c: &mut String| {
            if !is_bundled(c) && Path::new(c).is_relative() {
                *c = base.join(&*c).to_string_lossy().into_owned();
            }
        };
        rebase(&mut cfg.case);
        cfg.smoothness_cases.iter_mut().for_each(rebase);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.angle_grid.is_empty() || self.magnitude_grid.is_empty() {
            return bad("attack grids must be non-empty");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.n_historic < 2 {
            return bad("n_historic must be at least 2");
        }
        if self.alphas.is_empty() {
            return bad("alphas must be non-empty");
        }
        if self.noise_sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("noise sigmas must be non-negative");
        }
        if !(self.load_sigma >= 0.0) {
            return bad("load_sigma must be non-negative");
        }
        if self.angle_grid.iter().chain(&self.magnitude_grid).any(|d| !d.is_finite()) {
            return bad("attack grids must be finite");
        }
        self.solver.validate()
    }

    pub fn load_case(&self) -> Result<GridCase> {
        resolve_case(&self.case)
    }

    pub fn params(&self, alpha_sigma: f64) -> CalibrationParams {
        CalibrationParams {
            epsilons: self.epsilons,
            alpha_sigma,
            alpha_sigma_s: self.alpha_sigma_s,
            rule: self.rule,
            min_terms: self.min_terms,
        }
    }

    fn attacked_buses(&self, case: &GridCase) -> Result<Vec<usize>> {
        let slack = case.slack_index() + 1;
        if self.buses.is_empty() {
            return Ok((1..=case.bus_count()).filter(|&b| b != slack).collect());
        }
        for &b in &self.buses {
            if b == 0 || b > case.bus_count() || b == slack {
                return Err(Error::InvalidAttack(format!("bus {b} cannot be attacked")));
            }
        }
        Ok(self.buses.clone())
    }

    /// The seeded historic (calibration) states for `case`.
    pub fn historic(&self, case: &GridCase) -> Result<Vec<ComplexState>> {
        let spec = self.load_spec(self.n_historic, derive_seed(self.seed, domain::HISTORIC, 0, 0));
        make_historic(case, &spec, &self.solver)
    }

    fn load_spec(&self, count: usize, seed: u64) -> LoadScenarioSpec {
        LoadScenarioSpec { sigma: self.load_sigma, count, seed }
    }
}

fn is_bundled(name: &str) -> bool {
    matches!(name, "ieee14" | "ieee30")
}

/// A bundled case by name, otherwise a case file.
pub fn resolve_case(name: &str) -> Result<GridCase> {
    match name {
        "ieee14" => Ok(GridCase::ieee14()),
        "ieee30" => Ok(GridCase::ieee30()),
        path => GridCase::from_path(path),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Angle,
    Magnitude,
}

impl AttackKind {
    pub fn spec(self, bus: usize, delta: f64) -> AttackSpec {
        match self {
            AttackKind::Angle => AttackSpec::single(bus, delta, 0.0),
            AttackKind::Magnitude => AttackSpec::single(bus, 0.0, delta),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AttackKind::Angle => "angle",
            AttackKind::Magnitude => "magnitude",
        }
    }
}

/// Detection probability over all trials whose attack size is at least `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub delta: f64,
    pub detection_probability: f64,
    pub trials: usize,
    /// Probability over the trials with attack size exactly `±delta`.
    pub point_probability: f64,
    pub point_trials: usize,
    /// Alarm rate of the unattacked trials, when the grid contains zero.
    pub false_alarm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub kind: AttackKind,
    pub alpha_sigma: f64,
    pub sigma_e: f64,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    pub fn at(&self, delta: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| (p.delta - delta).abs() < 1e-9)
    }

    pub fn false_alarm(&self) -> Option<f64> {
        self.points.first().and_then(|p| p.false_alarm)
    }
}

/// Which signal parts fired among detected attacks, in percent of detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub kind: AttackKind,
    pub alpha_sigma: f64,
    pub detections: usize,
    pub real_only: f64,
    pub imag_only: f64,
    pub both: f64,
}

impl Attribution {
    /// Share of detections in which any real-part term fired.
    pub fn any_real(&self) -> f64 {
        self.real_only + self.both
    }

    pub fn any_imag(&self) -> f64 {
        self.imag_only + self.both
    }
}

/// Outcome of one attacked (or unattacked) trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub bus: usize,
    pub delta: f64,
    pub detected: bool,
    pub real_fired: bool,
    pub imag_fired: bool,
}

/// Clean historic states plus the per-trial clean states shared by every sweep.
pub struct Harness {
    pub config: ExperimentConfig,
    pub case: GridCase,
    pub pair: LaplacianPair,
    pub historic: Vec<ComplexState>,
    pub buses: Vec<usize>,
    /// `trial_states[i][t]`: trial `t` on `buses[i]`.
    pub trial_states: Vec<Vec<ComplexState>>,
}

/// Solved random load situation drawn from stream `(seed, domain, a, b)`,
/// re-drawing scenarios whose power flow fails.
pub fn random_state(case: &GridCase, config: &ExperimentConfig, tag: u64, a: u64, b: u64) -> Result<ComplexState> {
    let seed = derive_seed(config.seed, tag, a, b);
    for attempt in 0..TRIAL_REDRAWS as u64 {
        let sc = scenario(case, config.load_sigma, seed, attempt)?;
        if let Ok(state) = solve_ac(&sc, &config.solver) {
            return Ok(state);
        }
    }
    Err(Error::RedrawCapExceeded { cap: TRIAL_REDRAWS, found: 0, wanted: 1 })
}

/// Standard-normal complex draws (real then imaginary part per bus).
pub fn unit_noise(seed: u64, tag: u64, a: u64, b: u64, len: usize) -> Vec<Complex64> {
    let mut rng = stream_rng(seed, stream_id(tag, a, b));
    (0..len)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect()
}

fn add_noise(state: &ComplexState, unit: &[Complex64], sigma_e: f64) -> ComplexState {
    if sigma_e == 0.0 {
        return state.clone();
    }
    let v = state.v.iter().zip(unit).map(|(v, z)| v + z * sigma_e).collect();
    ComplexState { v, provenance: Provenance::Noisy }
}

impl Harness {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let case = config.load_case()?;
        let pair = grid_laplacians(&case, LaplacianMode::Ac)?;
        let historic = config.historic(&case)?;
        let buses = config.attacked_buses(&case)?;
        let trial_states = buses
            .par_iter()
            .map(|&b| {
                (0..config.trials)
                    .map(|t| random_state(&case, config, domain::TRIAL, b as u64, t as u64))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Harness { config: config.clone(), case, pair, historic, buses, trial_states })
    }

    pub fn calibrate(&self, alpha_sigma: f64) -> Result<DetectorModel> {
        calibrate(&self.pair, &self.historic, &self.config.params(alpha_sigma))
    }

    /// Cutoffs from the clean historic states, thresholds from the same
    /// states with estimation noise of level `sigma_e`.
    pub fn calibrate_noisy(&self, alpha_sigma: f64, sigma_e: f64) -> Result<DetectorModel> {
        if sigma_e == 0.0 {
            return self.calibrate(alpha_sigma);
        }
        let m = self.case.bus_count();
        let noisy: Vec<ComplexState> = self
            .historic
            .iter()
            .enumerate()
            .map(|(i, s)| add_noise(s, &unit_noise(self.config.seed, domain::HISTORIC_NOISE, i as u64, 0, m), sigma_e))
            .collect();
        calibrate_split(&self.pair, &self.historic, &noisy, &self.config.params(alpha_sigma))
    }

    /// Runs every (bus, trial, delta) combination of a single-bus sweep.
    pub fn sweep(&self, model: &DetectorModel, kind: AttackKind, deltas: &[f64], sigma_e: f64) -> Result<Vec<TrialOutcome>> {
        let m = self.case.bus_count();
        let jobs: Vec<(usize, usize)> =
            (0..self.buses.len()).flat_map(|i| (0..self.config.trials).map(move |t| (i, t))).collect();
        let chunks = jobs
            .par_iter()
            .map(|&(i, t)| {
                let bus = self.buses[i];
                let unit = unit_noise(self.config.seed, domain::NOISE, bus as u64, t as u64, m);
                let noisy = add_noise(&self.trial_states[i][t], &unit, sigma_e);
                deltas
                    .iter()
                    .map(|&delta| {
                        let attacked = apply_attack(&self.case, &noisy, &kind.spec(bus, delta))?;
                        let report = detect(model, &attacked.state)?;
                        Ok(outcome(bus, delta, &report))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }
}

fn outcome(bus: usize, delta: f64, report: &DetectionReport) -> TrialOutcome {
    TrialOutcome {
        bus,
        delta,
        detected: report.verdict.is_attack(),
        real_fired: report.fired(SignalPart::Real),
        imag_fired: report.fired(SignalPart::Imag),
    }
}

/// Aggregates trial outcomes into an exceedance curve over `|delta|`.
pub fn exceedance_curve(outcomes: &[(f64, bool)]) -> Vec<CurvePoint> {
    let mut levels: Vec<f64> = outcomes.iter().map(|(d, _)| d.abs()).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let rate = |pred: &dyn Fn(f64) -> bool| {
        let (hits, n) = outcomes
            .iter()
            .filter(|(d, _)| pred(*d))
            .fold((0usize, 0usize), |(h, n), (_, det)| (h + *det as usize, n + 1));
        (if n > 0 { hits as f64 / n as f64 } else { 0.0 }, n)
    };
    let false_alarm = levels
        .first()
        .filter(|&&l| l == 0.0)
        .map(|_| rate(&|d: f64| d == 0.0).0);
    levels
        .iter()
        .map(|&level| {
            let (p, n) = if level == 0.0 { rate(&|d| d == 0.0) } else { rate(&|d| d.abs() >= level - 1e-9) };
            let (pp, pn) = rate(&|d| (d.abs() - level).abs() < 1e-9);
            CurvePoint {
                delta: level,
                detection_probability: p,
                trials: n,
                point_probability: pp,
                point_trials: pn,
                false_alarm,
            }
        })
        .collect()
}

pub fn attribution(kind: AttackKind, alpha_sigma: f64, outcomes: &[TrialOutcome]) -> Attribution {
    let detected: Vec<&TrialOutcome> = outcomes.iter().filter(|o| o.delta != 0.0 && o.detected).collect();
    let n = detected.len();
    let pct = |f: &dyn Fn(&TrialOutcome) -> bool| {
        if n == 0 {
            0.0
        } else {
            100.0 * detected.iter().filter(|o| f(o)).count() as f64 / n as f64
        }
    };
    Attribution {
        kind,
        alpha_sigma,
        detections: n,
        real_only: pct(&|o| o.real_fired && !o.imag_fired),
        imag_only: pct(&|o| o.imag_fired && !o.real_fired),
        both: pct(&|o| o.real_fired && o.imag_fired),
    }
}

fn curve_from(kind: AttackKind, alpha_sigma: f64, sigma_e: f64, outcomes: &[TrialOutcome]) -> Curve {
    let pairs: Vec<(f64, bool)> = outcomes.iter().map(|o| (o.delta, o.detected)).collect();
    Curve { kind, alpha_sigma, sigma_e, points: exceedance_curve(&pairs) }
}

// ---------------------------------------------------------------- outputs

#[derive(Serialize)]
struct CurveRow {
    kind: AttackKind,
    alpha_sigma: f64,
    sigma_e: f64,
    delta: f64,
    detection_probability: f64,
    trials: usize,
    point_probability: f64,
    point_trials: usize,
    false_alarm: Option<f64>,
}

fn curve_rows<'a>(curves: impl IntoIterator<Item = &'a Curve>) -> Vec<CurveRow> {
    curves
        .into_iter()
        .flat_map(|c| {
            c.points.iter().map(move |p| CurveRow {
                kind: c.kind,
                alpha_sigma: c.alpha_sigma,
                sigma_e: c.sigma_e,
                delta: p.delta,
                detection_probability: p.detection_probability,
                trials: p.trials,
                point_probability: p.point_probability,
                point_trials: p.point_trials,
                false_alarm: p.false_alarm,
            })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(std::io::Error::from)?;
    for row in rows {
        w.serialize(row).map_err(std::io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

// -------------------------------------------------------- test case 1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessRow {
    pub case: String,
    pub part: SignalPart,
    pub buses: usize,
    pub total_variation: f64,
    pub per_bus: f64,
}

/// Total variation of the nominal state of every listed case.
pub fn run_tc1(config: &ExperimentConfig) -> Result<Vec<SmoothnessRow>> {
    let mut rows = Vec::new();
    for name in &config.smoothness_cases {
        let case = resolve_case(name)?;
        let pair = grid_laplacians(&case, LaplacianMode::Ac)?;
        let state = solve_ac(&case, &config.solver)?;
        let m = case.bus_count();
        let label = Path::new(name).file_stem().map_or(name.clone(), |s| s.to_string_lossy().into_owned());
        for (part, l, s) in [(SignalPart::Real, &pair.yr, state.real_part()), (SignalPart::Imag, &pair.yj, state.imag_part())] {
            let (tv, _) = total_variation(l, &s)?;
            rows.push(SmoothnessRow { case: label.clone(), part, buses: m, total_variation: tv, per_bus: tv / m as f64 });
        }
    }
    Ok(rows)
}

pub fn write_tc1(rows: &[SmoothnessRow], dir: &Path) -> Result<()> {
    prepare(dir)?;
    write_csv(&dir.join("tc1_smoothness.csv"), rows)
}

// -------------------------------------------------------- test case 2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tc2Result {
    pub angle: Vec<Curve>,
    pub magnitude: Vec<Curve>,
    pub attribution: Vec<Attribution>,
}

impl Tc2Result {
    pub fn curve(&self, kind: AttackKind, alpha_sigma: f64) -> Option<&Curve> {
        let curves = match kind {
            AttackKind::Angle => &self.angle,
            AttackKind::Magnitude => &self.magnitude,
        };
        curves.iter().find(|c| c.alpha_sigma == alpha_sigma)
    }

    pub fn attribution(&self, kind: AttackKind, alpha_sigma: f64) -> Option<&Attribution> {
        self.attribution.iter().find(|a| a.kind == kind && a.alpha_sigma == alpha_sigma)
    }
}

/// Single-bus angle and magnitude sweeps for every confidence scale.
pub fn run_tc2(config: &ExperimentConfig) -> Result<Tc2Result> {
    run_tc2_with(&Harness::new(config)?)
}

pub fn run_tc2_with(h: &Harness) -> Result<Tc2Result> {
    let mut out = Tc2Result { angle: Vec::new(), magnitude: Vec::new(), attribution: Vec::new() };
    for &alpha in &h.config.alphas {
        let model = h.calibrate(alpha)?;
        for kind in [AttackKind::Angle, AttackKind::Magnitude] {
            let deltas = match kind {
                AttackKind::Angle => &h.config.angle_grid,
                AttackKind::Magnitude => &h.config.magnitude_grid,
            };
            let outcomes = h.sweep(&model, kind, deltas, 0.0)?;
            let curve = curve_from(kind, alpha, 0.0, &outcomes);
            out.attribution.push(attribution(kind, alpha, &outcomes));
            match kind {
                AttackKind::Angle => out.angle.push(curve),
                AttackKind::Magnitude => out.magnitude.push(curve),
            }
        }
    }
    Ok(out)
}

pub fn write_tc2(result: &Tc2Result, dir: &Path) -> Result<()> {
    prepare(dir)?;
    write_csv(&dir.join("tc2_angle.csv"), &curve_rows(&result.angle))?;
    write_csv(&dir.join("tc2_magnitude.csv"), &curve_rows(&result.magnitude))?;
    write_csv(&dir.join("tc2_attribution.csv"), &result.attribution)
}

// -------------------------------------------------------- test case 3

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tc3Result {
    /// One curve per (kind, noise level); noise level 0 is the reference.
    pub curves: Vec<Curve>,
}

impl Tc3Result {
    pub fn curve(&self, kind: AttackKind, sigma_e: f64) -> Option<&Curve> {
        self.curves.iter().find(|c| c.kind == kind && c.sigma_e == sigma_e)
    }
}

/// Sweeps with estimation noise added to every trial state.
pub fn run_tc3(config: &ExperimentConfig) -> Result<Tc3Result> {
    run_tc3_with(&Harness::new(config)?)
}

pub fn run_tc3_with(h: &Harness) -> Result<Tc3Result> {
    let alpha = h.config.alpha_sigma;
    let mut sigmas = vec![0.0];
    sigmas.extend(h.config.noise_sigmas.iter().copied().filter(|&s| s != 0.0));
    let mut curves = Vec::new();
    for kind in [AttackKind::Angle, AttackKind::Magnitude] {
        let deltas = match kind {
            AttackKind::Angle => &h.config.angle_grid,
            AttackKind::Magnitude => &h.config.magnitude_grid,
        };
        for &sigma_e in &sigmas {
            let model = h.calibrate_noisy(alpha, sigma_e)?;
            let outcomes = h.sweep(&model, kind, deltas, sigma_e)?;
            curves.push(curve_from(kind, alpha, sigma_e, &outcomes));
        }
    }
    Ok(Tc3Result { curves })
}

pub fn write_tc3(result: &Tc3Result, dir: &Path) -> Result<()> {
    prepare(dir)?;
    let of = |k: AttackKind| curve_rows(result.curves.iter().filter(|c| c.kind == k));
    write_csv(&dir.join("tc3_angle.csv"), &of(AttackKind::Angle))?;
    write_csv(&dir.join("tc3_magnitude.csv"), &of(AttackKind::Magnitude))
}

// -------------------------------------------------------- test case 4

/// Magnitudes of the GFT coefficients of one signal against one Laplacian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDump {
    pub term: TermId,
    pub signal: String,
    pub threshold: f64,
    pub cutoff_index: usize,
    /// (normalized frequency, |coefficient|, |filtered coefficient|)
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tc4Result {
    pub attack: AttackSpec,
    pub attacked: DetectionReport,
    pub control: DetectionReport,
    pub spectra: Vec<SpectrumDump>,
}

pub fn spectra_dump(model: &DetectorModel, state: &ComplexState, label: &str) -> Result<Vec<SpectrumDump>> {
    model
        .terms
        .iter()
        .map(|t| {
            let signal = match t.term.part {
                SignalPart::Real => state.real_part(),
                SignalPart::Imag => state.imag_part(),
            };
            let raw = t.basis.gft(&signal)?;
            let (filtered, _) = filter_and_stat(&t.basis, &t.design, &signal)?;
            let points = t
                .basis
                .normalized_frequencies()
                .into_iter()
                .zip(raw.coeffs.iter().zip(filtered.coeffs.iter()))
                .map(|(f, (c, h))| (f, c.abs(), h.abs()))
                .collect();
            Ok(SpectrumDump {
                term: t.term,
                signal: label.to_string(),
                threshold: t.threshold,
                cutoff_index: t.design.cutoff_index,
                points,
            })
        })
        .collect()
}

/// Combined angle and magnitude attack on several buses of the nominal state.
pub fn run_tc4(config: &ExperimentConfig) -> Result<Tc4Result> {
    config.validate()?;
    let case = config.load_case()?;
    let pair = grid_laplacians(&case, LaplacianMode::Ac)?;
    let historic = config.historic(&case)?;
    let model = calibrate(&pair, &historic, &config.params(config.alpha_sigma))?;
    let nominal = solve_ac(&case, &config.solver)?;

    let targets = |angle: f64, magnitude: f64| AttackSpec {
        targets: config
            .multi_bus_targets
            .iter()
            .map(|&bus| AttackTarget { bus, delta_angle_deg: angle, delta_magnitude: magnitude })
            .collect(),
    };
    let attack = targets(config.multi_bus_angle_deg, config.multi_bus_magnitude);
    let attacked = apply_attack(&case, &nominal, &attack)?.state;
    let control = apply_attack(&case, &nominal, &targets(0.0, 0.0))?.state;

    let mut spectra = spectra_dump(&model, &nominal, "clean")?;
    spectra.extend(spectra_dump(&model, &attacked, "attacked")?);
    Ok(Tc4Result {
        attack,
        attacked: detect(&model, &attacked)?,
        control: detect(&model, &control)?,
        spectra,
    })
}

pub fn write_tc4(result: &Tc4Result, dir: &Path) -> Result<()> {
    prepare(dir)?;
    #[derive(Serialize)]
    struct Report<'a> {
        attack: &'a AttackSpec,
        attacked: &'a DetectionReport,
        control: &'a DetectionReport,
    }
    write_json(
        &dir.join("tc4_report.json"),
        &Report { attack: &result.attack, attacked: &result.attacked, control: &result.control },
    )?;
    write_json(&dir.join("tc4_spectra.json"), &result.spectra)
}

// -------------------------------------------------- baseline comparison

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResult {
    pub alpha_sigma: f64,
    /// GSP alarm rate on the unattacked trial states, matched by both baselines.
    pub target_false_alarm: f64,
    pub norm_threshold: f64,
    pub residual_threshold: f64,
    pub gsp: Vec<CurvePoint>,
    pub norm: Vec<CurvePoint>,
    pub residual: Vec<CurvePoint>,
}

/// GSP detector against the state-norm and consecutive-residual baselines
/// on the angle sweep. Baseline thresholds are bisected so that their alarm
/// rate on the unattacked trial states matches the GSP detector's. The
/// previous state of each trial is an independent random load situation.
pub fn run_compare(config: &ExperimentConfig) -> Result<CompareResult> {
    run_compare_with(&Harness::new(config)?)
}

pub fn run_compare_with(h: &Harness) -> Result<CompareResult> {
    let cfg = &h.config;
    let alpha = cfg.alpha_sigma;
    let model = h.calibrate(alpha)?;
    let jobs: Vec<(usize, usize)> = (0..h.buses.len()).flat_map(|i| (0..cfg.trials).map(move |t| (i, t))).collect();
    let previous = jobs
        .par_iter()
        .map(|&(i, t)| random_state(&h.case, cfg, domain::PREVIOUS, h.buses[i] as u64, t as u64))
        .collect::<Result<Vec<_>>>()?;

    // thresholds matched on the unattacked trial states themselves
    let clean = jobs
        .par_iter()
        .zip(&previous)
        .map(|(&(i, t), prev)| {
            let s = &h.trial_states[i][t];
            Ok((detect(&model, s)?.verdict.is_attack(), s.norm(), residual_norm(s, prev)))
        })
        .collect::<Result<Vec<_>>>()?;
    let target = clean.iter().filter(|c| c.0).count() as f64 / clean.len() as f64;
    let norms: Vec<f64> = clean.iter().map(|c| c.1).collect();
    let residuals: Vec<f64> = clean.iter().map(|c| c.2).collect();
    let norm_threshold = calibrate_threshold(&norms, target)?;
    let residual_threshold = calibrate_threshold(&residuals, target)?;

    let rows = jobs
        .par_iter()
        .zip(&previous)
        .map(|(&(i, t), prev)| {
            let bus = h.buses[i];
            cfg.angle_grid
                .iter()
                .map(|&delta| {
                    let s = apply_attack(&h.case, &h.trial_states[i][t], &AttackKind::Angle.spec(bus, delta))?.state;
                    let gsp = detect(&model, &s)?.verdict.is_attack();
                    Ok((delta, gsp, s.norm() > norm_threshold, residual_norm(&s, prev) > residual_threshold))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = rows.into_iter().flatten().collect();
    let curve = |pick: fn(&(f64, bool, bool, bool)) -> bool| {
        exceedance_curve(&rows.iter().map(|r| (r.0, pick(r))).collect::<Vec<_>>())
    };
    Ok(CompareResult {
        alpha_sigma: alpha,
        target_false_alarm: target,
        norm_threshold,
        residual_threshold,
        gsp: curve(|r| r.1),
        norm: curve(|r| r.2),
        residual: curve(|r| r.3),
    })
}

pub fn write_compare(result: &CompareResult, dir: &Path) -> Result<()> {
    prepare(dir)?;
    #[derive(Serialize)]
    struct Row<'a> {
        method: &'a str,
        threshold: Option<f64>,
        delta: f64,
        detection_probability: f64,
        trials: usize,
        point_probability: f64,
        point_trials: usize,
        false_alarm: Option<f64>,
    }
    let mut rows = Vec::new();
    for (method, threshold, curve) in [
        ("gsp", None, &result.gsp),
        ("norm", Some(result.norm_threshold), &result.norm),
        ("residual", Some(result.residual_threshold), &result.residual),
    ] {
        rows.extend(curve.iter().map(|p| Row {
            method,
            threshold,
            delta: p.delta,
            detection_probability: p.detection_probability,
            trials: p.trials,
            point_probability: p.point_probability,
            point_trials: p.point_trials,
            false_alarm: p.false_alarm,
        }));
    }
    write_csv(&dir.join("tc5_compare.csv"), &rows)
}

/// Fraction of `states` on which `model` raises an alarm.
pub fn false_alarm_rate(model: &DetectorModel, states: &[ComplexState]) -> Result<f64> {
    let alarms = states
        .par_iter()
        .map(|s| detect(model, s).map(|r| r.verdict.is_attack() as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok(alarms.iter().sum::<usize>() as f64 / states.len().max(1) as f64)
}

/// `count` fresh clean states, independent of historic and trial states.
pub fn fresh_states(config: &ExperimentConfig, case: &GridCase, count: usize) -> Result<Vec<ComplexState>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| random_state(case, config, domain::FRESH, i, 2))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n_historic: 30,
            trials: 4,
            buses: vec![4, 9],
            angle_grid: vec![-6.0, -3.0, 0.0, 3.0, 6.0],
            magnitude_grid: vec![-0.1, 0.0, 0.1],
            alphas: vec![2.0],
            noise_sigmas: vec![0.001],
            ..Default::default()
        }
    }

    #[test]
    fn default_grids() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.angle_grid.len(), 25);
        assert_eq!(cfg.magnitude_grid.len(), 21);
        assert_eq!(cfg.magnitude_grid[0], -0.2);
        assert_eq!(cfg.magnitude_grid[10], 0.0);
        assert!(cfg.validate().is_ok());
        let bad = ExperimentConfig { trials: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { angle_grid: vec![], ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn exceedance_aggregation() {
        let outcomes = [(0.0, true), (0.0, false), (-1.0, false), (1.0, true), (2.0, true), (-2.0, true)];
        let c = exceedance_curve(&outcomes);
        assert_eq!(c.len(), 3);
        assert_eq!((c[0].delta, c[0].detection_probability, c[0].trials), (0.0, 0.5, 2));
        assert_eq!((c[1].delta, c[1].detection_probability, c[1].trials), (1.0, 0.75, 4));
        assert_eq!((c[1].point_probability, c[1].point_trials), (0.5, 2));
        assert_eq!((c[2].delta, c[2].detection_probability, c[2].trials), (2.0, 1.0, 2));
        assert!(c.iter().all(|p| p.false_alarm == Some(0.5)));
    }

    #[test]
    fn attribution_percentages() {
        let o = |delta, detected, real_fired, imag_fired| TrialOutcome { bus: 2, delta, detected, real_fired, imag_fired };
        let outcomes = [o(0.0, true, true, false), o(1.0, true, true, false), o(1.0, true, false, true), o(2.0, true, true, true), o(2.0, false, false, false)];
        let a = attribution(AttackKind::Angle, 2.0, &outcomes);
        assert_eq!(a.detections, 3);
        assert!((a.real_only - 100.0 / 3.0).abs() < 1e-12);
        assert!((a.any_real() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_tc3_reproduces_tc2() {
        let h = Harness::new(&small()).unwrap();
        let tc2 = run_tc2_with(&h).unwrap();
        let tc3 = run_tc3_with(&h).unwrap();
        assert_eq!(tc3.curve(AttackKind::Angle, 0.0).unwrap().points, tc2.angle[0].points);
        assert_eq!(tc3.curve(AttackKind::Magnitude, 0.0).unwrap().points, tc2.magnitude[0].points);
    }

    #[test]
    fn outputs_are_reproducible() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for dir in [dir_a.path(), dir_b.path()] {
            let cfg = small();
            write_tc2(&run_tc2(&cfg).unwrap(), dir).unwrap();
            write_compare(&run_compare(&cfg).unwrap(), dir).unwrap();
        }
        for name in ["tc2_angle.csv", "tc2_magnitude.csv", "tc2_attribution.csv", "tc5_compare.csv"] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name}");
        }
        let rows = fs::read_to_string(dir_a.path().join("tc2_angle.csv")).unwrap().lines().count();
        assert_eq!(rows, 1 + 3);
    }

    #[test]
    fn multi_bus_report_shape() {
        let cfg = ExperimentConfig { n_historic: 30, ..Default::default() };
        let r = run_tc4(&cfg).unwrap();
        assert_eq!(r.spectra.len(), 8);
        assert!(r.spectra.iter().all(|s| s.points.len() == 14));
        assert_eq!(r.attack.targets.len(), 7);
    }
}
