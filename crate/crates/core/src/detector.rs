//! Threshold calibration and the four-term high-pass detector, its
//! smoothness and DC-model variants, and two norm-based baselines.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LaplacianMode, LaplacianPair};
use crate::gsp::{
    design_poly_filter, filter_and_stat, select_cutoff, spectral_basis, total_variation, GhpfDesign,
    LaplacianKind, SpectralBasis, Spectrum,
};
use crate::powerflow::ComplexState;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalPart {
    Real,
    Imag,
}

/// One (Laplacian, signal part) combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TermId {
    pub matrix: LaplacianKind,
    pub part: SignalPart,
}

impl TermId {
    pub const fn new(matrix: LaplacianKind, part: SignalPart) -> Self {
        TermId { matrix, part }
    }

    /// The four AC terms.
    pub const ALL: [TermId; 4] = [
        TermId::new(LaplacianKind::Yr, SignalPart::Real),
        TermId::new(LaplacianKind::Yj, SignalPart::Real),
        TermId::new(LaplacianKind::Yj, SignalPart::Imag),
        TermId::new(LaplacianKind::Yr, SignalPart::Imag),
    ];
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = match self.matrix {
            LaplacianKind::Yr => "yr",
            LaplacianKind::Yj => "yj",
        };
        let p = match self.part {
            SignalPart::Real => "real",
            SignalPart::Imag => "imag",
        };
        write!(f, "{m}/{p}")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    /// `mean + alpha * sd` of the historic statistics.
    #[default]
    Averaged,
    /// Largest historic statistic.
    Maximum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilons {
    pub real: f64,
    pub imag: f64,
}

impl Default for Epsilons {
    fn default() -> Self {
        Epsilons { real: 1e-4, imag: 1e-3 }
    }
}

impl Epsilons {
    pub fn for_part(&self, part: SignalPart) -> f64 {
        match part {
            SignalPart::Real => self.real,
            SignalPart::Imag => self.imag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationParams {
    pub epsilons: Epsilons,
    pub alpha_sigma: f64,
    pub alpha_sigma_s: f64,
    pub rule: ThresholdRule,
    /// Number of terms that must exceed their threshold for an alarm.
    pub min_terms: usize,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams {
            epsilons: Epsilons::default(),
            alpha_sigma: 2.0,
            alpha_sigma_s: 2.0,
            rule: ThresholdRule::Averaged,
            min_terms: 1,
        }
    }
}

impl CalibrationParams {
    fn validate(&self, terms: usize) -> Result<()> {
        let eps_ok = |e: f64| e > 0.0 && e.is_finite();
        if !eps_ok(self.epsilons.real) || !eps_ok(self.epsilons.imag) {
            return Err(Error::InvalidParameter(format!("epsilons must be positive: {:?}", self.epsilons)));
        }
        if !self.alpha_sigma.is_finite() || !self.alpha_sigma_s.is_finite() {
            return Err(Error::InvalidParameter("confidence scales must be finite".into()));
        }
        if self.min_terms == 0 || self.min_terms > terms {
            return Err(Error::InvalidParameter(format!(
                "min_terms must lie in 1..={terms}, got {}",
                self.min_terms
            )));
        }
        Ok(())
    }
}

/// Sample mean and standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Stats { mean, std: var.sqrt(), max }
    }

    fn threshold(&self, rule: ThresholdRule, alpha: f64) -> f64 {
        match rule {
            ThresholdRule::Averaged => self.mean + alpha * self.std,
            ThresholdRule::Maximum => self.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermModel {
    pub term: TermId,
    pub basis: SpectralBasis,
    pub design: GhpfDesign,
    pub threshold: f64,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessModel {
    pub part: SignalPart,
    pub threshold: f64,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub format_version: u32,
    pub mode: LaplacianMode,
    pub params: CalibrationParams,
    pub n_historic: usize,
    pub terms: Vec<TermModel>,
    pub smoothness: Vec<SmoothnessModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    H0,
    H1,
}

impl Verdict {
    pub fn is_attack(self) -> bool {
        self == Verdict::H1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub term: TermId,
    pub psi: f64,
    pub threshold: f64,
    pub exceeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub part: SignalPart,
    pub total_variation: f64,
    pub threshold: f64,
    pub exceeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub terms: Vec<TermReport>,
    pub smoothness: Vec<SmoothnessReport>,
    pub verdict: Verdict,
    pub triggers: Vec<TermId>,
}

impl DetectionReport {
    pub fn fired(&self, part: SignalPart) -> bool {
        self.triggers.iter().any(|t| t.part == part)
    }
}

fn signal(state: &ComplexState, part: SignalPart) -> Vec<f64> {
    match part {
        SignalPart::Real => state.real_part(),
        SignalPart::Imag => state.imag_part(),
    }
}

fn smoothness_matrix(part: SignalPart) -> LaplacianKind {
    match part {
        SignalPart::Real => LaplacianKind::Yr,
        SignalPart::Imag => LaplacianKind::Yj,
    }
}

/// Calibrates on a single historic set.
pub fn calibrate(pair: &LaplacianPair, historic: &[ComplexState], params: &CalibrationParams) -> Result<DetectorModel> {
    calibrate_split(pair, historic, historic, params)
}

/// Calibrates with cutoffs chosen on `cutoff_states` and thresholds measured
/// on `threshold_states`. Using clean states for the first and states with
/// estimation noise for the second keeps the cutoff search meaningful while
/// thresholds account for the noise floor.
pub fn calibrate_split(
    pair: &LaplacianPair,
    cutoff_states: &[ComplexState],
    threshold_states: &[ComplexState],
    params: &CalibrationParams,
) -> Result<DetectorModel> {
    if pair.mode != LaplacianMode::Ac {
        return Err(Error::InvalidParameter("AC calibration needs an AC Laplacian pair".into()));
    }
    params.validate(TermId::ALL.len())?;
    if threshold_states.len() < 2 || cutoff_states.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "calibration needs at least 2 historic states, got {}",
            threshold_states.len()
        )));
    }
    let m = pair.dim();
    for s in cutoff_states.iter().chain(threshold_states) {
        if s.len() != m {
            return Err(Error::Dimension { expected: m, got: s.len() });
        }
    }

    let (yr, yj) = rayon::join(|| spectral_basis(&pair.yr), || spectral_basis(&pair.yj));
    let yr = yr?.with_source(LaplacianKind::Yr, LaplacianMode::Ac);
    let yj = yj?.with_source(LaplacianKind::Yj, LaplacianMode::Ac);
    let basis_for = |k: LaplacianKind| match k {
        LaplacianKind::Yr => &yr,
        LaplacianKind::Yj => &yj,
    };

    let terms = TermId::ALL
        .par_iter()
        .map(|&term| {
            let basis = basis_for(term.matrix);
            let cut: Vec<Vec<f64>> = cutoff_states.iter().map(|s| signal(s, term.part)).collect();
            let thr: Vec<Vec<f64>> = threshold_states.iter().map(|s| signal(s, term.part)).collect();
            calibrate_term(term, basis, &cut, &thr, params.epsilons.for_part(term.part), params)
        })
        .collect::<Result<Vec<_>>>()?;

    let smoothness = [SignalPart::Real, SignalPart::Imag]
        .iter()
        .map(|&part| {
            let l = &basis_for(smoothness_matrix(part)).laplacian;
            let values = threshold_states
                .iter()
                .map(|s| total_variation(l, &signal(s, part)).map(|(v, _)| v))
                .collect::<Result<Vec<_>>>()?;
            let stats = Stats::of(&values);
            Ok(SmoothnessModel { part, threshold: stats.mean + params.alpha_sigma_s * stats.std, stats })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DetectorModel {
        format_version: MODEL_FORMAT_VERSION,
        mode: LaplacianMode::Ac,
        params: *params,
        n_historic: threshold_states.len(),
        terms,
        smoothness,
    })
}

fn calibrate_term(
    term: TermId,
    basis: &SpectralBasis,
    cutoff_signals: &[Vec<f64>],
    threshold_signals: &[Vec<f64>],
    epsilon: f64,
    params: &CalibrationParams,
) -> Result<TermModel> {
    let spectra = cutoff_signals.iter().map(|s| basis.gft(s)).collect::<Result<Vec<Spectrum>>>()?;
    let design = select_cutoff(basis, &spectra, epsilon)?;
    let design = design_poly_filter(basis, &design)?;
    let psi = threshold_signals
        .par_iter()
        .map(|s| filter_and_stat(basis, &design, s).map(|(_, psi)| psi))
        .collect::<Result<Vec<f64>>>()?;
    let stats = Stats::of(&psi);
    let threshold = stats.threshold(params.rule, params.alpha_sigma);
    log::debug!(
        "term {term}: cutoff index {} of {}, threshold {threshold:e}",
        design.cutoff_index,
        basis.dim()
    );
    Ok(TermModel { term, basis: basis.clone(), design, threshold, stats })
}

/// Single-term DC-model calibration on voltage-angle vectors.
pub fn calibrate_dc(laplacian: &DMatrix<f64>, historic_angles: &[Vec<f64>], params: &CalibrationParams) -> Result<DetectorModel> {
    params.validate(1)?;
    if historic_angles.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "calibration needs at least 2 historic states, got {}",
            historic_angles.len()
        )));
    }
    let basis = spectral_basis(laplacian)?.with_source(LaplacianKind::Yr, LaplacianMode::Dc);
    let term = TermId::new(LaplacianKind::Yr, SignalPart::Real);
    let model = calibrate_term(term, &basis, historic_angles, historic_angles, params.epsilons.real, params)?;
    let values = historic_angles
        .iter()
        .map(|a| total_variation(laplacian, a).map(|(v, _)| v))
        .collect::<Result<Vec<_>>>()?;
    let stats = Stats::of(&values);
    Ok(DetectorModel {
        format_version: MODEL_FORMAT_VERSION,
        mode: LaplacianMode::Dc,
        params: *params,
        n_historic: historic_angles.len(),
        terms: vec![model],
        smoothness: vec![SmoothnessModel {
            part: SignalPart::Real,
            threshold: stats.mean + params.alpha_sigma_s * stats.std,
            stats,
        }],
    })
}

impl DetectorModel {
    pub fn dim(&self) -> usize {
        self.terms.first().map_or(0, |t| t.basis.dim())
    }

    pub fn term(&self, id: TermId) -> Option<&TermModel> {
        self.terms.iter().find(|t| t.term == id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion(header.format_version));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::Dimension { expected: self.dim(), got });
        }
        Ok(())
    }

    fn report(&self, signals: impl Fn(SignalPart) -> Vec<f64>) -> Result<DetectionReport> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let (_, psi) = filter_and_stat(&t.basis, &t.design, &signals(t.term.part))?;
                Ok(TermReport { term: t.term, psi, threshold: t.threshold, exceeded: psi > t.threshold })
            })
            .collect::<Result<Vec<_>>>()?;
        let smoothness = self
            .smoothness
            .iter()
            .map(|sm| {
                let l = &self.laplacian_for(smoothness_matrix(sm.part));
                let (s, _) = total_variation(l, &signals(sm.part))?;
                Ok(SmoothnessReport { part: sm.part, total_variation: s, threshold: sm.threshold, exceeded: s > sm.threshold })
            })
            .collect::<Result<Vec<_>>>()?;
        let triggers: Vec<TermId> = terms.iter().filter(|t| t.exceeded).map(|t| t.term).collect();
        let verdict = if triggers.len() >= self.params.min_terms { Verdict::H1 } else { Verdict::H0 };
        Ok(DetectionReport { terms, smoothness, verdict, triggers })
    }

    fn laplacian_for(&self, kind: LaplacianKind) -> &DMatrix<f64> {
        let t = self
            .terms
            .iter()
            .find(|t| t.term.matrix == kind)
            .unwrap_or(&self.terms[0]);
        &t.basis.laplacian
    }
}

/// Runs the four high-pass terms; H1 when at least `min_terms` exceed.
pub fn detect(model: &DetectorModel, state: &ComplexState) -> Result<DetectionReport> {
    model.check_dim(state.len())?;
    model.report(|part| signal(state, part))
}

/// Same report, with the verdict taken from the total-variation thresholds.
pub fn detect_smoothness(model: &DetectorModel, state: &ComplexState) -> Result<DetectionReport> {
    let mut report = detect(model, state)?;
    report.verdict = if report.smoothness.iter().any(|s| s.exceeded) { Verdict::H1 } else { Verdict::H0 };
    Ok(report)
}

pub fn detect_dc(model: &DetectorModel, angles: &[f64]) -> Result<DetectionReport> {
    if model.mode != LaplacianMode::Dc {
        return Err(Error::InvalidParameter("DC detection needs a DC model".into()));
    }
    model.check_dim(angles.len())?;
    model.report(|_| angles.to_vec())
}

/// Alarm when the state's 2-norm exceeds `threshold`.
pub fn baseline_norm(state: &ComplexState, threshold: f64) -> Verdict {
    if state.norm() > threshold {
        Verdict::H1
    } else {
        Verdict::H0
    }
}

/// Alarm when the 2-norm of the change between consecutive states exceeds `threshold`.
pub fn baseline_residual(current: &ComplexState, previous: &ComplexState, threshold: f64) -> Verdict {
    if residual_norm(current, previous) > threshold {
        Verdict::H1
    } else {
        Verdict::H0
    }
}

pub fn residual_norm(current: &ComplexState, previous: &ComplexState) -> f64 {
    current.v.iter().zip(&previous.v).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

/// Bisects for the smallest threshold whose exceedance rate on the clean
/// `values` does not exceed `target_rate`.
pub fn calibrate_threshold(values: &[f64], target_rate: f64) -> Result<f64> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Bisection("needs finite clean statistics".into()));
    }
    if !(0.0..=1.0).contains(&target_rate) {
        return Err(Error::Bisection(format!("target rate {target_rate} outside [0, 1]")));
    }
    let rate = |t: f64| values.iter().filter(|&&v| v > t).count() as f64 / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (min - 1.0 - min.abs(), max);
    if rate(lo) <= target_rate {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(hi);
        }
        if rate(mid) <= target_rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::Bisection(format!("no convergence between {lo:e} and {hi:e}")))
}
