//! Grid description, admittance matrix and the real Laplacian pair.
//!
//! The complex admittance matrix is a weighted graph Laplacian with edge
//! weight `y = 1 / (r + jx)`. Shunts, transformer taps and phase shifters are
//! not modelled, so every row of `Y` sums to zero. Splitting `Y` into
//! `Re(Y)` and `-Im(Y)` gives two real symmetric Laplacians whose spectra
//! define the graph frequencies used by the detector.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IEEE14_JSON: &str = include_str!("../data/ieee14.json");
const IEEE30_JSON: &str = include_str!("../data/ieee30.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// A bus with its power setpoints in p.u.
///
/// Positive `p`/`q` is injection (generation), negative is consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default = "unit_voltage")]
    pub v: f64,
}

fn unit_voltage() -> f64 {
    1.0
}

/// A transmission line (or transformer branch) with series impedance in p.u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
}

impl Line {
    pub fn admittance(&self) -> Complex64 {
        Complex64::new(self.r, self.x).inv()
    }
}

/// A validated grid: buses sorted by id (`id == index + 1`), one line per
/// unordered bus pair, exactly one slack bus, connected topology.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
}

#[derive(Deserialize)]
struct RawCase {
    base_mva: f64,
    buses: Vec<Bus>,
    lines: Vec<Line>,
}

/// Parses and validates a JSON case file.
pub fn parse_case(text: &str) -> Result<GridCase> {
    let raw: RawCase = serde_json::from_str(text)?;
    GridCase::new(raw.base_mva, raw.buses, raw.lines)
}

impl GridCase {
    /// Validates the case, sorts buses by id and merges parallel lines by
    /// admittance addition.
    pub fn new(base_mva: f64, mut buses: Vec<Bus>, lines: Vec<Line>) -> Result<Self> {
        if !(base_mva.is_finite() && base_mva > 0.0) {
            return Err(Error::InvalidCase(format!("base_mva must be positive, got {base_mva}")));
        }
        let m = buses.len();
        if m < 2 {
            return Err(Error::InvalidCase(format!("need at least 2 buses, got {m}")));
        }
        buses.sort_by_key(|b| b.id);
        for pair in buses.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateBus(pair[0].id));
            }
        }
        for (i, b) in buses.iter().enumerate() {
            if b.id != i + 1 {
                return Err(Error::NonContiguousIds { expected: m, missing: i + 1 });
            }
            if !(b.p.is_finite() && b.q.is_finite()) {
                return Err(Error::InvalidCase(format!("bus {}: non-finite setpoint", b.id)));
            }
            if b.kind != BusKind::Pq && !(b.v.is_finite() && b.v > 0.0) {
                return Err(Error::InvalidCase(format!(
                    "bus {}: voltage setpoint must be positive, got {}",
                    b.id, b.v
                )));
            }
        }
        let mut slack = None;
        for b in &buses {
            if b.kind == BusKind::Slack {
                if let Some(first) = slack {
                    return Err(Error::MultipleSlack(first, b.id));
                }
                slack = Some(b.id);
            }
        }
        if slack.is_none() {
            return Err(Error::NoSlack);
        }

        // merge parallel branches keyed by the unordered pair
        let mut merged: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
        let mut order = Vec::new();
        for (index, line) in lines.iter().enumerate() {
            for bus in [line.from, line.to] {
                if bus == 0 || bus > m {
                    return Err(Error::UnknownBus { index, bus });
                }
            }
            if line.from == line.to {
                return Err(Error::SelfLoop { index, bus: line.from });
            }
            let (from, to) = (line.from, line.to);
            if line.x == 0.0 {
                return Err(Error::ZeroReactance { from, to });
            }
            if !(line.x > 0.0) {
                return Err(Error::NegativeReactance { from, to });
            }
            if !(line.r >= 0.0) {
                return Err(Error::NegativeResistance { from, to });
            }
            let key = (from.min(to), from.max(to));
            match merged.get_mut(&key) {
                Some(y) => *y += line.admittance(),
                None => {
                    merged.insert(key, line.admittance());
                    order.push((key, from, to));
                }
            }
        }
        let lines: Vec<Line> = order
            .into_iter()
            .map(|(key, from, to)| {
                let z = merged[&key].inv();
                Line { from, to, r: z.re.max(0.0), x: z.im }
            })
            .collect();

        let case = GridCase { base_mva, buses, lines };
        case.check_connected()?;
        Ok(case)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        parse_case(&std::fs::read_to_string(path)?)
    }

    /// The bundled IEEE 14-bus case.
    pub fn ieee14() -> Self {
        parse_case(IEEE14_JSON).expect("bundled ieee14 case is valid")
    }

    /// The bundled IEEE 30-bus case.
    pub fn ieee30() -> Self {
        parse_case(IEEE30_JSON).expect("bundled ieee30 case is valid")
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Zero-based index of the slack bus.
    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        id.checked_sub(1).and_then(|i| self.buses.get(i))
    }

    fn check_connected(&self) -> Result<()> {
        let m = self.bus_count();
        let mut adj = vec![Vec::new(); m];
        for l in &self.lines {
            adj[l.from - 1].push(l.to - 1);
            adj[l.to - 1].push(l.from - 1);
        }
        let mut seen = vec![false; m];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &n in &adj[k] {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Disconnected(i + 1)),
            None => Ok(()),
        }
    }
}

/// Complex admittance matrix `Y` (dense, symmetric, zero row sums).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexAdmittance {
    pub y: DMatrix<Complex64>,
}

impl ComplexAdmittance {
    pub fn dim(&self) -> usize {
        self.y.nrows()
    }
}

fn stamp<T>(mat: &mut DMatrix<T>, k: usize, l: usize, w: T)
where
    T: nalgebra::Scalar + Copy + std::ops::AddAssign + std::ops::SubAssign,
{
    mat[(k, k)] += w;
    mat[(l, l)] += w;
    mat[(k, l)] -= w;
    mat[(l, k)] -= w;
}

/// Builds `Y` from the line impedances: `Y[k][l] = -y_kl`, `Y[k][k] = sum y_km`.
pub fn build_admittance_ac(case: &GridCase) -> ComplexAdmittance {
    let m = case.bus_count();
    let mut y = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for line in &case.lines {
        stamp(&mut y, line.from - 1, line.to - 1, line.admittance());
    }
    ComplexAdmittance { y }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianMode {
    Ac,
    Dc,
}

/// The two real Laplacians `yr = Re(Y)` and `yj = -Im(Y)`.
///
/// In DC mode `yr` holds the reactance-only Laplacian and `yj` is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPair {
    pub yr: DMatrix<f64>,
    pub yj: DMatrix<f64>,
    pub mode: LaplacianMode,
}

const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Splits `Y` into its real Laplacians, rejecting positive off-diagonals.
pub fn decompose(adm: &ComplexAdmittance) -> Result<LaplacianPair> {
    let yr = adm.y.map(|c| c.re);
    let yj = adm.y.map(|c| -c.im);
    for (part, mat) in [("yr", &yr), ("yj", &yj)] {
        let m = mat.nrows();
        for row in 0..m {
            for col in 0..m {
                if row != col && mat[(row, col)] > OFF_DIAGONAL_TOL {
                    return Err(Error::PositiveOffDiagonal {
                        part,
                        row: row + 1,
                        col: col + 1,
                        value: mat[(row, col)],
                    });
                }
            }
        }
    }
    Ok(LaplacianPair { yr, yj, mode: LaplacianMode::Ac })
}

/// The DC-model Laplacian with weights `1/x`; resistance is ignored.
pub fn build_admittance_dc(case: &GridCase) -> LaplacianPair {
    let m = case.bus_count();
    let mut yr = DMatrix::zeros(m, m);
    for line in &case.lines {
        stamp(&mut yr, line.from - 1, line.to - 1, 1.0 / line.x);
    }
    LaplacianPair { yr, yj: DMatrix::zeros(m, m), mode: LaplacianMode::Dc }
}

impl LaplacianPair {
    pub fn dim(&self) -> usize {
        self.yr.nrows()
    }

    /// Multiplies both Laplacians by `factor`. Eigenvectors are unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        LaplacianPair { yr: &self.yr * factor, yj: &self.yj * factor, mode: self.mode }
    }
}

/// Laplacians used for graph signal processing on `case`.
///
/// Edge weights are the per-unit admittances multiplied by the case's
/// `base_mva`, i.e. admittances referred to a 1 MVA base. This only rescales
/// eigenvalues and total variation; graph Fourier coefficients are unaffected.
pub fn grid_laplacians(case: &GridCase, mode: LaplacianMode) -> Result<LaplacianPair> {
    let pair = match mode {
        LaplacianMode::Ac => decompose(&build_admittance_ac(case))?,
        LaplacianMode::Dc => build_admittance_dc(case),
    };
    Ok(pair.scaled(case.base_mva))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_bus(r: f64, x: f64) -> GridCase {
        GridCase::new(
            1.0,
            vec![
                Bus { id: 1, kind: BusKind::Slack, p: 0.0, q: 0.0, v: 1.0 },
                Bus { id: 2, kind: BusKind::Pq, p: -0.5, q: -0.1, v: 1.0 },
            ],
            vec![Line { from: 1, to: 2, r, x }],
        )
        .unwrap()
    }

    #[test]
    fn parses_minimal_case() {
        let text = r#"{"base_mva": 100, "buses": [
            {"id": 1, "kind": "slack", "p": 0, "q": 0, "v": 1.0},
            {"id": 2, "kind": "pq", "p": -0.5, "q": -0.1, "v": 1.0}],
            "lines": [{"from": 1, "to": 2, "r": 0.0, "x": 0.5}]}"#;
        let case = parse_case(text).unwrap();
        assert_eq!(case.bus_count(), 2);
        assert_eq!(case.lines.len(), 1);
        assert_eq!(case.slack_index(), 0);
    }

    #[test]
    fn bundled_ieee14() {
        let case = GridCase::ieee14();
        assert_eq!(case.bus_count(), 14);
        assert_eq!(case.lines.len(), 20);
        assert_eq!(case.buses[0].kind, BusKind::Slack);
        assert!(case.buses.iter().skip(1).all(|b| b.kind != BusKind::Slack));
    }

    #[test]
    fn zero_reactance_is_rejected() {
        let text = r#"{"base_mva": 1, "buses": [
            {"id": 1, "kind": "slack", "v": 1.0}, {"id": 2, "kind": "pq"}],
            "lines": [{"from": 1, "to": 2, "r": 0.1, "x": 0.0}]}"#;
        let err = parse_case(text).unwrap_err();
        assert_eq!(err.to_string(), "zero reactance on line (1,2)");
    }

    #[test]
    fn structural_errors() {
        let slack = Bus { id: 1, kind: BusKind::Slack, p: 0.0, q: 0.0, v: 1.0 };
        let pq = |id| Bus { id, kind: BusKind::Pq, p: 0.0, q: 0.0, v: 1.0 };
        let l = |from, to| Line { from, to, r: 0.0, x: 0.1 };

        let e = GridCase::new(1.0, vec![slack.clone(), pq(1)], vec![l(1, 2)]).unwrap_err();
        assert!(matches!(e, Error::DuplicateBus(1)));

        let e = GridCase::new(1.0, vec![pq(1), pq(2)], vec![l(1, 2)]).unwrap_err();
        assert!(matches!(e, Error::NoSlack));

        let e = GridCase::new(1.0, vec![slack.clone(), pq(2), pq(3)], vec![l(1, 2)]).unwrap_err();
        assert!(matches!(e, Error::Disconnected(3)));

        let e = GridCase::new(1.0, vec![slack.clone(), pq(3)], vec![l(1, 3)]).unwrap_err();
        assert!(matches!(e, Error::NonContiguousIds { missing: 2, .. }));

        let e = GridCase::new(1.0, vec![slack.clone(), pq(2)], vec![l(1, 1)]).unwrap_err();
        assert!(matches!(e, Error::SelfLoop { .. }));

        let bad = Line { from: 1, to: 2, r: 0.0, x: -0.1 };
        let e = GridCase::new(1.0, vec![slack, pq(2)], vec![bad]).unwrap_err();
        assert!(matches!(e, Error::NegativeReactance { .. }));
    }

    #[test]
    fn parallel_lines_merge() {
        let case = GridCase::new(
            1.0,
            vec![
                Bus { id: 1, kind: BusKind::Slack, p: 0.0, q: 0.0, v: 1.0 },
                Bus { id: 2, kind: BusKind::Pq, p: 0.0, q: 0.0, v: 1.0 },
            ],
            vec![
                Line { from: 1, to: 2, r: 0.0, x: 0.2 },
                Line { from: 2, to: 1, r: 0.0, x: 0.2 },
            ],
        )
        .unwrap();
        assert_eq!(case.lines.len(), 1);
        assert_abs_diff_eq!(case.lines[0].x, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn admittance_of_pure_reactance() {
        let y = build_admittance_ac(&two_bus(0.0, 1.0)).y;
        assert_abs_diff_eq!(y[(0, 0)].im, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y[(0, 1)].im, 1.0, epsilon = 1e-15);
        assert_eq!(y[(0, 0)].re, 0.0);

        let pair = decompose(&ComplexAdmittance { y }).unwrap();
        assert_eq!(pair.yr, DMatrix::zeros(2, 2));
        assert_eq!(pair.yj, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn admittance_of_unit_impedance() {
        let y = build_admittance_ac(&two_bus(1.0, 1.0)).y;
        assert_abs_diff_eq!(y[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(y[(1, 1)].im, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(y[(0, 1)].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(y[(0, 1)].im, 0.5, epsilon = 1e-15);

        let pair = decompose(&ComplexAdmittance { y }).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
        assert_abs_diff_eq!(pair.yr, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(pair.yj, expected, epsilon = 1e-15);
    }

    #[test]
    fn decompose_rejects_positive_off_diagonal() {
        let mut y = build_admittance_ac(&two_bus(0.0, 1.0)).y;
        y[(0, 1)] = Complex64::new(0.3, 1.0);
        let err = decompose(&ComplexAdmittance { y }).unwrap_err();
        assert!(matches!(err, Error::PositiveOffDiagonal { part: "yr", .. }));
    }

    #[test]
    fn dc_laplacian() {
        let pair = build_admittance_dc(&two_bus(0.0, 0.5));
        assert_eq!(pair.mode, LaplacianMode::Dc);
        assert_eq!(pair.yr, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        assert_eq!(pair.yj, DMatrix::zeros(2, 2));
        assert_eq!(
            build_admittance_dc(&two_bus(0.0, 1.0)).yr,
            build_admittance_dc(&two_bus(5.0, 1.0)).yr
        );
    }

    #[test]
    fn grid_laplacians_scale_by_base() {
        let case = GridCase::ieee14();
        let raw = decompose(&build_admittance_ac(&case)).unwrap();
        let scaled = grid_laplacians(&case, LaplacianMode::Ac).unwrap();
        assert_abs_diff_eq!(scaled.yj, raw.yj * 100.0, epsilon = 1e-9);
    }
}
