//! Graph signal processing on the real Laplacians: total variation, the
//! graph Fourier transform, cutoff selection and the ideal high-pass filter
//! with its polynomial (vertex-domain) realization.

mod dd;

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::LaplacianMode;
use dd::Dd;

/// Above this many distinct frequencies the monomial interpolant is not built.
pub const MAX_POLY_NODES: usize = 24;

/// Relative tolerance under which two eigenvalues count as the same frequency.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplacianKind {
    Yr,
    Yj,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSource {
    pub kind: LaplacianKind,
    pub mode: LaplacianMode,
}

/// Eigendecomposition `L = U diag(λ) Uᵀ`, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<BasisSource>,
}

/// GFT coefficients of one real signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub coeffs: DVector<f64>,
}

/// Monomial interpolant of the step response in the normalized variable
/// `x = λ / scale`, kept in double-double precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFilter {
    pub scale: f64,
    pub coeffs_hi: Vec<f64>,
    pub coeffs_lo: Vec<f64>,
}

/// Ideal graph high-pass filter: passes every frequency above `cutoff_lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhpfDesign {
    /// 1-based index of the lowest passed frequency.
    pub cutoff_index: usize,
    pub cutoff_lambda: f64,
    pub response: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<PolyFilter>,
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }

    pub fn with_source(mut self, kind: LaplacianKind, mode: LaplacianMode) -> Self {
        self.source = Some(BasisSource { kind, mode });
        self
    }

    /// Eigenvalues divided by the largest magnitude, clipped into [0, 1].
    pub fn normalized_frequencies(&self) -> Vec<f64> {
        let scale = self.lambda_max();
        self.eigenvalues
            .iter()
            .map(|&l| if scale > 0.0 { (l / scale).clamp(0.0, 1.0) } else { 0.0 })
            .collect()
    }

    fn tie_tolerance(&self) -> f64 {
        TIE_TOLERANCE * self.lambda_max().max(1.0)
    }

    /// Index ranges of eigenvalues that coincide within the tie tolerance.
    pub fn tie_classes(&self) -> Vec<Range<usize>> {
        let tol = self.tie_tolerance();
        let mut classes = Vec::new();
        let mut start = 0;
        for i in 1..=self.dim() {
            if i == self.dim() || self.eigenvalues[i] - self.eigenvalues[i - 1] > tol {
                classes.push(start..i);
                start = i;
            }
        }
        classes
    }

    pub fn gft(&self, signal: &[f64]) -> Result<Spectrum> {
        check_dim(self.dim(), signal.len())?;
        let s = DVector::from_column_slice(signal);
        Ok(Spectrum { coeffs: self.eigenvectors.tr_mul(&s) })
    }

    pub fn inverse_gft(&self, spectrum: &Spectrum) -> Result<DVector<f64>> {
        check_dim(self.dim(), spectrum.coeffs.len())?;
        Ok(&self.eigenvectors * &spectrum.coeffs)
    }
}

impl Spectrum {
    pub fn energy(&self) -> f64 {
        self.coeffs.norm_squared()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.amax()
    }
}

impl GhpfDesign {
    /// Polynomial coefficients `h_0..h_{M-1}` in the raw eigenvalue variable.
    pub fn poly_coeffs(&self) -> Option<Vec<f64>> {
        let poly = self.poly.as_ref()?;
        let mut out = Vec::with_capacity(self.response.len());
        let mut denom = 1.0;
        for (hi, lo) in poly.coeffs_hi.iter().zip(&poly.coeffs_lo) {
            out.push((hi + lo) / denom);
            denom *= poly.scale;
        }
        out.resize(self.response.len(), 0.0);
        Some(out)
    }

    pub fn passband_len(&self) -> usize {
        self.response.iter().filter(|&&r| r > 0.5).count()
    }
}

impl PolyFilter {
    fn coeffs(&self) -> impl DoubleEndedIterator<Item = Dd> + '_ {
        self.coeffs_hi.iter().zip(&self.coeffs_lo).map(|(&hi, &lo)| Dd { hi, lo })
    }

    /// Evaluates the interpolant at a raw eigenvalue.
    pub fn eval(&self, lambda: f64) -> f64 {
        let x = Dd::new(lambda) / Dd::new(self.scale);
        self.coeffs().rev().fold(Dd::ZERO, |acc, c| acc * x + c).to_f64()
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// Sorted eigendecomposition of a symmetric matrix. Each eigenvector is
/// signed so that its largest-magnitude entry is positive (first such entry
/// on ties).
pub fn spectral_basis(l: &DMatrix<f64>) -> Result<SpectralBasis> {
    if !l.is_square() {
        return Err(Error::Dimension { expected: l.nrows(), got: l.ncols() });
    }
    let scale = l.amax().max(1.0);
    let asym = (l - l.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let n = l.nrows();
    let eig = SymmetricEigen::new(l.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let mut u = eig.eigenvectors.column(i).into_owned();
        let peak = u.amax();
        let lead = u.iter().position(|x| x.abs() >= peak * (1.0 - 1e-12)).unwrap_or(0);
        if u[lead] < 0.0 {
            u.neg_mut();
        }
        eigenvectors.set_column(col, &u);
    }
    let mut basis = SpectralBasis { eigenvalues, eigenvectors, laplacian: l.clone(), source: None };
    // Rayleigh quotients are accurate to O(residual²); keep them when the
    // ascending order survives.
    let refined: Vec<f64> = (0..n).map(|i| rayleigh_dd(&basis, i).to_f64()).collect();
    if refined.windows(2).all(|w| w[0] <= w[1]) {
        basis.eigenvalues = DVector::from_vec(refined);
    }
    Ok(basis)
}

pub fn gft(basis: &SpectralBasis, signal: &[f64]) -> Result<Spectrum> {
    basis.gft(signal)
}

/// Total variation `S = ½ Σ_k local_k` with `local_k = Σ_l w_kl (s_k - s_l)²`
/// and edge weights `w_kl = -L_kl`.
pub fn total_variation(l: &DMatrix<f64>, signal: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim(l.nrows(), signal.len())?;
    let n = signal.len();
    let local: Vec<f64> = (0..n)
        .map(|k| {
            (0..n)
                .filter(|&j| j != k)
                .map(|j| -l[(k, j)] * (signal[k] - signal[j]).powi(2))
                .sum()
        })
        .collect();
    let s = 0.5 * local.iter().sum::<f64>();
    Ok((s, local))
}

/// Chooses the lowest passed frequency so that every historic spectrum keeps
/// at most `epsilon` energy in the passband.
pub fn select_cutoff(basis: &SpectralBasis, spectra: &[Spectrum], epsilon: f64) -> Result<GhpfDesign> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    if spectra.is_empty() {
        return Err(Error::InvalidParameter("cutoff selection needs at least one spectrum".into()));
    }
    let m = basis.dim();
    let mut gamma = 1;
    for (state, sp) in spectra.iter().enumerate() {
        check_dim(m, sp.coeffs.len())?;
        let mut tail = 0.0;
        let mut smallest = m + 1;
        for k in (0..m).rev() {
            tail += sp.coeffs[k] * sp.coeffs[k];
            if tail > epsilon {
                break;
            }
            smallest = k + 1;
        }
        if smallest > m {
            return Err(Error::CutoffExceedsSpectrum {
                state,
                energy: sp.coeffs[m - 1].powi(2),
                epsilon,
            });
        }
        gamma = gamma.max(smallest);
    }

    // never split a tie class between stop band and passband
    if let Some(class) = basis.tie_classes().into_iter().find(|c| c.contains(&(gamma - 1))) {
        if class.start < gamma - 1 {
            if class.end >= m {
                return Err(Error::ConflictingTie { lambda: basis.eigenvalues[gamma - 1] });
            }
            gamma = class.end + 1;
        }
    }
    Ok(design_for_index(basis, gamma))
}

/// Step design passing indices `gamma..=M` (1-based).
pub fn design_for_index(basis: &SpectralBasis, gamma: usize) -> GhpfDesign {
    let lam = &basis.eigenvalues;
    let m = basis.dim();
    let gamma = gamma.clamp(1, m.max(1));
    let cutoff_lambda = if gamma == 1 { lam[0] - 1.0 } else { 0.5 * (lam[gamma - 2] + lam[gamma - 1]) };
    let response = (0..m).map(|i| if i + 1 >= gamma { 1.0 } else { 0.0 }).collect();
    GhpfDesign { cutoff_index: gamma, cutoff_lambda, response, poly: None }
}

/// Solves the Vandermonde interpolation of the step response over the
/// distinct eigenvalues. Nodes are Rayleigh quotients evaluated in
/// double-double precision, normalized by the largest eigenvalue.
pub fn design_poly_filter(basis: &SpectralBasis, design: &GhpfDesign) -> Result<GhpfDesign> {
    let m = basis.dim();
    check_dim(m, design.response.len())?;
    let classes = basis.tie_classes();
    let mut nodes = Vec::with_capacity(classes.len());
    let mut targets = Vec::with_capacity(classes.len());
    for class in &classes {
        let r = design.response[class.start];
        if class.clone().any(|i| design.response[i] != r) {
            return Err(Error::ConflictingTie { lambda: basis.eigenvalues[class.start] });
        }
        let sum = class.clone().fold(Dd::ZERO, |acc, i| acc + rayleigh_dd(basis, i));
        nodes.push(sum / Dd::new(class.len() as f64));
        targets.push(r);
    }
    let mut out = design.clone();
    if nodes.len() > MAX_POLY_NODES {
        log::warn!(
            "{} distinct frequencies exceed the monomial limit of {MAX_POLY_NODES}; polynomial filter not built",
            nodes.len()
        );
        out.poly = None;
        return Ok(out);
    }
    let scale = match basis.lambda_max() {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let x: Vec<Dd> = nodes.iter().map(|&n| n / Dd::new(scale)).collect();
    let coeffs = solve_vandermonde(&x, &targets)?;
    let poly = PolyFilter {
        scale,
        coeffs_hi: coeffs.iter().map(|c| c.hi).collect(),
        coeffs_lo: coeffs.iter().map(|c| c.lo).collect(),
    };
    let residual = basis
        .eigenvalues
        .iter()
        .zip(&design.response)
        .map(|(&l, &r)| (poly.eval(l) - r).abs())
        .fold(0.0, f64::max);
    if residual > 1e-6 {
        log::warn!("polynomial filter reproduces the step response only to {residual:e}");
    }
    out.poly = Some(poly);
    Ok(out)
}

fn rayleigh_dd(basis: &SpectralBasis, i: usize) -> Dd {
    let u = basis.eigenvectors.column(i);
    let l = &basis.laplacian;
    let n = basis.dim();
    let mut num = Dd::ZERO;
    let mut den = Dd::ZERO;
    for r in 0..n {
        let mut row = Dd::ZERO;
        for c in 0..n {
            row = row + Dd::prod(l[(r, c)], u[c]);
        }
        num = num + row.mul_f64(u[r]);
        den = den + Dd::prod(u[r], u[r]);
    }
    num / den
}

fn solve_vandermonde(x: &[Dd], b: &[f64]) -> Result<Vec<Dd>> {
    let n = x.len();
    let mut a: Vec<Vec<Dd>> = x
        .iter()
        .map(|&xi| {
            let mut row = Vec::with_capacity(n);
            let mut p = Dd::new(1.0);
            for _ in 0..n {
                row.push(p);
                p = p * xi;
            }
            row
        })
        .collect();
    let mut rhs: Vec<Dd> = b.iter().map(|&v| Dd::new(v)).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().hi.total_cmp(&a[j][col].abs().hi))
            .expect("non-empty");
        if a[pivot][col].hi == 0.0 {
            return Err(Error::Singular("Vandermonde system"));
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f.hi == 0.0 {
                continue;
            }
            for c in col..n {
                let t = f * a[col][c];
                a[r][c] = a[r][c] - t;
            }
            let t = f * rhs[col];
            rhs[r] = rhs[r] - t;
        }
    }
    let mut sol = vec![Dd::ZERO; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc = acc - a[r][c] * sol[c];
        }
        sol[r] = acc / a[r][r];
    }
    Ok(sol)
}

/// Spectral-domain filtering and the max-norm statistic.
pub fn filter_and_stat(basis: &SpectralBasis, design: &GhpfDesign, signal: &[f64]) -> Result<(Spectrum, f64)> {
    check_dim(basis.dim(), design.response.len())?;
    let mut sp = basis.gft(signal)?;
    sp.coeffs.component_mul_assign(&DVector::from_column_slice(&design.response));
    let psi = sp.max_abs();
    Ok((sp, psi))
}

/// Vertex-domain filtering `Σ_k h_k L^k s` by Horner's scheme in
/// double-double precision.
pub fn vertex_filter(basis: &SpectralBasis, poly: &PolyFilter, signal: &[f64]) -> Result<DVector<f64>> {
    let n = basis.dim();
    check_dim(n, signal.len())?;
    let l = &basis.laplacian;
    let scale = Dd::new(poly.scale);
    let mut coeffs = poly.coeffs().rev();
    let top = coeffs.next().unwrap_or(Dd::ZERO);
    let mut y: Vec<Dd> = signal.iter().map(|&s| top.mul_f64(s)).collect();
    for c in coeffs {
        y = (0..n)
            .map(|r| {
                let ly = (0..n).fold(Dd::ZERO, |acc, j| acc + y[j].mul_f64(l[(r, j)]));
                ly / scale + c.mul_f64(signal[r])
            })
            .collect();
    }
    Ok(DVector::from_iterator(n, y.into_iter().map(Dd::to_f64)))
}
