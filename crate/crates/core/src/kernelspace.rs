//! Mercer kernels on a weighted discrete domain.
//!
//! A kernel is carried by its Gram matrix on a finite point set together with
//! the quadrature weights of the reference measure. Hilbert–Schmidt integrals
//! become weighted double sums over the grid.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Maximum tolerated asymmetry |k_ij − k_ji| for a valid kernel matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative factor for the default PSD tolerance (scaled by the largest
/// diagonal entry).
pub const PSD_REL_TOL: f64 = 1e-9;

/// Points with quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDomain {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteDomain {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter("domain needs at least one point".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Shape(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Shape("points must share a nonzero dimension".into()));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Data("non-finite coordinate".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Parameter("weights must be finite and nonnegative".into()));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::Parameter("at least one weight must be positive".into()));
        }
        Ok(Self { points, weights })
    }

    /// Every point gets weight 1.
    pub fn with_unit_weights(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n])
    }

    /// Every point gets weight 1/n, so the reference measure is a probability.
    pub fn with_uniform_weights(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len().max(1);
        let w = 1.0 / n as f64;
        let len = points.len();
        Self::new(points, vec![w; len])
    }

    /// `n` equispaced points on `[lo, hi]`, endpoints included, uniform weights.
    pub fn grid_1d(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n == 0 || !(hi >= lo) {
            return Err(Error::Parameter(format!("bad 1-D grid: n={n}, [{lo}, {hi}]")));
        }
        let pts = if n == 1 {
            vec![vec![lo]]
        } else {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| vec![lo + h * i as f64]).collect()
        };
        Self::with_uniform_weights(pts)
    }

    /// Cell-centred `nx × ny` grid over the unit square, uniform weights.
    /// Points are ordered row-major with x varying fastest.
    pub fn unit_square(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Parameter("grid needs at least one cell per axis".into()));
        }
        let mut pts = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                pts.push(vec![(i as f64 + 0.5) / nx as f64, (j as f64 + 0.5) / ny as f64]);
            }
        }
        Self::with_uniform_weights(pts)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest distance between two distinct points (0 for a single point).
    pub fn min_spacing(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let d = dist(&self.points[i], &self.points[j]);
                if d > 0.0 && d < best {
                    best = d;
                }
            }
        }
        if best.is_finite() {
            best
        } else {
            0.0
        }
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                best = best.max(dist(&self.points[i], &self.points[j]));
            }
        }
        best
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A concrete member of the kernel cone.
///
/// `amplitude` is the marginal variance a², so `k(x, x) = amplitude` for the
/// stationary families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    SquaredExponential { lengthscale: f64, amplitude: f64 },
    #[serde(rename = "matern_3_2")]
    Matern32 { lengthscale: f64, amplitude: f64 },
    ExplicitMatrix { entries: Vec<Vec<f64>> },
}

impl KernelSpec {
    pub fn squared_exponential(lengthscale: f64, amplitude: f64) -> Self {
        KernelSpec::SquaredExponential {
            lengthscale,
            amplitude,
        }
    }

    pub fn matern32(lengthscale: f64, amplitude: f64) -> Self {
        KernelSpec::Matern32 {
            lengthscale,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::SquaredExponential {
                lengthscale,
                amplitude,
            }
            | KernelSpec::Matern32 {
                lengthscale,
                amplitude,
            } => {
                if !(lengthscale.is_finite() && *lengthscale > 0.0) {
                    return Err(Error::Parameter(format!("lengthscale {lengthscale} must be > 0")));
                }
                if !(amplitude.is_finite() && *amplitude > 0.0) {
                    return Err(Error::Parameter(format!("amplitude {amplitude} must be > 0")));
                }
                Ok(())
            }
            KernelSpec::ExplicitMatrix { entries } => {
                let n = entries.len();
                if n == 0 || entries.iter().any(|r| r.len() != n) {
                    return Err(Error::Shape("explicit kernel must be a square matrix".into()));
                }
                Ok(())
            }
        }
    }

    /// Evaluate a parametric kernel at two points. Explicit matrices have no
    /// pointwise form and return `None`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        match *self {
            KernelSpec::SquaredExponential {
                lengthscale,
                amplitude,
            } => {
                let r = dist(x, y) / lengthscale;
                Some(amplitude * (-0.5 * r * r).exp())
            }
            KernelSpec::Matern32 {
                lengthscale,
                amplitude,
            } => {
                let r = 3f64.sqrt() * dist(x, y) / lengthscale;
                Some(amplitude * (1.0 + r) * (-r).exp())
            }
            KernelSpec::ExplicitMatrix { .. } => None,
        }
    }

    /// Cross-covariance matrix between two point lists.
    pub fn cross(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.validate()?;
        if matches!(self, KernelSpec::ExplicitMatrix { .. }) {
            return Err(Error::Parameter("explicit kernels have no cross-covariance".into()));
        }
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
            self.eval(&xs[i], &ys[j]).unwrap_or(0.0)
        }))
    }

    /// Symmetric Gram matrix on a point list, built from the upper triangle.
    pub fn gram_points(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        self.validate()?;
        let n = xs.len();
        match self {
            KernelSpec::ExplicitMatrix { entries } => {
                if entries.len() != n {
                    return Err(Error::Shape(format!(
                        "explicit kernel is {}x{} but domain has {n} points",
                        entries.len(),
                        entries.len()
                    )));
                }
                Ok(DMatrix::from_fn(n, n, |i, j| entries[i][j]))
            }
            _ => {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in i..n {
                        let v = self.eval(&xs[i], &xs[j]).unwrap_or(0.0);
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                Ok(m)
            }
        }
    }
}

/// Gram matrix of a kernel on a shared domain.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    domain: Arc<DiscreteDomain>,
    entries: DMatrix<f64>,
}

impl KernelMatrix {
    /// Wrap raw entries. Only the shape is checked here; use
    /// [`validate_psd`] for the Mercer conditions.
    pub fn from_entries(domain: Arc<DiscreteDomain>, entries: DMatrix<f64>) -> Result<Self> {
        let n = domain.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::Shape(format!(
                "matrix is {}x{} but domain has {n} points",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self { domain, entries })
    }

    /// Like [`KernelMatrix::from_entries`] but rejects matrices that fail
    /// [`validate_psd`] at the default tolerance.
    pub fn checked(domain: Arc<DiscreteDomain>, entries: DMatrix<f64>) -> Result<Self> {
        let k = Self::from_entries(domain, entries)?;
        let report = validate_psd(&k, default_psd_tol(&k))?;
        if !report.passed {
            return Err(Error::Data(format!(
                "not a Mercer kernel: min eigenvalue {:e}, symmetry defect {:e}",
                report.min_eigenvalue, report.symmetry_defect
            )));
        }
        Ok(k)
    }

    /// Convenience: Gram matrix over an ad-hoc point list with unit weights.
    pub fn on_points(spec: &KernelSpec, points: Vec<Vec<f64>>) -> Result<Self> {
        let domain = Arc::new(DiscreteDomain::with_unit_weights(points)?);
        gram(spec, &domain)
    }

    pub fn domain(&self) -> &Arc<DiscreteDomain> {
        &self.domain
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries
            .diagonal()
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()))
    }

    pub(crate) fn same_domain(&self, other: &KernelMatrix) -> bool {
        Arc::ptr_eq(&self.domain, &other.domain) || *self.domain == *other.domain
    }
}

/// Gram matrix of `spec` on `domain`.
pub fn gram(spec: &KernelSpec, domain: &Arc<DiscreteDomain>) -> Result<KernelMatrix> {
    let entries = spec.gram_points(domain.points())?;
    KernelMatrix::from_entries(Arc::clone(domain), entries)
}

/// Outcome of a Mercer check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationReport {
    pub min_eigenvalue: f64,
    pub symmetry_defect: f64,
    pub passed: bool,
}

/// `PSD_REL_TOL` times the largest diagonal magnitude.
pub fn default_psd_tol(k: &KernelMatrix) -> f64 {
    PSD_REL_TOL * k.max_diagonal()
}

/// Eigenvalues (ascending) of the symmetric part of a matrix.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn validate_psd(k: &KernelMatrix, psd_tol: f64) -> Result<ValidationReport> {
    let m = k.entries();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("kernel matrix has NaN or infinite entries".into()));
    }
    let symmetry_defect = (m - m.transpose()).abs().max();
    let min_eigenvalue = sym_eigenvalues(m).first().copied().unwrap_or(0.0);
    Ok(ValidationReport {
        min_eigenvalue,
        symmetry_defect,
        passed: min_eigenvalue >= -psd_tol && symmetry_defect <= SYMMETRY_TOL,
    })
}

/// Cone operations on kernel matrices.
#[derive(Debug, Clone, Copy)]
pub enum ConeOp<'a> {
    /// `alpha·k1 + beta·other`
    Sum {
        alpha: f64,
        beta: f64,
        other: &'a KernelMatrix,
    },
    /// `c·k1`
    Scale(f64),
    /// Entrywise (Schur) product `k1 ∘ other`.
    Schur(&'a KernelMatrix),
}

pub fn cone_combine(op: ConeOp<'_>, k1: &KernelMatrix) -> Result<KernelMatrix> {
    let check_same = |other: &KernelMatrix| {
        if k1.same_domain(other) {
            Ok(())
        } else {
            Err(Error::Shape("kernels live on different domains".into()))
        }
    };
    let check_coef = |c: f64, name: &str| {
        if c.is_finite() && c >= 0.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!("{name} = {c} must be finite and >= 0")))
        }
    };
    let entries = match op {
        ConeOp::Sum { alpha, beta, other } => {
            check_same(other)?;
            check_coef(alpha, "alpha")?;
            check_coef(beta, "beta")?;
            k1.entries() * alpha + other.entries() * beta
        }
        ConeOp::Scale(c) => {
            check_coef(c, "scale")?;
            k1.entries() * c
        }
        ConeOp::Schur(other) => {
            check_same(other)?;
            k1.entries().component_mul(other.entries())
        }
    };
    KernelMatrix::from_entries(Arc::clone(k1.domain()), entries)
}

/// Weighted Hilbert–Schmidt distance `sqrt(Σ w_i w_j (a_ij − b_ij)²)`.
pub fn hs_distance(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<f64> {
    if !k1.same_domain(k2) {
        return Err(Error::Shape("kernels live on different domains".into()));
    }
    Ok(weighted_frobenius(k1.domain().weights(), |i, j| {
        k1.entries()[(i, j)] - k2.entries()[(i, j)]
    }))
}

/// Hilbert–Schmidt norm of the integral operator.
pub fn hs_norm(k: &KernelMatrix) -> f64 {
    weighted_frobenius(k.domain().weights(), |i, j| k.entries()[(i, j)])
}

fn weighted_frobenius(w: &[f64], f: impl Fn(usize, usize) -> f64) -> f64 {
    let n = w.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = f(i, j);
            acc += w[i] * w[j] * d * d;
        }
    }
    acc.sqrt()
}
