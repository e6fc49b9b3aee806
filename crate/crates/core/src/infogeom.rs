//! Information quantities under the Gaussian agent/environment model.
//!
//! The environment field at the design points is a zero-mean GP under the
//! agent's kernel and the agent sees it through additive noise σ², so the
//! mutual information is the log-det information gain and the consistency
//! divergence is a KL between zero-mean Gaussians.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernelspace::{default_psd_tol, validate_psd, KernelMatrix, PSD_REL_TOL};
use crate::linalg::{chol_logdet, cholesky};

/// Default relative step for Fisher–Rao central differences.
pub const FISHER_STEP: f64 = 1e-5;

/// Information in nats, always finite and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InfoValue(f64);

impl InfoValue {
    pub const ZERO: InfoValue = InfoValue(0.0);

    pub fn new(nats: f64) -> Result<Self> {
        if nats.is_finite() && nats >= 0.0 {
            Ok(Self(nats))
        } else {
            Err(Error::Data(format!("information {nats} must be finite and >= 0 nats")))
        }
    }

    pub fn from_bits(bits: f64) -> Result<Self> {
        Self::new(bits * std::f64::consts::LN_2)
    }

    pub fn nats(self) -> f64 {
        self.0
    }

    pub fn bits(self) -> f64 {
        self.0 / std::f64::consts::LN_2
    }

    // Round-off can push an analytically nonnegative quantity a hair below 0.
    pub(crate) fn clamped(nats: f64) -> Result<Self> {
        if nats.is_nan() || nats.is_infinite() {
            return Err(Error::Numeric(format!("non-finite information value {nats}")));
        }
        Ok(Self(nats.max(0.0)))
    }
}

/// A probability vector on a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Parameter("distribution needs a nonempty support".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Data("probabilities must be finite and nonnegative".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::Data(format!("probabilities sum to {s}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var.is_finite() && noise_var > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("noise variance {noise_var} must be > 0")))
    }
}

/// `½ ln det(I + K/σ²)` for the Gram matrix at the design points.
pub fn gp_info_gain(k_design: &KernelMatrix, noise_var: f64) -> Result<InfoValue> {
    check_noise(noise_var)?;
    let report = validate_psd(k_design, default_psd_tol(k_design))?;
    if !report.passed {
        return Err(Error::Data(format!(
            "design covariance is not PSD (min eigenvalue {:e})",
            report.min_eigenvalue
        )));
    }
    InfoValue::clamped(info_gain_unchecked(k_design.entries(), noise_var)?)
}

/// Same as [`gp_info_gain`] for a bare covariance matrix (e.g. a posterior
/// covariance at candidate sites). A 0×0 matrix is the empty design.
pub fn gp_info_gain_cov(cov: &DMatrix<f64>, noise_var: f64) -> Result<InfoValue> {
    check_noise(noise_var)?;
    if cov.nrows() != cov.ncols() {
        return Err(Error::Shape("covariance must be square".into()));
    }
    if cov.is_empty() {
        return Ok(InfoValue::ZERO);
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("covariance has NaN or infinite entries".into()));
    }
    let max_diag = cov.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let min_eig = crate::kernelspace::sym_eigenvalues(cov)
        .first()
        .copied()
        .unwrap_or(0.0);
    if min_eig < -PSD_REL_TOL * max_diag {
        return Err(Error::Data(format!(
            "design covariance is not PSD (min eigenvalue {min_eig:e})"
        )));
    }
    InfoValue::clamped(info_gain_unchecked(cov, noise_var)?)
}

pub(crate) fn info_gain_unchecked(cov: &DMatrix<f64>, noise_var: f64) -> Result<f64> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let a = DMatrix::identity(n, n) + cov / noise_var;
    let c = cholesky(&crate::linalg::symmetrize(&a))
        .ok_or_else(|| Error::Numeric("I + K/σ² is not positive definite".into()))?;
    Ok(0.5 * chol_logdet(&c))
}

/// KL( N(0, K_env + σ²I) ‖ N(0, K_model + σ²I) ).
pub fn gaussian_kl(k_model: &KernelMatrix, k_env: &KernelMatrix, noise_var: f64) -> Result<InfoValue> {
    check_noise(noise_var)?;
    if !k_model.same_domain(k_env) {
        return Err(Error::Shape("model and environment kernels live on different domains".into()));
    }
    for (name, k) in [("model", k_model), ("environment", k_env)] {
        if !validate_psd(k, default_psd_tol(k))?.passed {
            return Err(Error::Data(format!("{name} kernel is not PSD")));
        }
    }
    if k_model.entries() == k_env.entries() {
        return Ok(InfoValue::ZERO);
    }
    let env = GaussianEnv::new(k_env.entries(), noise_var)?;
    InfoValue::clamped(env.kl_from_model(k_model.entries())?)
}

/// Cached factorisation of Σ₀ = K_env + σ²I for repeated KL evaluations.
#[derive(Debug, Clone)]
pub(crate) struct GaussianEnv {
    l0: DMatrix<f64>,
    logdet0: f64,
    noise_var: f64,
}

impl GaussianEnv {
    pub(crate) fn new(k_env: &DMatrix<f64>, noise_var: f64) -> Result<Self> {
        let n = k_env.nrows();
        let s0 = crate::linalg::symmetrize(&(k_env + DMatrix::identity(n, n) * noise_var));
        let c0 = cholesky(&s0)
            .ok_or_else(|| Error::Numeric("environment covariance is singular".into()))?;
        Ok(Self {
            logdet0: chol_logdet(&c0),
            l0: c0.l(),
            noise_var,
        })
    }

    pub(crate) fn kl_from_model(&self, k_model: &DMatrix<f64>) -> Result<f64> {
        let n = k_model.nrows();
        let s1 = crate::linalg::symmetrize(&(k_model + DMatrix::identity(n, n) * self.noise_var));
        let c1 = cholesky(&s1)
            .ok_or_else(|| Error::Numeric("model covariance is singular".into()))?;
        let logdet1 = chol_logdet(&c1);
        // tr(Σ₁⁻¹Σ₀) = ‖L₁⁻¹ L₀‖²_F
        let m = c1
            .l_dirty()
            .solve_lower_triangular(&self.l0)
            .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
        let trace = m.norm_squared();
        Ok(0.5 * (trace - n as f64 + logdet1 - self.logdet0))
    }
}

/// Hellinger affinity `Σ √(p_i q_i)`.
pub fn hellinger_kernel(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "supports differ in size: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| (a * b).sqrt())
        .sum())
}

/// Fisher–Rao metric `g_ij = Σ_x p(x) ∂_i ln p(x) ∂_j ln p(x)` of a discrete
/// parametric family, with scores from central differences.
///
/// The step for coordinate `i` is `step · max(|θ_i|, 1)`.
pub fn fisher_rao_metric<F>(family: F, theta: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if theta.is_empty() {
        return Err(Error::Parameter("parameter vector is empty".into()));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Parameter(format!("step {step} must be > 0")));
    }
    let eval = |th: &[f64]| -> Result<Vec<f64>> {
        let p = family(th);
        if let Some(x) = p.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain(format!(
                "p_θ has non-positive component {x} at θ = {th:?}"
            )));
        }
        Ok(p)
    };
    let p0 = eval(theta)?;
    let d = theta.len();
    let k = p0.len();
    // score matrix: rows = outcomes, cols = parameters
    let mut scores = DMatrix::zeros(k, d);
    for i in 0..d {
        let h = step * theta[i].abs().max(1.0);
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let pp = eval(&plus)?;
        let pm = eval(&minus)?;
        if pp.len() != k || pm.len() != k {
            return Err(Error::Shape("family changed support size".into()));
        }
        for x in 0..k {
            scores[(x, i)] = (pp[x].ln() - pm[x].ln()) / (2.0 * h);
        }
    }
    let mut g = DMatrix::zeros(d, d);
    for x in 0..k {
        let s = scores.row(x);
        g += s.transpose() * s * p0[x];
    }
    Ok(crate::linalg::symmetrize(&g))
}
