//! Self-consistent kernels of the frozen-kernel objective.
//!
//! For a kernel held fixed along a constant path the work term drops out and
//! the per-epoch Lagrangian is
//!
//! ```text
//! S*(θ) = λ₂ · IG(K(θ), σ²) − λ₃ · KL(N(0, K_env + σ²I) ‖ N(0, K(θ) + σ²I))
//! ```
//!
//! Fixed points are stationary points of `S*` over a parametric family;
//! stable ones are local maxima.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infogeom::{info_gain_unchecked, GaussianEnv};
use crate::kernelspace::{sym_eigenvalues, DiscreteDomain, KernelMatrix, KernelSpec};

pub const DEFAULT_FD_STEP: f64 = 1e-4;
pub const DEFAULT_GRAD_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_MERGE_TOL: f64 = 1e-4;
/// Relative eigenvalue tolerance for stability classes.
pub const EIG_REL_TOL: f64 = 1e-6;
pub const AMPLITUDE_BOUNDS: (f64, f64) = (1e-3, 1e3);

/// Anything with box bounds that can be maximised numerically.
pub trait Objective: Sync {
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn value(&self, theta: &[f64]) -> Result<f64>;

    fn dim(&self) -> usize {
        self.bounds().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    SquaredExponential,
    #[serde(rename = "matern_3_2")]
    Matern32,
}

/// Parametric kernel family. The free parameters are `[lengthscale]`, or
/// `[lengthscale, amplitude]` when `fit_amplitude` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelFamily {
    pub kind: FamilyKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub fit_amplitude: bool,
}

fn one() -> f64 {
    1.0
}

impl KernelFamily {
    pub fn lengthscale_only(kind: FamilyKind, amplitude: f64) -> Self {
        Self {
            kind,
            amplitude,
            fit_amplitude: false,
        }
    }

    pub fn dim(&self) -> usize {
        if self.fit_amplitude {
            2
        } else {
            1
        }
    }

    pub fn spec(&self, theta: &[f64]) -> KernelSpec {
        let amp = if self.fit_amplitude { theta[1] } else { self.amplitude };
        match self.kind {
            FamilyKind::SquaredExponential => KernelSpec::squared_exponential(theta[0], amp),
            FamilyKind::Matern32 => KernelSpec::matern32(theta[0], amp),
        }
    }

    /// Lengthscale in `[spacing/2, 10·diameter]`, amplitude in
    /// [`AMPLITUDE_BOUNDS`].
    pub fn bounds(&self, domain: &DiscreteDomain) -> Vec<(f64, f64)> {
        let mut b = vec![(0.5 * domain.min_spacing(), 10.0 * domain.diameter())];
        if self.fit_amplitude {
            b.push(AMPLITUDE_BOUNDS);
        }
        b
    }
}

#[derive(Debug, Clone)]
pub struct FrozenObjectiveConfig {
    pub family: KernelFamily,
    pub domain: Arc<DiscreteDomain>,
    pub env_kernel: KernelMatrix,
    pub noise_var: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub fd_step: f64,
}

impl FrozenObjectiveConfig {
    pub fn new(
        family: KernelFamily,
        domain: Arc<DiscreteDomain>,
        env: &KernelSpec,
        noise_var: f64,
        lambda2: f64,
        lambda3: f64,
    ) -> Result<Self> {
        let env_kernel = crate::kernelspace::gram(env, &domain)?;
        let cfg = Self {
            family,
            domain,
            env_kernel,
            noise_var,
            lambda2,
            lambda3,
            fd_step: DEFAULT_FD_STEP,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_multipliers(&self, lambda2: f64, lambda3: f64) -> Self {
        Self {
            lambda2,
            lambda3,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.lambda2 == 0.0 && self.lambda3 == 0.0 {
            return Err(Error::Parameter("lambda2 and lambda3 are both 0".into()));
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return Err(Error::Parameter(format!("noise variance {} must be > 0", self.noise_var)));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::Parameter(format!("fd_step {} must be > 0", self.fd_step)));
        }
        if !(self.family.amplitude.is_finite() && self.family.amplitude > 0.0) {
            return Err(Error::Parameter("family amplitude must be > 0".into()));
        }
        if self.env_kernel.n() != self.domain.len() {
            return Err(Error::Shape("environment kernel does not match the design grid".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.family.bounds(&self.domain)
    }
}

/// [`FrozenObjectiveConfig`] with the environment covariance factorised once.
pub struct FrozenObjective<'a> {
    cfg: &'a FrozenObjectiveConfig,
    env: GaussianEnv,
    bounds: Vec<(f64, f64)>,
}

impl<'a> FrozenObjective<'a> {
    pub fn new(cfg: &'a FrozenObjectiveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            env: GaussianEnv::new(cfg.env_kernel.entries(), cfg.noise_var)?,
            bounds: cfg.bounds(),
            cfg,
        })
    }
}

impl Objective for FrozenObjective<'_> {
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        check_in_bounds(theta, &self.bounds, 0.0)?;
        let k = self.cfg.family.spec(theta).gram_points(self.cfg.domain.points())?;
        let mut s = 0.0;
        if self.cfg.lambda2 != 0.0 {
            s += self.cfg.lambda2 * info_gain_unchecked(&k, self.cfg.noise_var)?;
        }
        if self.cfg.lambda3 != 0.0 {
            s -= self.cfg.lambda3 * self.env.kl_from_model(&k)?.max(0.0);
        }
        Ok(s)
    }
}

fn check_in_bounds(theta: &[f64], bounds: &[(f64, f64)], margin: f64) -> Result<()> {
    if theta.len() != bounds.len() {
        return Err(Error::Shape(format!(
            "parameter vector has {} entries, family has {}",
            theta.len(),
            bounds.len()
        )));
    }
    for (i, (t, (lo, hi))) in theta.iter().zip(bounds).enumerate() {
        if !(t.is_finite() && *t - margin >= *lo && *t + margin <= *hi) {
            return Err(Error::Domain(format!(
                "theta[{i}] = {t} outside [{lo}, {hi}] (margin {margin})"
            )));
        }
    }
    Ok(())
}

pub fn frozen_objective(theta: &[f64], cfg: &FrozenObjectiveConfig) -> Result<f64> {
    FrozenObjective::new(cfg)?.value(theta)
}

/// Central-difference gradient and symmetrised Hessian. Uses the five-point
/// stencil along each axis when `θ ± 2·step` is inside the bounds.
pub fn grad_hessian_with<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    step: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_in_bounds(theta, &obj.bounds(), step)?;
    let n = theta.len();
    let f0 = obj.value(theta)?;
    let at = |shifts: &[(usize, f64)]| {
        let mut t = theta.to_vec();
        for (i, d) in shifts {
            t[*i] += d;
        }
        obj.value(&t)
    };
    let bounds = obj.bounds();
    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let up = at(&[(i, step)])?;
        let dn = at(&[(i, -step)])?;
        let (lo, hi) = bounds[i];
        if theta[i] - 2.0 * step >= lo && theta[i] + 2.0 * step <= hi {
            // fourth-order stencil where the wider points fit
            let up2 = at(&[(i, 2.0 * step)])?;
            let dn2 = at(&[(i, -2.0 * step)])?;
            g[i] = (8.0 * (up - dn) - (up2 - dn2)) / (12.0 * step);
            h[(i, i)] = (16.0 * (up + dn) - (up2 + dn2) - 30.0 * f0) / (12.0 * step * step);
        } else {
            g[i] = (up - dn) / (2.0 * step);
            h[(i, i)] = (up - 2.0 * f0 + dn) / (step * step);
        }
        for j in 0..i {
            let pp = at(&[(i, step), (j, step)])?;
            let pm = at(&[(i, step), (j, -step)])?;
            let mp = at(&[(i, -step), (j, step)])?;
            let mm = at(&[(i, -step), (j, -step)])?;
            let v = (pp - pm - mp + mm) / (4.0 * step * step);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok((g, h))
}

pub fn grad_hessian(theta: &[f64], cfg: &FrozenObjectiveConfig) -> Result<(DVector<f64>, DMatrix<f64>)> {
    grad_hessian_with(&FrozenObjective::new(cfg)?, theta, cfg.fd_step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Saddle,
    Degenerate,
}

impl Stability {
    pub fn classify(eigs: &[f64]) -> Self {
        let scale = eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let tol = EIG_REL_TOL * scale;
        if scale == 0.0 || eigs.iter().any(|e| e.abs() <= tol) {
            Stability::Degenerate
        } else if eigs.iter().all(|e| *e < -tol) {
            Stability::Stable
        } else if eigs.iter().all(|e| *e > tol) {
            Stability::Unstable
        } else {
            Stability::Saddle
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Saddle => "saddle",
            Stability::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointRecord {
    pub theta_star: Vec<f64>,
    pub s_star: f64,
    pub gradient_norm: f64,
    pub hessian: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartDiagnostic {
    pub start: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_theta: Vec<f64>,
    pub gradient_norm: f64,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointSearch {
    pub records: Vec<FixedPointRecord>,
    pub diagnostics: Vec<StartDiagnostic>,
}

impl FixedPointSearch {
    pub fn stable(&self) -> impl Iterator<Item = &FixedPointRecord> {
        self.records.iter().filter(|r| r.stability == Stability::Stable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub fd_step: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    pub merge_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            fd_step: DEFAULT_FD_STEP,
            grad_tol: DEFAULT_GRAD_TOL,
            max_iter: DEFAULT_MAX_ITER,
            merge_tol: DEFAULT_MERGE_TOL,
        }
    }
}

/// Separation used for merging and the discreteness check: largest
/// coordinate difference relative to `max(|x|, |y|, 1)`.
pub fn relative_separation(a: &[f64], b: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let scale = x.abs().max(y.abs()).max(1.0);
        worst = worst.max((x - y).abs() / scale);
    }
    worst
}

/// Damped Newton on `∇S* = 0` from every start.
///
/// Newton on the stationarity condition finds maxima, minima and saddles
/// alike; each is classified from its Hessian. Steps are shortened to stay
/// `2·fd_step` inside the bounds and halved until `‖∇S*‖` decreases.
pub fn find_fixed_points_with<O: Objective + ?Sized>(
    obj: &O,
    starts: &[Vec<f64>],
    opts: &SearchOptions,
) -> Result<FixedPointSearch> {
    if starts.is_empty() {
        return Err(Error::Parameter("start grid is empty".into()));
    }
    let bounds = obj.bounds();
    let margin = 2.0 * opts.fd_step;
    for s in starts {
        check_in_bounds(s, &bounds, margin)?;
    }
    let mut records: Vec<FixedPointRecord> = Vec::new();
    let mut diagnostics = Vec::with_capacity(starts.len());
    for start in starts {
        let diag = newton_from(obj, start, &bounds, margin, opts);
        if diag.converged {
            let dup = records
                .iter()
                .any(|r| relative_separation(&r.theta_star, &diag.final_theta) <= opts.merge_tol);
            if !dup {
                records.push(record_at(obj, &diag.final_theta, opts.fd_step)?);
            }
        }
        diagnostics.push(diag);
    }
    records.sort_by(|a, b| a.theta_star.partial_cmp(&b.theta_star).unwrap_or(std::cmp::Ordering::Equal));
    Ok(FixedPointSearch { records, diagnostics })
}

pub fn find_fixed_points(cfg: &FrozenObjectiveConfig, starts: &[Vec<f64>]) -> Result<FixedPointSearch> {
    let opts = SearchOptions {
        fd_step: cfg.fd_step,
        ..SearchOptions::default()
    };
    find_fixed_points_with(&FrozenObjective::new(cfg)?, starts, &opts)
}

fn record_at<O: Objective + ?Sized>(obj: &O, theta: &[f64], step: f64) -> Result<FixedPointRecord> {
    let (g, h) = grad_hessian_with(obj, theta, step)?;
    let eigenvalues = sym_eigenvalues(&h);
    Ok(FixedPointRecord {
        theta_star: theta.to_vec(),
        s_star: obj.value(theta)?,
        gradient_norm: g.norm(),
        stability: Stability::classify(&eigenvalues),
        eigenvalues,
        hessian: h,
    })
}

fn newton_from<O: Objective + ?Sized>(
    obj: &O,
    start: &[f64],
    bounds: &[(f64, f64)],
    margin: f64,
    opts: &SearchOptions,
) -> StartDiagnostic {
    let mut theta = start.to_vec();
    let mut diag = StartDiagnostic {
        start: start.to_vec(),
        converged: false,
        iterations: 0,
        final_theta: theta.clone(),
        gradient_norm: f64::NAN,
        message: None,
    };
    let (mut g, mut h) = match grad_hessian_with(obj, &theta, opts.fd_step) {
        Ok(v) => v,
        Err(e) => {
            diag.message = Some(e.to_string());
            return diag;
        }
    };
    for it in 0..=opts.max_iter {
        diag.iterations = it;
        diag.final_theta = theta.clone();
        diag.gradient_norm = g.norm();
        if g.norm() < opts.grad_tol {
            diag.converged = true;
            return diag;
        }
        if it == opts.max_iter {
            break;
        }
        let dir = match h.clone().lu().solve(&(-&g)) {
            Some(d) if d.iter().all(|v| v.is_finite()) => d,
            _ => g.clone(),
        };
        // longest step along dir that stays inside the shrunken box
        let mut max_step = 1.0f64;
        for (i, (lo, hi)) in bounds.iter().enumerate() {
            let (lo, hi) = (lo + margin, hi - margin);
            if dir[i] > 0.0 {
                max_step = max_step.min((hi - theta[i]) / dir[i]);
            } else if dir[i] < 0.0 {
                max_step = max_step.min((lo - theta[i]) / dir[i]);
            }
        }
        let mut step = max_step.max(0.0);
        let mut moved = false;
        while step > 1e-12 {
            let trial: Vec<f64> = theta.iter().zip(dir.iter()).map(|(t, d)| t + step * d).collect();
            if let Ok((tg, th)) = grad_hessian_with(obj, &trial, opts.fd_step) {
                if tg.norm() < (1.0 - 1e-4 * step) * g.norm() {
                    theta = trial;
                    g = tg;
                    h = th;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            diag.message = Some(if max_step < 1e-12 {
                "stalled at parameter bound".into()
            } else {
                "line search failed to reduce the gradient".into()
            });
            return diag;
        }
    }
    diag.message = Some(format!("no convergence in {} iterations", opts.max_iter));
    diag
}

/// Log-spaced start grid over the interior of the bounds, `per_axis` points
/// along each parameter.
pub fn default_starts(bounds: &[(f64, f64)], per_axis: usize, margin: f64) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|(lo, hi)| log_grid(lo + margin, hi - margin, per_axis))
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanCell {
    pub lambda2: f64,
    pub lambda3: f64,
    pub stable_count: usize,
    pub stable_locations: Vec<Vec<f64>>,
    pub records: Vec<FixedPointRecord>,
    /// Stable points pairwise separated by at least `merge_tol`.
    pub separated: bool,
    pub error: Option<String>,
    pub failed_starts: usize,
}

/// Fixed-point search at every `(λ₂, λ₃)` cell, in parallel. Cells come back
/// in input order and a failing cell never aborts the scan.
pub fn bifurcation_scan(
    cfg: &FrozenObjectiveConfig,
    lambda_grid: &[(f64, f64)],
    starts: &[Vec<f64>],
) -> Result<Vec<ScanCell>> {
    if lambda_grid.is_empty() {
        return Err(Error::Parameter("lambda grid is empty".into()));
    }
    let merge_tol = DEFAULT_MERGE_TOL;
    Ok(lambda_grid
        .par_iter()
        .map(|&(l2, l3)| {
            let cell_cfg = cfg.with_multipliers(l2, l3);
            match find_fixed_points(&cell_cfg, starts) {
                Ok(search) => {
                    let stable: Vec<Vec<f64>> = search.stable().map(|r| r.theta_star.clone()).collect();
                    let separated = stable.iter().enumerate().all(|(i, a)| {
                        stable[i + 1..]
                            .iter()
                            .all(|b| relative_separation(a, b) >= merge_tol)
                    });
                    ScanCell {
                        lambda2: l2,
                        lambda3: l3,
                        stable_count: stable.len(),
                        stable_locations: stable,
                        separated,
                        failed_starts: search.diagnostics.iter().filter(|d| !d.converged).count(),
                        records: search.records,
                        error: None,
                    }
                }
                Err(e) => ScanCell {
                    lambda2: l2,
                    lambda3: l3,
                    stable_count: 0,
                    stable_locations: Vec::new(),
                    records: Vec::new(),
                    separated: true,
                    error: Some(e.to_string()),
                    failed_starts: starts.len(),
                },
            }
        })
        .collect())
}

/// Cartesian product of two multiplier axes, λ₂ outer.
pub fn lambda_grid(lambda2: &[f64], lambda3: &[f64]) -> Vec<(f64, f64)> {
    lambda2
        .iter()
        .flat_map(|a| lambda3.iter().map(move |b| (*a, *b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Quadratic;

    impl Objective for Quadratic {
        fn bounds(&self) -> Vec<(f64, f64)> {
            vec![(-5.0, 5.0)]
        }
        fn value(&self, t: &[f64]) -> Result<f64> {
            Ok(-(t[0] - 1.0).powi(2))
        }
    }

    struct Double;

    // maxima at ±1, minimum at 0
    impl Objective for Double {
        fn bounds(&self) -> Vec<(f64, f64)> {
            vec![(-3.0, 3.0)]
        }
        fn value(&self, t: &[f64]) -> Result<f64> {
            Ok(-(t[0] * t[0] - 1.0).powi(2))
        }
    }

    fn cfg(l2: f64, l3: f64) -> FrozenObjectiveConfig {
        let domain = Arc::new(DiscreteDomain::grid_1d(16, 0.0, 1.0).unwrap());
        FrozenObjectiveConfig::new(
            KernelFamily::lengthscale_only(FamilyKind::SquaredExponential, 1.0),
            domain,
            &KernelSpec::squared_exponential(0.3, 1.0),
            0.1,
            l2,
            l3,
        )
        .unwrap()
    }

    #[test]
    fn quadratic_hook() {
        for t in [-2.0, 0.3, 1.0, 4.0] {
            let (g, h) = grad_hessian_with(&Quadratic, &[t], 1e-4).unwrap();
            assert_abs_diff_eq!(g[0], -2.0 * (t - 1.0), epsilon = 1e-6);
            assert_abs_diff_eq!(h[(0, 0)], -2.0, epsilon = 1e-6);
        }
        let s = find_fixed_points_with(&Quadratic, &[vec![-3.0], vec![2.0]], &SearchOptions::default()).unwrap();
        assert_eq!(s.records.len(), 1);
        assert_abs_diff_eq!(s.records[0].theta_star[0], 1.0, epsilon = 1e-8);
        assert_eq!(s.records[0].stability, Stability::Stable);
    }

    #[test]
    fn double_well_finds_all_three() {
        let starts: Vec<Vec<f64>> = [-2.0, -0.9, -0.1, 0.2, 0.8, 2.5].iter().map(|v| vec![*v]).collect();
        let s = find_fixed_points_with(&Double, &starts, &SearchOptions::default()).unwrap();
        let kinds: Vec<_> = s.records.iter().map(|r| r.stability).collect();
        assert_eq!(kinds, vec![Stability::Stable, Stability::Unstable, Stability::Stable]);
        for r in &s.records {
            assert!(r.gradient_norm < DEFAULT_GRAD_TOL);
        }
    }

    #[test]
    fn classification() {
        assert_eq!(Stability::classify(&[-2.0, -1.0]), Stability::Stable);
        assert_eq!(Stability::classify(&[1.0, 3.0]), Stability::Unstable);
        assert_eq!(Stability::classify(&[-1.0, 3.0]), Stability::Saddle);
        assert_eq!(Stability::classify(&[0.0, 3.0]), Stability::Degenerate);
        assert_eq!(Stability::classify(&[1e-8, 3.0]), Stability::Degenerate);
    }

    #[test]
    fn consistency_only_recovers_environment() {
        let c = cfg(0.0, 1.0);
        let starts = default_starts(&c.bounds(), 12, 2.0 * c.fd_step);
        let s = find_fixed_points(&c, &starts).unwrap();
        let stable: Vec<_> = s.stable().collect();
        assert_eq!(stable.len(), 1);
        assert_abs_diff_eq!(stable[0].theta_star[0], 0.3, epsilon = 1e-3);
        assert_abs_diff_eq!(stable[0].s_star, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn info_only_prefers_short_lengthscales() {
        let c = cfg(1.0, 0.0);
        let mut prev = f64::INFINITY;
        for l in log_grid(0.04, 5.0, 40) {
            let v = frozen_objective(&[l], &c).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn mixed_optimum_lies_between() {
        let c = cfg(1.0, 1.0);
        let starts = default_starts(&c.bounds(), 12, 2.0 * c.fd_step);
        let s = find_fixed_points(&c, &starts).unwrap();
        let lo = c.bounds()[0].0;
        let best = s
            .stable()
            .max_by(|a, b| a.s_star.total_cmp(&b.s_star))
            .unwrap();
        assert!(best.theta_star[0] > lo && best.theta_star[0] < 0.3);
    }

    #[test]
    fn duplicate_starts_merge() {
        let c = cfg(0.0, 1.0);
        let s = find_fixed_points(&c, &[vec![0.5], vec![0.5]]).unwrap();
        assert_eq!(s.records.len(), 1);
        assert_eq!(s.diagnostics.len(), 2);
    }

    #[test]
    fn bounds_enforced() {
        let c = cfg(1.0, 1.0);
        assert!(matches!(frozen_objective(&[1e-4], &c), Err(Error::Domain(_))));
        let lo = c.bounds()[0].0;
        assert!(matches!(grad_hessian(&[lo + 0.5 * c.fd_step], &c), Err(Error::Domain(_))));
        assert!(find_fixed_points(&c, &[]).is_err());
    }

    #[test]
    fn both_multipliers_zero_rejected() {
        let c = cfg(1.0, 1.0);
        assert!(c.with_multipliers(0.0, 0.0).validate().is_err());
    }

    #[test]
    fn hessian_is_symmetric_in_two_dims() {
        let mut c = cfg(1.0, 2.0);
        c.family.fit_amplitude = true;
        let (_, h) = grad_hessian(&[0.25, 1.3], &c).unwrap();
        assert!((h[(0, 1)] - h[(1, 0)]).abs() < 1e-10);
    }

    #[test]
    fn scan_keeps_order_and_reports_bad_cells() {
        let c = cfg(1.0, 1.0);
        let starts = default_starts(&c.bounds(), 6, 2.0 * c.fd_step);
        let grid = vec![(0.0, 0.0), (0.0, 1.0), (0.0, 2.0)];
        let cells = bifurcation_scan(&c, &grid, &starts).unwrap();
        assert!(cells[0].error.is_some());
        for cell in &cells[1..] {
            assert_eq!(cell.stable_count, 1);
        }
        assert_eq!(cells.iter().map(|c| c.lambda3).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.1, 10.0, 8);
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[7], 10.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
