//! Exact maximum-caliber path measures over a finite kernel family.
//!
//! A trajectory visits one of `m` kernels at each epoch `t = 0..=T`. The
//! reference measure is a Markov chain `(π₀, q)`; the Gibbs measure
//! reweights each path by `exp(−λ_C·C[γ] + λ_G·G[γ])` where `C` counts
//! switches and `G` sums the per-epoch information `I_k` over all `T+1`
//! epochs.
//!
//! [`transfer_solve`] evaluates the measure with log-space forward/backward
//! messages; [`enumerate_paths`] is the brute-force oracle for small
//! problems.

mod calibrate;
mod enumerate;
mod sample;
mod transfer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calibrate::{achievable_ranges, calibrate_multipliers, Calibration};
pub use enumerate::{enumerate_paths, EnumeratedMeasure, MAX_ENUMERATED_PATHS};
pub use sample::sample_paths;
pub use transfer::{transfer_solve, GibbsPathMeasure};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite-family MaxCal problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMeasureSpec {
    /// Number of transitions `T`; a path has `T + 1` epochs.
    #[serde(alias = "T")]
    pub horizon: usize,
    pub pi0: Vec<f64>,
    /// Row-stochastic reference transitions, `q[from][to]`.
    pub q: Vec<Vec<f64>>,
    /// Per-kernel information `I_k` in nats.
    pub info: Vec<f64>,
    #[serde(alias = "lambda_C", default)]
    pub lambda_c: f64,
    #[serde(alias = "lambda_G", default)]
    pub lambda_g: f64,
}

impl PathMeasureSpec {
    /// Uniform `π₀` and uniform `q` over `m = info.len()` kernels.
    pub fn uniform(horizon: usize, info: Vec<f64>, lambda_c: f64, lambda_g: f64) -> Self {
        let m = info.len();
        let u = 1.0 / m as f64;
        Self {
            horizon,
            pi0: vec![u; m],
            q: vec![vec![u; m]; m],
            info,
            lambda_c,
            lambda_g,
        }
    }

    pub fn m(&self) -> usize {
        self.pi0.len()
    }

    pub fn with_multipliers(&self, lambda_c: f64, lambda_g: f64) -> Self {
        Self {
            lambda_c,
            lambda_g,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if m < 2 {
            return Err(Error::Parameter(format!("kernel family size {m} must be >= 2")));
        }
        if self.horizon < 1 {
            return Err(Error::Parameter("horizon must be >= 1".into()));
        }
        if self.q.len() != m || self.q.iter().any(|r| r.len() != m) || self.info.len() != m {
            return Err(Error::Shape(format!(
                "pi0 has {m} states; q must be {m}x{m} and info length {m}"
            )));
        }
        let check_dist = |row: &[f64], what: &str| -> Result<()> {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Parameter(format!("{what} has negative or non-finite entries")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Parameter(format!("{what} sums to {s}, not 1")));
            }
            Ok(())
        };
        check_dist(&self.pi0, "pi0")?;
        for (i, row) in self.q.iter().enumerate() {
            check_dist(row, &format!("q row {i}"))?;
        }
        if self.info.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("info values must be finite".into()));
        }
        if !(self.lambda_c.is_finite() && self.lambda_g.is_finite()) {
            return Err(Error::Parameter("multipliers must be finite".into()));
        }
        Ok(())
    }

    /// `ln q(to | from) − λ_C·1[to≠from] + λ_G·I_to`
    pub(crate) fn log_transfer(&self, from: usize, to: usize) -> f64 {
        let switch = if from != to { self.lambda_c } else { 0.0 };
        self.q[from][to].ln() - switch + self.lambda_g * self.info[to]
    }

    pub(crate) fn log_initial(&self, k: usize) -> f64 {
        self.pi0[k].ln() + self.lambda_g * self.info[k]
    }
}

/// A kernel-index sequence of length `T + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>) -> Self {
        Self { states }
    }

    pub fn validate_for(&self, spec: &PathMeasureSpec) -> Result<()> {
        if self.states.len() != spec.horizon + 1 {
            return Err(Error::Shape(format!(
                "trajectory has {} epochs, horizon needs {}",
                self.states.len(),
                spec.horizon + 1
            )));
        }
        if let Some(s) = self.states.iter().find(|s| **s >= spec.m()) {
            return Err(Error::Parameter(format!("state {s} outside [0, {})", spec.m())));
        }
        Ok(())
    }

    /// `C[γ]`: number of switches.
    pub fn switch_count(&self) -> usize {
        self.states.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// `G[γ]`: information summed over every epoch.
    pub fn cumulative_info(&self, info: &[f64]) -> f64 {
        self.states.iter().map(|s| info[*s]).sum()
    }

    /// Reference probability `π₀(k₀) Π q(k_{t+1}|k_t)`.
    pub fn reference_probability(&self, spec: &PathMeasureSpec) -> f64 {
        let mut p = spec.pi0[self.states[0]];
        for w in self.states.windows(2) {
            p *= spec.q[w[0]][w[1]];
        }
        p
    }
}

/// Unnormalised log weight; `-inf` when the reference gives the path zero
/// probability.
pub fn path_log_weight(spec: &PathMeasureSpec, traj: &Trajectory) -> Result<f64> {
    spec.validate()?;
    traj.validate_for(spec)?;
    Ok(log_weight_unchecked(spec, &traj.states))
}

pub(crate) fn log_weight_unchecked(spec: &PathMeasureSpec, states: &[usize]) -> f64 {
    let mut lw = spec.log_initial(states[0]);
    for w in states.windows(2) {
        lw += spec.log_transfer(w[0], w[1]);
    }
    lw
}

/// `Q[γ]·exp(−λ_C C[γ] + λ_G G[γ])`.
pub fn path_weight(spec: &PathMeasureSpec, traj: &Trajectory) -> Result<f64> {
    Ok(path_log_weight(spec, traj)?.exp())
}

/// Transition odds of moving `from → to` versus staying at `from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionOdds {
    /// Local weight ratio `(q(to|from)/q(from|from))·exp(−λ_C·1[to≠from] + λ_G(I_to − I_from))`.
    pub one_step: f64,
    /// Ratio of the exact Gibbs conditionals, including backward messages.
    pub exact_conditional: f64,
}

pub fn transition_odds(
    spec: &PathMeasureSpec,
    t: usize,
    from: usize,
    to: usize,
) -> Result<TransitionOdds> {
    let measure = transfer_solve(spec)?;
    measure.transition_odds(spec, t, from, to)
}

/// `S[P] = −Σ P ln(P/Q)`, evaluated as `λ_C·E[C] − λ_G·E[G] + ln Z`.
pub fn path_entropy(spec: &PathMeasureSpec) -> Result<f64> {
    let m = transfer_solve(spec)?;
    Ok(m.path_entropy(spec))
}
