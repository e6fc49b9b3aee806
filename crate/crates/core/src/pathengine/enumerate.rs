use nalgebra::DMatrix;

use super::{log_weight_unchecked, PathMeasureSpec, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::logsumexp;

/// Upper bound on `m^(T+1)` for brute-force enumeration.
pub const MAX_ENUMERATED_PATHS: usize = 1 << 20;

/// The Gibbs measure written out path by path.
#[derive(Debug, Clone)]
pub struct EnumeratedMeasure {
    pub paths: Vec<Trajectory>,
    pub probs: Vec<f64>,
    pub reference_probs: Vec<f64>,
    pub ln_z: f64,
    m: usize,
    info: Vec<f64>,
}

pub fn enumerate_paths(spec: &PathMeasureSpec) -> Result<EnumeratedMeasure> {
    spec.validate()?;
    let m = spec.m();
    let len = spec.horizon + 1;
    let count = (m as f64).powi(len as i32);
    if count > MAX_ENUMERATED_PATHS as f64 {
        return Err(Error::Size {
            paths: count,
            limit: MAX_ENUMERATED_PATHS,
        });
    }
    let count = count as usize;
    let mut paths = Vec::with_capacity(count);
    let mut log_w = Vec::with_capacity(count);
    let mut states = vec![0usize; len];
    for idx in 0..count {
        let mut r = idx;
        // most significant digit first, so paths come out in lexicographic order
        for s in states.iter_mut().rev() {
            *s = r % m;
            r /= m;
        }
        log_w.push(log_weight_unchecked(spec, &states));
        paths.push(Trajectory::new(states.clone()));
    }
    let ln_z = logsumexp(&log_w);
    if !ln_z.is_finite() {
        return Err(Error::Numeric("all paths have zero weight".into()));
    }
    let probs = log_w.iter().map(|lw| (lw - ln_z).exp()).collect();
    let reference_probs = paths.iter().map(|p| p.reference_probability(spec)).collect();
    Ok(EnumeratedMeasure {
        paths,
        probs,
        reference_probs,
        ln_z,
        m,
        info: spec.info.clone(),
    })
}

impl EnumeratedMeasure {
    pub fn node_marginals(&self) -> DMatrix<f64> {
        let len = self.paths[0].states.len();
        let mut out = DMatrix::zeros(len, self.m);
        for (p, w) in self.paths.iter().zip(&self.probs) {
            for (t, s) in p.states.iter().enumerate() {
                out[(t, *s)] += w;
            }
        }
        out
    }

    pub fn pair_marginals(&self) -> Vec<DMatrix<f64>> {
        let len = self.paths[0].states.len();
        let mut out = vec![DMatrix::zeros(self.m, self.m); len - 1];
        for (p, w) in self.paths.iter().zip(&self.probs) {
            for (t, pair) in p.states.windows(2).enumerate() {
                out[t][(pair[0], pair[1])] += w;
            }
        }
        out
    }

    pub fn expected_switch_cost(&self) -> f64 {
        self.paths
            .iter()
            .zip(&self.probs)
            .map(|(p, w)| w * p.switch_count() as f64)
            .sum()
    }

    pub fn expected_info(&self) -> f64 {
        self.paths
            .iter()
            .zip(&self.probs)
            .map(|(p, w)| w * p.cumulative_info(&self.info))
            .sum()
    }

    /// Direct `−Σ P ln(P/Q)` over paths with `P > 0`.
    pub fn path_entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.reference_probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| -p * (p / q).ln())
            .sum()
    }

    pub fn probability_of(&self, traj: &Trajectory) -> Option<f64> {
        self.paths
            .binary_search(traj)
            .ok()
            .map(|i| self.probs[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_four_paths() {
        let spec = PathMeasureSpec::uniform(1, vec![0.4, 1.1], 0.0, 0.0);
        let e = enumerate_paths(&spec).unwrap();
        assert_eq!(e.paths.len(), 4);
        for p in &e.probs {
            assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(e.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn heavy_switch_cost_concentrates_on_constant_paths() {
        let spec = PathMeasureSpec::uniform(4, vec![0.2, 0.9, 0.5], 1e3, 0.3);
        let e = enumerate_paths(&spec).unwrap();
        let constant: f64 = e
            .paths
            .iter()
            .zip(&e.probs)
            .filter(|(p, _)| p.switch_count() == 0)
            .map(|(_, w)| w)
            .sum();
        assert_abs_diff_eq!(constant, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn size_guard() {
        let spec = PathMeasureSpec::uniform(20, vec![0.0, 1.0], 0.0, 0.0);
        assert!(matches!(enumerate_paths(&spec), Err(Error::Size { .. })));
        let ok = PathMeasureSpec::uniform(19, vec![0.0, 1.0], 0.0, 0.0);
        assert_eq!(enumerate_paths(&ok).unwrap().paths.len(), 1 << 20);
    }

    #[test]
    fn lookup_by_trajectory() {
        let spec = PathMeasureSpec::uniform(2, vec![0.0, 1.0, 2.0], 0.2, 0.1);
        let e = enumerate_paths(&spec).unwrap();
        let t = Trajectory::new(vec![2, 0, 1]);
        let idx = e.paths.iter().position(|p| *p == t).unwrap();
        assert_eq!(e.probability_of(&t), Some(e.probs[idx]));
    }
}
