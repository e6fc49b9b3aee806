use nalgebra::DMatrix;
use serde::Serialize;

use super::{PathMeasureSpec, TransitionOdds};
use crate::error::{Error, Result};
use crate::linalg::logsumexp;

/// Solved Gibbs path measure.
#[derive(Debug, Clone, Serialize)]
pub struct GibbsPathMeasure {
    pub ln_z: f64,
    /// `(T+1) × m`, row `t` is the law of `k_t`.
    pub node_marginals: DMatrix<f64>,
    /// `T` matrices, entry `(j, k)` of matrix `t` is `P(k_t = j, k_{t+1} = k)`.
    pub pair_marginals: Vec<DMatrix<f64>>,
    pub expected_switch_cost: f64,
    pub expected_info: f64,
    #[serde(skip)]
    pub(crate) log_alpha: DMatrix<f64>,
    #[serde(skip)]
    pub(crate) log_beta: DMatrix<f64>,
    #[serde(skip)]
    pub(crate) log_transfer: DMatrix<f64>,
}

/// Forward/backward evaluation of the path measure in log space.
pub fn transfer_solve(spec: &PathMeasureSpec) -> Result<GibbsPathMeasure> {
    spec.validate()?;
    solve(spec)
}

pub(crate) fn solve(spec: &PathMeasureSpec) -> Result<GibbsPathMeasure> {
    let m = spec.m();
    let len = spec.horizon + 1;
    let log_transfer = DMatrix::from_fn(m, m, |j, k| spec.log_transfer(j, k));

    let mut log_alpha = DMatrix::from_element(len, m, f64::NEG_INFINITY);
    for k in 0..m {
        log_alpha[(0, k)] = spec.log_initial(k);
    }
    let mut buf = vec![0.0; m];
    for t in 1..len {
        for k in 0..m {
            for j in 0..m {
                buf[j] = log_alpha[(t - 1, j)] + log_transfer[(j, k)];
            }
            log_alpha[(t, k)] = logsumexp(&buf);
        }
    }
    let last: Vec<f64> = (0..m).map(|k| log_alpha[(len - 1, k)]).collect();
    let ln_z = logsumexp(&last);
    if !ln_z.is_finite() {
        return Err(Error::Numeric("forward messages vanished; ln Z is not finite".into()));
    }

    let mut log_beta = DMatrix::zeros(len, m);
    for t in (0..len - 1).rev() {
        for j in 0..m {
            for k in 0..m {
                buf[k] = log_transfer[(j, k)] + log_beta[(t + 1, k)];
            }
            log_beta[(t, j)] = logsumexp(&buf);
        }
    }

    // Each slice is normalised by its own log-sum (equal to ln Z in exact
    // arithmetic) so rounding drift over long horizons cannot leak into it.
    let mut node_marginals = DMatrix::zeros(len, m);
    for t in 0..len {
        let row: Vec<f64> = (0..m).map(|k| log_alpha[(t, k)] + log_beta[(t, k)]).collect();
        let z = logsumexp(&row);
        for k in 0..m {
            node_marginals[(t, k)] = (row[k] - z).exp();
        }
    }
    let pair_marginals: Vec<DMatrix<f64>> = (0..len - 1)
        .map(|t| {
            let logs = DMatrix::from_fn(m, m, |j, k| {
                log_alpha[(t, j)] + log_transfer[(j, k)] + log_beta[(t + 1, k)]
            });
            let z = logsumexp(logs.as_slice());
            logs.map(|v| (v - z).exp())
        })
        .collect();

    let expected_switch_cost = pair_marginals
        .iter()
        .map(|p| {
            let mut s = 0.0;
            for j in 0..m {
                for k in 0..m {
                    if j != k {
                        s += p[(j, k)];
                    }
                }
            }
            s
        })
        .sum();
    let expected_info = (0..len)
        .map(|t| (0..m).map(|k| node_marginals[(t, k)] * spec.info[k]).sum::<f64>())
        .sum();

    Ok(GibbsPathMeasure {
        ln_z,
        node_marginals,
        pair_marginals,
        expected_switch_cost,
        expected_info,
        log_alpha,
        log_beta,
        log_transfer,
    })
}

impl GibbsPathMeasure {
    pub fn horizon(&self) -> usize {
        self.pair_marginals.len()
    }

    pub fn m(&self) -> usize {
        self.node_marginals.ncols()
    }

    /// `S[P] = λ_C·E[C] − λ_G·E[G] + ln Z`, clipped at 0 from above.
    pub fn path_entropy(&self, spec: &PathMeasureSpec) -> f64 {
        let s = spec.lambda_c * self.expected_switch_cost - spec.lambda_g * self.expected_info + self.ln_z;
        s.min(0.0)
    }

    /// Exact conditional law of `k_{t+1}` given `k_t = from`.
    pub fn conditional_next(&self, t: usize, from: usize) -> Result<Vec<f64>> {
        self.check_step(t, from, 0)?;
        let m = self.m();
        let logits: Vec<f64> = (0..m)
            .map(|k| self.log_transfer[(from, k)] + self.log_beta[(t + 1, k)])
            .collect();
        let norm = logsumexp(&logits);
        if !norm.is_finite() {
            return Err(Error::UndefinedOdds(format!("state {from} has no successor at t={t}")));
        }
        Ok(logits.iter().map(|l| (l - norm).exp()).collect())
    }

    /// Probability of leaving `from` at step `t → t+1`.
    pub fn switch_probability(&self, t: usize, from: usize) -> Result<f64> {
        let next = self.conditional_next(t, from)?;
        Ok(1.0 - next[from])
    }

    pub fn transition_odds(
        &self,
        spec: &PathMeasureSpec,
        t: usize,
        from: usize,
        to: usize,
    ) -> Result<TransitionOdds> {
        self.check_step(t, from, to)?;
        if spec.q[from][from] == 0.0 {
            return Err(Error::UndefinedOdds(format!("q({from}|{from}) = 0")));
        }
        let switch = if to != from { spec.lambda_c } else { 0.0 };
        let one_step = spec.q[from][to] / spec.q[from][from]
            * (-switch + spec.lambda_g * (spec.info[to] - spec.info[from])).exp();
        let exact_conditional = (self.log_transfer[(from, to)] + self.log_beta[(t + 1, to)]
            - self.log_transfer[(from, from)]
            - self.log_beta[(t + 1, from)])
            .exp();
        Ok(TransitionOdds {
            one_step,
            exact_conditional,
        })
    }

    fn check_step(&self, t: usize, from: usize, to: usize) -> Result<()> {
        if t >= self.horizon() {
            return Err(Error::Parameter(format!("step {t} must be < horizon {}", self.horizon())));
        }
        if from >= self.m() || to >= self.m() {
            return Err(Error::Parameter(format!("states must be < {}", self.m())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathengine::{enumerate_paths, path_entropy, transition_odds};
    use approx::assert_abs_diff_eq;

    fn chain() -> PathMeasureSpec {
        PathMeasureSpec {
            horizon: 6,
            pi0: vec![0.2, 0.5, 0.3],
            q: vec![vec![0.6, 0.3, 0.1], vec![0.25, 0.5, 0.25], vec![0.1, 0.2, 0.7]],
            info: vec![0.1, 0.8, 0.4],
            lambda_c: 0.5,
            lambda_g: 0.7,
        }
    }

    #[test]
    fn zero_multipliers_give_reference_marginals() {
        let spec = chain().with_multipliers(0.0, 0.0);
        let g = transfer_solve(&spec).unwrap();
        assert_abs_diff_eq!(g.ln_z, 0.0, epsilon = 1e-14);
        let mut p = spec.pi0.clone();
        for t in 0..=spec.horizon {
            for k in 0..3 {
                assert_abs_diff_eq!(g.node_marginals[(t, k)], p[k], epsilon = 1e-14);
            }
            p = (0..3).map(|k| (0..3).map(|j| p[j] * spec.q[j][k]).sum()).collect();
        }
    }

    #[test]
    fn matches_enumeration() {
        let spec = chain();
        let g = transfer_solve(&spec).unwrap();
        let e = enumerate_paths(&spec).unwrap();
        assert_abs_diff_eq!(g.ln_z, e.ln_z, epsilon = 1e-10);
        assert_abs_diff_eq!(g.expected_switch_cost, e.expected_switch_cost(), epsilon = 1e-10);
        assert_abs_diff_eq!(g.expected_info, e.expected_info(), epsilon = 1e-10);
        assert_abs_diff_eq!(g.path_entropy(&spec), e.path_entropy(), epsilon = 1e-10);
    }

    #[test]
    fn marginal_consistency() {
        let spec = chain();
        let g = transfer_solve(&spec).unwrap();
        for t in 0..=spec.horizon {
            assert_abs_diff_eq!(g.node_marginals.row(t).sum(), 1.0, epsilon = 1e-10);
        }
        for (t, p) in g.pair_marginals.iter().enumerate() {
            for j in 0..3 {
                assert_abs_diff_eq!(p.row(j).sum(), g.node_marginals[(t, j)], epsilon = 1e-10);
                assert_abs_diff_eq!(p.column(j).sum(), g.node_marginals[(t + 1, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn long_horizon_is_stable() {
        let mut spec = chain();
        spec.horizon = 10_000;
        spec.lambda_g = 3.0;
        let g = transfer_solve(&spec).unwrap();
        assert!(g.ln_z.is_finite());
        assert_abs_diff_eq!(g.node_marginals.row(5000).sum(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn odds_examples() {
        // q uniform, λ_C = λ_G = 1, ΔI = 2 → e
        let spec = PathMeasureSpec::uniform(1, vec![0.0, 2.0], 1.0, 1.0);
        let o = transition_odds(&spec, 0, 0, 1).unwrap();
        assert_abs_diff_eq!(o.one_step, std::f64::consts::E, epsilon = 1e-14);
        assert_abs_diff_eq!(o.exact_conditional, o.one_step, epsilon = 1e-12);
        let e = enumerate_paths(&spec).unwrap();
        let ratio = e.probs[1] / e.probs[0]; // (A,B) vs (A,A)
        assert_abs_diff_eq!(ratio, o.one_step, epsilon = 1e-12);

        // threshold: ΔI = λ_C/λ_G → odds 1
        let th = PathMeasureSpec::uniform(4, vec![0.0, 0.75], 1.5, 2.0);
        let o = transition_odds(&th, 3, 0, 1).unwrap();
        assert_abs_diff_eq!(o.one_step, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(o.exact_conditional, 1.0, epsilon = 1e-12);

        let mut r = chain().with_multipliers(0.0, 0.0);
        r.horizon = 3;
        let o = transition_odds(&r, 1, 2, 0).unwrap();
        assert_abs_diff_eq!(o.one_step, 0.1 / 0.7, epsilon = 1e-14);
    }

    #[test]
    fn odds_errors() {
        let spec = PathMeasureSpec {
            horizon: 2,
            pi0: vec![0.5, 0.5],
            q: vec![vec![0.0, 1.0], vec![0.5, 0.5]],
            info: vec![0.0, 1.0],
            lambda_c: 0.0,
            lambda_g: 0.0,
        };
        assert!(matches!(transition_odds(&spec, 0, 0, 1), Err(Error::UndefinedOdds(_))));
        assert!(transition_odds(&spec, 2, 1, 0).is_err());
    }

    #[test]
    fn interior_odds_include_backward_messages() {
        let spec = PathMeasureSpec::uniform(5, vec![0.0, 1.0], 0.4, 0.9);
        let o_last = transition_odds(&spec, 4, 0, 1).unwrap();
        assert_abs_diff_eq!(o_last.exact_conditional, o_last.one_step, epsilon = 1e-12);
        let o_first = transition_odds(&spec, 0, 0, 1).unwrap();
        assert!((o_first.exact_conditional - o_first.one_step).abs() > 1e-3);
        let e = enumerate_paths(&spec).unwrap();
        let pairs = e.pair_marginals();
        assert_abs_diff_eq!(
            pairs[0][(0, 1)] / pairs[0][(0, 0)],
            o_first.exact_conditional,
            epsilon = 1e-10
        );
    }

    #[test]
    fn entropy_examples() {
        let zero = chain().with_multipliers(0.0, 0.0);
        assert_abs_diff_eq!(path_entropy(&zero).unwrap(), 0.0, epsilon = 1e-14);
        let det = PathMeasureSpec::uniform(1, vec![0.0, 0.0], 1e3, 0.0);
        assert_abs_diff_eq!(path_entropy(&det).unwrap(), -(2f64.ln()), epsilon = 1e-10);
        assert!(path_entropy(&chain()).unwrap() < 0.0);
    }
}
