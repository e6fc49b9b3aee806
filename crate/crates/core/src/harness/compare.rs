//! Paired adaptive-vs-fixed comparison with a one-sided sign test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, Discrete};

use crate::bloomsim::EpisodeResult;
use crate::error::{Error, Result};

/// Advection speed (per step) at or above which a run counts as
/// high-advection.
pub const DEFAULT_V_THRESHOLD: f64 = 0.05;

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub policy: String,
    pub rmse_surface: f64,
    pub rmse_subsurface: f64,
    pub total_info: f64,
    pub energy_used: f64,
    pub samples_returned: usize,
    pub violations: usize,
    pub e_max: f64,
    pub n_max: usize,
    pub advection_speed: f64,
    pub kernel_switches: usize,
}

impl From<&EpisodeResult> for MetricsRow {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            seed: r.seed,
            policy: r.policy.as_str().to_string(),
            rmse_surface: r.forecast_rmse_surface,
            rmse_subsurface: r.forecast_rmse_subsurface,
            total_info: r.total_info,
            energy_used: r.energy_used,
            samples_returned: r.samples_returned,
            violations: r.constraints_violated,
            e_max: r.e_max,
            n_max: r.n_max,
            advection_speed: r.advection_speed,
            kernel_switches: r.kernel_switches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMetrics {
    pub seed: u64,
    pub advection_speed: f64,
    /// adaptive − fixed; negative favours the adaptive policy.
    pub d_rmse_surface: f64,
    pub d_rmse_subsurface: f64,
    pub samples_equal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub n: usize,
    pub wins: usize,
    pub ties: usize,
    pub losses: usize,
    pub median_difference: f64,
    /// Ties count one half.
    pub win_fraction: f64,
    /// `P(X ≥ wins)` for `X ~ Bin(wins + losses, ½)`; 1 when every pair ties.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetAudit {
    pub seeds_match: bool,
    pub e_max_equal: bool,
    pub n_max_equal: bool,
    pub world_equal: bool,
}

impl BudgetAudit {
    pub fn all(&self) -> bool {
        self.seeds_match && self.e_max_equal && self.n_max_equal && self.world_equal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub v_threshold: f64,
    pub surface: ChannelStats,
    pub subsurface: ChannelStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub adaptive_policy: String,
    pub fixed_policy: String,
    pub pairs: Vec<PairedMetrics>,
    pub surface: ChannelStats,
    pub subsurface: ChannelStats,
    /// Pairs with advection speed ≥ the threshold; `None` if there are none.
    pub high_advection: Option<SubsetSummary>,
    pub audit: BudgetAudit,
    /// Share of seeds on which both policies brought back the same number of
    /// samples.
    pub samples_equal_fraction: f64,
}

/// One-sided sign-test p-value for `wins` successes among `n` untied pairs.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n as u64).expect("p = 1/2 is valid");
    let p: f64 = (wins as u64..=n as u64).map(|k| b.pmf(k)).sum();
    p.min(1.0)
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn channel_stats(diffs: &[f64]) -> ChannelStats {
    let wins = diffs.iter().filter(|d| **d < 0.0).count();
    let losses = diffs.iter().filter(|d| **d > 0.0).count();
    let ties = diffs.len() - wins - losses;
    let n = diffs.len();
    ChannelStats {
        n,
        wins,
        ties,
        losses,
        median_difference: median(diffs),
        win_fraction: if n == 0 {
            0.5
        } else {
            (wins as f64 + 0.5 * ties as f64) / n as f64
        },
        p_value: sign_test_p(wins, wins + losses),
    }
}

fn by_seed(rows: &[MetricsRow], what: &str) -> Result<BTreeMap<u64, MetricsRow>> {
    let mut m = BTreeMap::new();
    for r in rows {
        if m.insert(r.seed, r.clone()).is_some() {
            return Err(Error::ComparisonRefused(format!("{what}: seed {} appears twice", r.seed)));
        }
    }
    if m.is_empty() {
        return Err(Error::ComparisonRefused(format!("{what}: no rows")));
    }
    Ok(m)
}

/// Pair the two policies seed by seed. Refused unless both cover the same
/// seeds with identical `(E_max, N_max)` and advection speed on every seed.
pub fn compare_policies(
    adaptive: &[MetricsRow],
    fixed: &[MetricsRow],
    v_threshold: f64,
) -> Result<ComparisonSummary> {
    let a = by_seed(adaptive, "adaptive metrics")?;
    let f = by_seed(fixed, "fixed metrics")?;
    let audit = BudgetAudit {
        seeds_match: a.keys().eq(f.keys()),
        e_max_equal: a.iter().all(|(s, r)| f.get(s).is_some_and(|g| g.e_max == r.e_max)),
        n_max_equal: a.iter().all(|(s, r)| f.get(s).is_some_and(|g| g.n_max == r.n_max)),
        world_equal: a
            .iter()
            .all(|(s, r)| f.get(s).is_some_and(|g| g.advection_speed == r.advection_speed)),
    };
    if !audit.all() {
        return Err(Error::ComparisonRefused(format!("budget audit failed: {audit:?}")));
    }
    let pairs: Vec<PairedMetrics> = a
        .iter()
        .map(|(s, r)| {
            let g = &f[s];
            PairedMetrics {
                seed: *s,
                advection_speed: r.advection_speed,
                d_rmse_surface: r.rmse_surface - g.rmse_surface,
                d_rmse_subsurface: r.rmse_subsurface - g.rmse_subsurface,
                samples_equal: r.samples_returned == g.samples_returned,
            }
        })
        .collect();
    let stats = |ps: &[&PairedMetrics]| {
        let s: Vec<f64> = ps.iter().map(|p| p.d_rmse_surface).collect();
        let u: Vec<f64> = ps.iter().map(|p| p.d_rmse_subsurface).collect();
        (channel_stats(&s), channel_stats(&u))
    };
    let all: Vec<&PairedMetrics> = pairs.iter().collect();
    let (surface, subsurface) = stats(&all);
    let high: Vec<&PairedMetrics> = pairs.iter().filter(|p| p.advection_speed >= v_threshold).collect();
    let high_advection = (!high.is_empty()).then(|| {
        let (surface, subsurface) = stats(&high);
        SubsetSummary {
            v_threshold,
            surface,
            subsurface,
        }
    });
    let samples_equal_fraction = pairs.iter().filter(|p| p.samples_equal).count() as f64 / pairs.len() as f64;
    Ok(ComparisonSummary {
        adaptive_policy: a.values().next().map(|r| r.policy.clone()).unwrap_or_default(),
        fixed_policy: f.values().next().map(|r| r.policy.clone()).unwrap_or_default(),
        pairs,
        surface,
        subsurface,
        high_advection,
        audit,
        samples_equal_fraction,
    })
}
