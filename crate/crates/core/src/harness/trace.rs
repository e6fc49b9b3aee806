//! Per-step information traces, the input of the thermodynamic accounting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bloomsim::EpisodeResult;
use crate::error::{Error, Result};

/// One epoch of an information trace. `supplied_power` is the budget for the
/// step that leaves this epoch, so the last row of a run has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    #[serde(default)]
    pub seed: Option<u64>,
    pub step: usize,
    /// Cumulative information in nats.
    pub info: f64,
    #[serde(default)]
    pub kernel_id: Option<usize>,
    #[serde(default)]
    pub supplied_power: Option<f64>,
}

/// Trace of one episode with an even per-step share of the energy budget.
pub fn episode_trace(r: &EpisodeResult, horizon_steps: usize) -> Vec<TraceRow> {
    let power = r.e_max / horizon_steps.max(1) as f64;
    let n = r.steps.len();
    let mut rows = Vec::with_capacity(n + 1);
    let first_kernel = r.steps.first().map(|s| s.kernel_id);
    rows.push(TraceRow {
        seed: Some(r.seed),
        step: 0,
        info: 0.0,
        kernel_id: first_kernel,
        supplied_power: (n > 0).then_some(power),
    });
    for (i, s) in r.steps.iter().enumerate() {
        let next_kernel = r.steps.get(i + 1).map_or(s.kernel_id, |x| x.kernel_id);
        rows.push(TraceRow {
            seed: Some(r.seed),
            step: i + 1,
            info: s.cumulative_info,
            kernel_id: Some(next_kernel),
            supplied_power: (i + 1 < n).then_some(power),
        });
    }
    rows
}

/// Read a trace from `.csv` or JSON-lines (anything else).
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::Input(format!("{} line {}: {e}", path.display(), i + 1)))
            })
            .collect()
    }
}

/// Split rows into runs keyed by seed, each in step order. Steps must run
/// 0, 1, 2, ... without gaps.
pub fn split_runs(rows: Vec<TraceRow>) -> Result<BTreeMap<Option<u64>, Vec<TraceRow>>> {
    let mut runs: BTreeMap<Option<u64>, Vec<TraceRow>> = BTreeMap::new();
    for r in rows {
        runs.entry(r.seed).or_default().push(r);
    }
    for (seed, run) in runs.iter_mut() {
        run.sort_by_key(|r| r.step);
        for (i, r) in run.iter().enumerate() {
            if r.step != i {
                return Err(Error::Input(format!(
                    "trace for seed {seed:?}: expected step {i}, found {}",
                    r.step
                )));
            }
        }
        if run.len() < 2 {
            return Err(Error::Input(format!("trace for seed {seed:?} has fewer than 2 epochs")));
        }
    }
    Ok(runs)
}
