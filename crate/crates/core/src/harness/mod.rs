//! Experiment orchestration: configs, replicate runs, result files and the
//! paired policy comparison.
//!
//! Everything an experiment writes is computed first and then written in one
//! pass, so a run that cannot write leaves no files behind. Outputs depend
//! only on the config and seeds, never on the thread count.

mod compare;
mod output;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bloomsim::{run_episode, BloomConfig, EpisodeResult, Policy};
use crate::error::{Error, Result};
use crate::fixedpoints::{
    bifurcation_scan, default_starts, lambda_grid, log_grid, FamilyKind, FrozenObjectiveConfig, KernelFamily,
    ScanCell, DEFAULT_FD_STEP,
};
use crate::infogeom::InfoValue;
use crate::kernelspace::{gram, DiscreteDomain, KernelMatrix, KernelSpec};
use crate::pathengine::{sample_paths, transfer_solve, PathMeasureSpec};
use crate::thermo::{landauer_ledger, speed_limit_check, ThermoConfig};
use crate::INFO_MODEL;

pub use compare::{
    channel_stats, compare_policies, sign_test_p, BudgetAudit, ChannelStats, ComparisonSummary, MetricsRow,
    PairedMetrics, SubsetSummary, DEFAULT_V_THRESHOLD,
};
pub use output::{csv_bytes, jsonl_bytes, OutputSet};
pub use trace::{episode_trace, read_trace, split_runs, TraceRow};

pub const TOOL_NAME: &str = "kernelcal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Toy,
    Fixedpoints,
    Bloom,
    Thermo,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Toy => "toy",
            ExperimentKind::Fixedpoints => "fixedpoints",
            ExperimentKind::Bloom => "bloom",
            ExperimentKind::Thermo => "thermo",
        }
    }
}

/// Inclusive seed range, written `a..b` (or a single `a`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl SeedRange {
    pub fn new(start: u64, end: u64) -> Result<Self> {
        if end < start {
            return Err(Error::Parameter(format!("empty seed range {start}..{end}")));
        }
        Ok(Self { start, end })
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + Clone {
        self.start..=self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Default for SeedRange {
    fn default() -> Self {
        Self { start: 0, end: 0 }
    }
}

impl std::str::FromStr for SeedRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("seed range {s:?} is not `a..b`"));
        let s = s.trim();
        match s.split_once("..") {
            Some((a, b)) => {
                let b = b.strip_prefix('=').unwrap_or(b);
                Self::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
            }
            None => {
                let a = s.parse().map_err(|_| bad())?;
                Self::new(a, a)
            }
        }
    }
}

impl TryFrom<String> for SeedRange {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SeedRange> for String {
    fn from(r: SeedRange) -> String {
        r.to_string()
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub payload: serde_json::Value,
    #[serde(default)]
    pub seeds: SeedRange,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub parallelism: usize,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, payload: serde_json::Value, seeds: SeedRange, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            payload,
            seeds,
            output_dir: output_dir.into(),
            parallelism: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config {
                path: "parallelism".into(),
                message: "must be >= 1".into(),
            });
        }
        match self.kind {
            ExperimentKind::Toy => ToyPayload::from_payload(&self.payload)?.validate(),
            ExperimentKind::Thermo => parse_payload::<ThermoPayload>(&self.payload)?.validate(),
            ExperimentKind::Fixedpoints => parse_payload::<FixedPointsPayload>(&self.payload)?.validate(),
            ExperimentKind::Bloom => BloomPayload::from_payload(&self.payload)?.validate(),
        }
    }
}

/// Typed view of a payload. Type errors name the offending field.
pub fn parse_payload<T: DeserializeOwned>(value: &serde_json::Value) -> Result<T> {
    let value = if value.is_null() { serde_json::json!({}) } else { value.clone() };
    serde_path_to_error::deserialize(value).map_err(|e| Error::Config {
        path: format!("payload{}", path_suffix(&e.path().to_string())),
        message: e.into_inner().to_string(),
    })
}

/// Split `key` off an object payload: the rest is parsed as the module
/// config, `key` as an extra option.
fn split_payload<T: DeserializeOwned, U: DeserializeOwned>(
    value: &serde_json::Value,
    key: &str,
    default: impl FnOnce() -> U,
) -> Result<(T, U)> {
    let mut rest = if value.is_null() { serde_json::json!({}) } else { value.clone() };
    let extra = rest.as_object_mut().and_then(|obj| obj.remove(key));
    let main = parse_payload(&rest)?;
    let extra = match extra {
        Some(v) => serde_path_to_error::deserialize(v).map_err(|e| Error::Config {
            path: format!("payload.{key}{}", path_suffix(&e.path().to_string())),
            message: e.into_inner().to_string(),
        })?,
        None => default(),
    };
    Ok((main, extra))
}

fn path_suffix(p: &str) -> String {
    if p == "." || p.is_empty() {
        String::new()
    } else if p.starts_with('[') {
        p.to_string()
    } else {
        format!(".{p}")
    }
}

/// Load an experiment config, or the config echoed inside a manifest.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let value = match value.get("config") {
        Some(inner) if value.get("entries").is_some() => inner.clone(),
        _ => value,
    };
    serde_path_to_error::deserialize(value).map_err(|e| Error::Config {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

fn default_samples() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyPayload {
    #[serde(flatten)]
    pub spec: PathMeasureSpec,
    /// Trajectories drawn per seed.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl ToyPayload {
    pub fn from_payload(v: &serde_json::Value) -> Result<Self> {
        let (spec, samples) = split_payload(v, "samples", default_samples)?;
        Ok(Self { spec, samples })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()
    }
}

fn default_kbt() -> f64 {
    1.0
}

fn default_trace_kernels() -> Vec<KernelSpec> {
    BloomConfig::default().kernels
}

fn default_trace_grid() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoPayload {
    pub trace: PathBuf,
    #[serde(default = "default_kbt")]
    pub kbt: f64,
    /// Kernels named by `kernel_id` in the trace, for the speed-limit check.
    #[serde(default = "default_trace_kernels")]
    pub kernels: Vec<KernelSpec>,
    /// Side of the unit-square grid the kernels are compared on.
    #[serde(default = "default_trace_grid")]
    pub grid_n: usize,
}

impl ThermoPayload {
    pub fn validate(&self) -> Result<()> {
        ThermoConfig::new(self.kbt)?;
        if self.grid_n == 0 {
            return Err(Error::Config {
                path: "payload.grid_n".into(),
                message: "must be >= 1".into(),
            });
        }
        self.kernels.iter().try_for_each(KernelSpec::validate)
    }
}

fn default_family() -> KernelFamily {
    KernelFamily::lengthscale_only(FamilyKind::SquaredExponential, 1.0)
}

fn default_env() -> KernelSpec {
    KernelSpec::squared_exponential(0.3, 1.0)
}

fn default_fp_grid() -> usize {
    16
}

fn default_fp_domain() -> (f64, f64) {
    (0.0, 1.0)
}

fn default_fp_noise() -> f64 {
    0.1
}

fn default_lambda_axis() -> Vec<f64> {
    log_grid(0.1, 10.0, 8)
}

fn default_starts_per_axis() -> usize {
    12
}

/// Frozen-kernel objective on a 1-D grid plus the multiplier grid to scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointsPayload {
    #[serde(default = "default_family")]
    pub family: KernelFamily,
    #[serde(default = "default_fp_grid")]
    pub grid_n: usize,
    #[serde(default = "default_fp_domain")]
    pub domain: (f64, f64),
    #[serde(default = "default_env")]
    pub env: KernelSpec,
    #[serde(default = "default_fp_noise")]
    pub noise_var: f64,
    #[serde(default = "default_lambda_axis")]
    pub lambda2: Vec<f64>,
    #[serde(default = "default_lambda_axis")]
    pub lambda3: Vec<f64>,
    #[serde(default = "default_starts_per_axis")]
    pub starts_per_axis: usize,
}

impl Default for FixedPointsPayload {
    fn default() -> Self {
        parse_payload(&serde_json::json!({})).expect("all fields default")
    }
}

impl FixedPointsPayload {
    /// Objective at the first grid cell; scans swap the multipliers.
    pub fn objective(&self) -> Result<FrozenObjectiveConfig> {
        let domain = Arc::new(DiscreteDomain::grid_1d(self.grid_n, self.domain.0, self.domain.1)?);
        let (l2, l3) = (
            self.lambda2.first().copied().unwrap_or(1.0),
            self.lambda3.first().copied().unwrap_or(1.0),
        );
        FrozenObjectiveConfig::new(self.family, domain, &self.env, self.noise_var, l2, l3)
    }

    pub fn starts(&self, cfg: &FrozenObjectiveConfig) -> Vec<Vec<f64>> {
        default_starts(&cfg.bounds(), self.starts_per_axis, 2.0 * DEFAULT_FD_STEP)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda2.is_empty() || self.lambda3.is_empty() {
            return Err(Error::Config {
                path: "payload.lambda2".into(),
                message: "multiplier grid is empty".into(),
            });
        }
        if self.starts_per_axis == 0 {
            return Err(Error::Config {
                path: "payload.starts_per_axis".into(),
                message: "must be >= 1".into(),
            });
        }
        self.objective().map(|_| ())
    }
}

fn all_policies() -> Vec<Policy> {
    vec![Policy::Adaptive, Policy::FixedA, Policy::FixedB]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BloomPayload {
    #[serde(flatten)]
    pub config: BloomConfig,
    #[serde(default = "all_policies")]
    pub policies: Vec<Policy>,
}

impl BloomPayload {
    pub fn from_payload(v: &serde_json::Value) -> Result<Self> {
        let (config, policies) = split_payload(v, "policies", all_policies)?;
        Ok(Self { config, policies })
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::Config {
                path: "payload.policies".into(),
                message: "no policy to run".into(),
            });
        }
        self.config.validate()
    }
}

/// Status of one unit of work (a seed, a policy/seed pair or a scan cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub policy: Option<String>,
    pub files: Vec<PathBuf>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl ManifestEntry {
    fn ok(seed: Option<u64>, policy: Option<&str>, files: Vec<PathBuf>) -> Self {
        Self {
            seed,
            policy: policy.map(str::to_string),
            files,
            status: "ok".into(),
            error: None,
        }
    }

    fn failed(seed: Option<u64>, policy: Option<&str>, err: String) -> Self {
        Self {
            seed,
            policy: policy.map(str::to_string),
            files: Vec::new(),
            status: "error".into(),
            error: Some(err),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub info_model: String,
    pub config: ExperimentConfig,
    pub files: Vec<PathBuf>,
    pub entries: Vec<ManifestEntry>,
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub failed: usize,
}

impl RunOutcome {
    pub fn is_partial(&self) -> bool {
        self.failed > 0
    }
}

/// Fail early, before any work, if `dir` could not receive files.
fn check_writable(dir: &Path) -> Result<()> {
    let mut probe_dir = dir;
    while !probe_dir.exists() {
        match probe_dir.parent() {
            Some(p) if !p.as_os_str().is_empty() => probe_dir = p,
            _ => {
                probe_dir = Path::new(".");
                break;
            }
        }
    }
    if !probe_dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotADirectory, format!("{} is not a directory", probe_dir.display())),
        ));
    }
    let probe = probe_dir.join(format!(".{TOOL_NAME}-write-probe-{}", std::process::id()));
    std::fs::write(&probe, b"").map_err(|e| Error::io(dir, e))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

/// Run every seed of an experiment and write its result files plus
/// `manifest.json` under `cfg.output_dir`. Per-seed failures are recorded in
/// the manifest rather than aborting the run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    check_writable(&cfg.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    let (mut out, entries) = pool.install(|| match cfg.kind {
        ExperimentKind::Toy => run_toy(cfg),
        ExperimentKind::Thermo => run_thermo(cfg),
        ExperimentKind::Fixedpoints => run_fixedpoints(cfg),
        ExperimentKind::Bloom => run_bloom(cfg),
    })?;
    let failed = entries.iter().filter(|e| !e.is_ok()).count();
    let mut files: Vec<PathBuf> = out.paths().map(Path::to_path_buf).collect();
    files.push("manifest.json".into());
    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        info_model: INFO_MODEL.into(),
        config: cfg.clone(),
        files,
        entries,
        status: if failed == 0 { "ok" } else { "partial" }.into(),
    };
    out.add_json("manifest.json", &manifest)?;
    out.write_to(&cfg.output_dir)?;
    Ok(RunOutcome { manifest, failed })
}

type Staged = (OutputSet, Vec<ManifestEntry>);

#[derive(Serialize)]
struct MeasureRow {
    t: usize,
    state: usize,
    marginal: f64,
}

#[derive(Serialize)]
struct PairRow {
    t: usize,
    from: usize,
    to: usize,
    probability: f64,
}

#[derive(Serialize)]
struct SampleLine<'a> {
    seed: u64,
    index: usize,
    states: &'a [usize],
}

#[derive(Serialize)]
struct ToySummary {
    ln_z: f64,
    expected_c: f64,
    expected_g: f64,
    path_entropy: f64,
    info_model: &'static str,
}

fn run_toy(cfg: &ExperimentConfig) -> Result<Staged> {
    let p = ToyPayload::from_payload(&cfg.payload)?;
    let measure = transfer_solve(&p.spec)?;
    let mut out = OutputSet::new();
    let nm = &measure.node_marginals;
    let rows: Vec<MeasureRow> = (0..nm.nrows())
        .flat_map(|t| (0..nm.ncols()).map(move |k| (t, k)))
        .map(|(t, k)| MeasureRow {
            t,
            state: k,
            marginal: nm[(t, k)],
        })
        .collect();
    out.add_csv("measure.csv", &rows)?;
    let pairs: Vec<PairRow> = measure
        .pair_marginals
        .iter()
        .enumerate()
        .flat_map(|(t, m)| {
            (0..m.nrows()).flat_map(move |j| {
                (0..m.ncols()).map(move |k| PairRow {
                    t,
                    from: j,
                    to: k,
                    probability: m[(j, k)],
                })
            })
        })
        .collect();
    out.add_csv("pairs.csv", &pairs)?;
    out.add_json(
        "summary.json",
        &ToySummary {
            ln_z: measure.ln_z,
            expected_c: measure.expected_switch_cost,
            expected_g: measure.expected_info,
            path_entropy: measure.path_entropy(&p.spec),
            info_model: INFO_MODEL,
        },
    )?;
    let per_seed: Vec<(u64, Result<Vec<crate::pathengine::Trajectory>>)> = cfg
        .seeds
        .seeds()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|s| (s, sample_paths(&p.spec, p.samples, s)))
        .collect();
    let mut lines = Vec::new();
    let mut entries = Vec::new();
    for (seed, res) in &per_seed {
        match res {
            Ok(paths) => {
                for (i, tr) in paths.iter().enumerate() {
                    serde_json::to_writer(
                        &mut lines,
                        &SampleLine {
                            seed: *seed,
                            index: i,
                            states: &tr.states,
                        },
                    )?;
                    lines.push(b'\n');
                }
                entries.push(ManifestEntry::ok(Some(*seed), None, vec!["samples.jsonl".into()]));
            }
            Err(e) => entries.push(ManifestEntry::failed(Some(*seed), None, e.to_string())),
        }
    }
    out.add("samples.jsonl", lines);
    Ok((out, entries))
}

#[derive(Serialize)]
struct LedgerRow {
    seed: Option<u64>,
    step: usize,
    delta_i: f64,
    w_min: f64,
    cumulative: f64,
}

#[derive(Serialize)]
struct SpeedRow {
    seed: Option<u64>,
    step: usize,
    hs_speed: f64,
    info_rate: f64,
    required_power: f64,
    supplied_power: f64,
    satisfied: bool,
}

#[derive(Serialize)]
struct ThermoRunSummary {
    seed: Option<u64>,
    steps: usize,
    cumulative_w_min: f64,
    cumulative_delta_i_pos: f64,
    speed_limit_checked: bool,
    speed_limit_satisfied: Option<bool>,
}

fn run_thermo(cfg: &ExperimentConfig) -> Result<Staged> {
    let p: ThermoPayload = parse_payload(&cfg.payload)?;
    let tc = ThermoConfig::new(p.kbt)?;
    let runs = split_runs(read_trace(&p.trace)?)?;
    let domain = Arc::new(DiscreteDomain::unit_square(p.grid_n, p.grid_n)?);
    let grams: Vec<KernelMatrix> = p.kernels.iter().map(|k| gram(k, &domain)).collect::<Result<_>>()?;
    let mut ledger_rows = Vec::new();
    let mut speed_rows = Vec::new();
    let mut summaries = Vec::new();
    let mut entries = Vec::new();
    for (seed, rows) in &runs {
        let res = (|| -> Result<ThermoRunSummary> {
            let info: Vec<InfoValue> = rows.iter().map(|r| InfoValue::new(r.info)).collect::<Result<_>>()?;
            let ledger = landauer_ledger(&info, &tc)?;
            for (i, s) in ledger.steps.iter().enumerate() {
                ledger_rows.push(LedgerRow {
                    seed: *seed,
                    step: i,
                    delta_i: s.delta_i,
                    w_min: s.w_min,
                    cumulative: s.cumulative_w_min,
                });
            }
            let n = rows.len();
            let has_kernels = rows.iter().all(|r| r.kernel_id.is_some());
            let has_power = rows[..n - 1].iter().all(|r| r.supplied_power.is_some());
            let mut satisfied = None;
            if has_kernels && has_power {
                let kernels: Vec<KernelMatrix> = rows
                    .iter()
                    .map(|r| {
                        let id = r.kernel_id.unwrap_or_default();
                        grams.get(id).cloned().ok_or_else(|| {
                            Error::Input(format!("trace names kernel {id}; only {} configured", grams.len()))
                        })
                    })
                    .collect::<Result<_>>()?;
                let power: Vec<f64> = rows[..n - 1].iter().map(|r| r.supplied_power.unwrap_or_default()).collect();
                let report = speed_limit_check(&kernels, &info, &power, &tc)?;
                for (i, s) in report.steps.iter().enumerate() {
                    speed_rows.push(SpeedRow {
                        seed: *seed,
                        step: i,
                        hs_speed: s.hs_speed,
                        info_rate: s.info_rate,
                        required_power: s.required_power,
                        supplied_power: s.supplied_power,
                        satisfied: s.satisfied,
                    });
                }
                satisfied = Some(report.all_satisfied());
            }
            Ok(ThermoRunSummary {
                seed: *seed,
                steps: n - 1,
                cumulative_w_min: ledger.cumulative_w_min,
                cumulative_delta_i_pos: ledger.cumulative_delta_i_pos,
                speed_limit_checked: satisfied.is_some(),
                speed_limit_satisfied: satisfied,
            })
        })();
        match res {
            Ok(s) => {
                let mut files = vec![PathBuf::from("ledger.csv")];
                if s.speed_limit_checked {
                    files.push("speed_limit.csv".into());
                }
                entries.push(ManifestEntry::ok(*seed, None, files));
                summaries.push(s);
            }
            Err(e) => entries.push(ManifestEntry::failed(*seed, None, e.to_string())),
        }
    }
    let mut out = OutputSet::new();
    out.add_csv("ledger.csv", &ledger_rows)?;
    if !speed_rows.is_empty() {
        out.add_csv("speed_limit.csv", &speed_rows)?;
    }
    out.add_json(
        "summary.json",
        &serde_json::json!({ "kbt": p.kbt, "info_model": INFO_MODEL, "runs": summaries }),
    )?;
    Ok((out, entries))
}

#[derive(Serialize)]
struct FixedPointRow {
    lambda2: f64,
    lambda3: f64,
    theta: String,
    s_star: f64,
    stability: &'static str,
    min_eig: f64,
    max_eig: f64,
}

#[derive(Serialize)]
struct CellSummary<'a> {
    lambda2: f64,
    lambda3: f64,
    stable_count: usize,
    stable_locations: &'a [Vec<f64>],
    separated: bool,
    failed_starts: usize,
    error: &'a Option<String>,
}

fn run_fixedpoints(cfg: &ExperimentConfig) -> Result<Staged> {
    let p: FixedPointsPayload = parse_payload(&cfg.payload)?;
    let obj = p.objective()?;
    let starts = p.starts(&obj);
    let cells: Vec<ScanCell> = bifurcation_scan(&obj, &lambda_grid(&p.lambda2, &p.lambda3), &starts)?;
    let mut rows = Vec::new();
    for c in &cells {
        for r in &c.records {
            let fold = |f: fn(f64, f64) -> f64, init| r.eigenvalues.iter().copied().fold(init, f);
            rows.push(FixedPointRow {
                lambda2: c.lambda2,
                lambda3: c.lambda3,
                theta: r.theta_star.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"),
                s_star: r.s_star,
                stability: r.stability.as_str(),
                min_eig: fold(f64::min, f64::INFINITY),
                max_eig: fold(f64::max, f64::NEG_INFINITY),
            });
        }
    }
    let summary: Vec<CellSummary> = cells
        .iter()
        .map(|c| CellSummary {
            lambda2: c.lambda2,
            lambda3: c.lambda3,
            stable_count: c.stable_count,
            stable_locations: &c.stable_locations,
            separated: c.separated,
            failed_starts: c.failed_starts,
            error: &c.error,
        })
        .collect();
    let mut out = OutputSet::new();
    out.add_csv("fixed_points.csv", &rows)?;
    out.add_json(
        "scan_summary.json",
        &serde_json::json!({
            "info_model": INFO_MODEL,
            "objective": "lambda2 * info_gain - lambda3 * kl",
            "starts": starts.len(),
            "all_separated": cells.iter().all(|c| c.separated),
            "cells": summary,
        }),
    )?;
    let entries = cells
        .iter()
        .filter_map(|c| {
            c.error.as_ref().map(|e| {
                ManifestEntry::failed(None, None, format!("cell ({}, {}): {e}", c.lambda2, c.lambda3))
            })
        })
        .collect();
    Ok((out, entries))
}

/// Run `policies × seeds` episodes in parallel, results in input order.
pub fn run_bloom_batch(
    cfg: &BloomConfig,
    policies: &[Policy],
    seeds: impl Iterator<Item = u64>,
) -> Vec<(Policy, u64, Result<EpisodeResult>)> {
    let jobs: Vec<(Policy, u64)> = seeds
        .flat_map(|s| policies.iter().map(move |p| (*p, s)))
        .collect();
    let mut res: Vec<_> = jobs
        .into_par_iter()
        .map(|(p, s)| (p, s, run_episode(cfg, p, s)))
        .collect();
    res.sort_by_key(|(p, s, _)| (policies.iter().position(|q| q == p), *s));
    res
}

fn run_bloom(cfg: &ExperimentConfig) -> Result<Staged> {
    let p = BloomPayload::from_payload(&cfg.payload)?;
    let results = run_bloom_batch(&p.config, &p.policies, cfg.seeds.seeds());
    let nested = p.policies.len() > 1;
    let prefix = |pol: Policy| if nested { PathBuf::from(pol.as_str()) } else { PathBuf::new() };
    let mut out = OutputSet::new();
    let mut entries = Vec::new();
    let mut metrics: Vec<MetricsRow> = Vec::new();
    let mut traces: BTreeMap<usize, Vec<TraceRow>> = BTreeMap::new();
    for (pol, seed, res) in &results {
        match res {
            Ok(r) => {
                let file = prefix(*pol).join(format!("episode_{seed}.jsonl"));
                out.add_jsonl(file.clone(), &r.steps)?;
                entries.push(ManifestEntry::ok(Some(*seed), Some(pol.as_str()), vec![file]));
                metrics.push(r.into());
                let idx = p.policies.iter().position(|q| q == pol).unwrap_or(0);
                traces
                    .entry(idx)
                    .or_default()
                    .extend(episode_trace(r, p.config.budget.horizon_steps));
            }
            Err(e) => entries.push(ManifestEntry::failed(Some(*seed), Some(pol.as_str()), e.to_string())),
        }
    }
    out.add_csv("metrics.csv", &metrics)?;
    for (idx, rows) in &traces {
        out.add_csv(prefix(p.policies[*idx]).join("trace.csv"), rows)?;
    }
    if p.policies.contains(&Policy::Adaptive) {
        let rows_for = |pol: &str| -> Vec<MetricsRow> { metrics.iter().filter(|r| r.policy == pol).cloned().collect() };
        let adaptive = rows_for("adaptive");
        let mut comparisons = BTreeMap::new();
        for fixed in p.policies.iter().filter(|q| **q != Policy::Adaptive) {
            let entry = match compare_policies(&adaptive, &rows_for(fixed.as_str()), DEFAULT_V_THRESHOLD) {
                Ok(summary) => serde_json::to_value(summary)?,
                Err(e) => serde_json::json!({ "refused": e.to_string() }),
            };
            comparisons.insert(fixed.as_str(), entry);
        }
        if !comparisons.is_empty() {
            out.add_json("comparison.json", &comparisons)?;
        }
    }
    Ok((out, entries))
}
