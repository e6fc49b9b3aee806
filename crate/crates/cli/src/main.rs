use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use kernelcal_core::bloomsim::Policy;
use kernelcal_core::harness::{
    compare_policies, load_config, run_experiment, ExperimentConfig, ExperimentKind, MetricsRow, OutputSet,
    SeedRange, DEFAULT_V_THRESHOLD,
};
use kernelcal_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;
const EXIT_REFUSED: u8 = 4;

#[derive(Parser)]
#[command(name = "kernelcal", version, about = "Maximum-caliber kernel dynamics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    parallelism: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a finite-family path measure and draw sample trajectories
    Toy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "0")]
        seeds: SeedRange,
        #[command(flatten)]
        common: Common,
    },
    /// Landauer ledger (and speed-limit check when possible) for an information trace
    Thermo {
        /// Trace as JSON lines or CSV
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        kbt: f64,
        /// Optional JSON with `kernels` and `grid_n` for the speed-limit check
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Self-consistent kernels over a multiplier grid
    Fixedpoints {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Bloom-sampling episodes
    Bloom {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "0..49")]
        seeds: SeedRange,
        /// adaptive, fixed_a, fixed_b or all; repeatable
        #[arg(long, default_value = "all")]
        policy: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Paired comparison of two metrics files
    Compare {
        /// metrics.csv holding the adaptive rows
        #[arg(long)]
        adaptive: PathBuf,
        /// metrics.csv holding the fixed-kernel rows (defaults to --adaptive)
        #[arg(long)]
        fixed: Option<PathBuf>,
        #[arg(long, default_value = "fixed_a")]
        baseline: String,
        #[arg(long, default_value_t = DEFAULT_V_THRESHOLD)]
        v_threshold: f64,
        /// Also write comparison.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment config (or re-run the config inside a manifest)
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
}

fn read_json(path: &Path) -> anyhow::Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        }
        .into()
    })
}

/// A subcommand config is the module payload itself, or a full experiment
/// config of the same kind.
fn payload_from(path: Option<&Path>, kind: ExperimentKind) -> anyhow::Result<serde_json::Value> {
    let Some(path) = path else {
        return Ok(serde_json::json!({}));
    };
    let v = read_json(path)?;
    if v.get("kind").is_some() && v.get("payload").is_some() {
        let cfg = load_config(path)?;
        if cfg.kind != kind {
            return Err(Error::Config {
                path: "kind".into(),
                message: format!("expected {}, found {}", kind.as_str(), cfg.kind.as_str()),
            }
            .into());
        }
        return Ok(cfg.payload);
    }
    Ok(v)
}

fn parse_policies(names: &[String]) -> anyhow::Result<Vec<Policy>> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend([Policy::Adaptive, Policy::FixedA, Policy::FixedB]);
        } else {
            out.push(Policy::parse(n)?);
        }
    }
    out.dedup();
    Ok(out)
}

fn read_metrics(path: &Path, policy: &str) -> anyhow::Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(Error::from)?;
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        let r: MetricsRow = r.map_err(Error::from)?;
        if r.policy == policy {
            rows.push(r);
        }
    }
    Ok(rows)
}

fn execute(cfg: ExperimentConfig) -> anyhow::Result<ExitCode> {
    let outcome = run_experiment(&cfg)?;
    println!(
        "{}: {} file(s) written to {}",
        cfg.kind.as_str(),
        outcome.manifest.files.len(),
        cfg.output_dir.display()
    );
    if outcome.is_partial() {
        eprintln!("{} unit(s) failed; see manifest.json", outcome.failed);
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Toy { config, seeds, common } => {
            let payload = payload_from(Some(&config), ExperimentKind::Toy)?;
            let mut cfg = ExperimentConfig::new(ExperimentKind::Toy, payload, seeds, common.out);
            cfg.parallelism = common.parallelism;
            execute(cfg)
        }
        Command::Thermo {
            trace,
            kbt,
            config,
            common,
        } => {
            let mut payload = payload_from(config.as_deref(), ExperimentKind::Thermo)?;
            let obj = payload.as_object_mut().ok_or_else(|| Error::Config {
                path: "payload".into(),
                message: "expected an object".into(),
            })?;
            obj.insert("trace".into(), serde_json::to_value(&trace)?);
            obj.insert("kbt".into(), kbt.into());
            let mut cfg = ExperimentConfig::new(ExperimentKind::Thermo, payload, SeedRange::default(), common.out);
            cfg.parallelism = common.parallelism;
            execute(cfg)
        }
        Command::Fixedpoints { config, common } => {
            let payload = payload_from(config.as_deref(), ExperimentKind::Fixedpoints)?;
            let mut cfg =
                ExperimentConfig::new(ExperimentKind::Fixedpoints, payload, SeedRange::default(), common.out);
            cfg.parallelism = common.parallelism;
            execute(cfg)
        }
        Command::Bloom {
            config,
            seeds,
            policy,
            common,
        } => {
            let mut payload = payload_from(config.as_deref(), ExperimentKind::Bloom)?;
            let policies = parse_policies(&policy)?;
            if let Some(obj) = payload.as_object_mut() {
                obj.insert("policies".into(), serde_json::to_value(&policies)?);
            }
            let mut cfg = ExperimentConfig::new(ExperimentKind::Bloom, payload, seeds, common.out);
            cfg.parallelism = common.parallelism;
            execute(cfg)
        }
        Command::Compare {
            adaptive,
            fixed,
            baseline,
            v_threshold,
            out,
        } => {
            Policy::parse(&baseline)?;
            let a = read_metrics(&adaptive, "adaptive")?;
            let f = read_metrics(fixed.as_deref().unwrap_or(&adaptive), &baseline)?;
            let summary = compare_policies(&a, &f, v_threshold)?;
            let text = serde_json::to_string_pretty(&summary)?;
            println!("{text}");
            if let Some(dir) = out {
                let mut set = OutputSet::new();
                set.add_json("comparison.json", &summary)?;
                set.write_to(&dir)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            out,
            parallelism,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            execute(cfg)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::ComparisonRefused(_)) => EXIT_REFUSED,
        Some(Error::Io { .. }) => 1,
        Some(_) => EXIT_CONFIG,
        None if err.downcast_ref::<std::io::Error>().is_some() => 1,
        None => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
