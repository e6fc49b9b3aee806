//! Experiment runner end to end: file counts, row counts, and the thermo
//! check on a trace written by a bloom run.

use std::fs;

use serde_json::json;

use kernelcal_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, SeedRange};

#[test]
fn fifty_seed_bloom_batch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bloom");
    let mut cfg = ExperimentConfig::new(ExperimentKind::Bloom, json!({}), SeedRange::new(0, 49).unwrap(), &out);
    cfg.parallelism = 4;
    let outcome = run_experiment(&cfg).unwrap();
    assert!(!outcome.is_partial());

    for policy in ["adaptive", "fixed_a", "fixed_b"] {
        let episodes = fs::read_dir(out.join(policy))
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("episode_"))
            .count();
        assert_eq!(episodes, 50, "{policy}");
    }
    let mut rdr = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = header.iter().position(|h| h == "policy").unwrap();
    let mut per_policy = std::collections::BTreeMap::<String, usize>::new();
    for row in rdr.records() {
        *per_policy.entry(row.unwrap()[col].to_string()).or_default() += 1;
    }
    assert_eq!(per_policy.values().copied().collect::<Vec<_>>(), vec![50, 50, 50]);

    let cmp: serde_json::Value = serde_json::from_slice(&fs::read(out.join("comparison.json")).unwrap()).unwrap();
    let first = &cmp["fixed_a"];
    assert!(cmp.get("fixed_b").is_some());
    let p = first["surface"]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert_eq!(first["audit"]["seeds_match"], true);

    // the adaptive trace through the thermodynamic check, with the budget
    // read as joules at room temperature
    let thermo_out = dir.path().join("thermo");
    let kbt = 1.380649e-23 * 300.0;
    let tcfg = ExperimentConfig::new(
        ExperimentKind::Thermo,
        json!({ "trace": out.join("adaptive/trace.csv"), "kbt": kbt }),
        SeedRange::default(),
        &thermo_out,
    );
    run_experiment(&tcfg).unwrap();
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(thermo_out.join("summary.json")).unwrap()).unwrap();
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 50);
    for r in runs {
        assert_eq!(r["speed_limit_satisfied"], true);
    }
    assert!(thermo_out.join("speed_limit.csv").exists());
}
