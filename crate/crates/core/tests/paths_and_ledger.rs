//! Path measure and Landauer ledger checked against brute-force enumeration.

mod common;

use std::collections::HashMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::Rng;

use kernelcal_core::pathengine::{
    enumerate_paths, path_entropy, sample_paths, transfer_solve, transition_odds,
};
use kernelcal_core::thermo::landauer_ledger;
use kernelcal_core::{InfoValue, PathMeasureSpec, ThermoConfig, Trajectory};

/// `ln Σ_γ Q[γ]·exp(−λ_C·C + λ_G·G)` straight from the path list.
fn brute_ln_z(spec: &PathMeasureSpec) -> f64 {
    let m = spec.m();
    let n = m.pow(spec.horizon as u32 + 1);
    let mut total = 0.0;
    for code in 0..n {
        let mut states = Vec::with_capacity(spec.horizon + 1);
        let mut c = code;
        for _ in 0..=spec.horizon {
            states.push(c % m);
            c /= m;
        }
        let tr = Trajectory::new(states);
        let w = tr.reference_probability(spec)
            * (-spec.lambda_c * tr.switch_count() as f64 + spec.lambda_g * tr.cumulative_info(&spec.info)).exp();
        total += w;
    }
    total.ln()
}

#[test]
fn entropy_is_never_positive() {
    let mut r = common::rng(21);
    for _ in 0..200 {
        let m = r.random_range(2..4);
        let h = r.random_range(1..6);
        let spec = common::random_spec(&mut r, m, h);
        let s = path_entropy(&spec).unwrap();
        assert!(s <= 1e-12, "S = {s}");
        assert_abs_diff_eq!(s, enumerate_paths(&spec).unwrap().path_entropy(), epsilon = 1e-10);
    }
    let mut r = common::rng(22);
    let spec = common::random_spec(&mut r, 3, 4).with_multipliers(0.0, 0.0);
    assert_abs_diff_eq!(path_entropy(&spec).unwrap(), 0.0, epsilon = 1e-12);
}

#[test]
fn ln_z_against_brute_force() {
    let mut r = common::rng(23);
    for _ in 0..50 {
        let spec = common::random_spec(&mut r, 2, 6);
        assert_abs_diff_eq!(transfer_solve(&spec).unwrap().ln_z, brute_ln_z(&spec), epsilon = 1e-10);
    }
}

#[test]
fn derivatives_of_ln_z() {
    let mut r = common::rng(24);
    for _ in 0..50 {
        let spec = common::random_spec(&mut r, 3, 4);
        let g = transfer_solve(&spec).unwrap();
        let h = 1e-4;
        let lz = |s: &PathMeasureSpec| transfer_solve(s).unwrap().ln_z;
        let d_g = (lz(&spec.with_multipliers(spec.lambda_c, spec.lambda_g + h))
            - lz(&spec.with_multipliers(spec.lambda_c, spec.lambda_g - h)))
            / (2.0 * h);
        let d_c = (lz(&spec.with_multipliers(spec.lambda_c + h, spec.lambda_g))
            - lz(&spec.with_multipliers(spec.lambda_c - h, spec.lambda_g)))
            / (2.0 * h);
        assert_abs_diff_eq!(d_g, g.expected_info, epsilon = 1e-6);
        assert_abs_diff_eq!(-d_c, g.expected_switch_cost, epsilon = 1e-6);
    }
}

#[test]
fn long_horizon_and_its_truncation() {
    let spec = PathMeasureSpec {
        horizon: 10,
        pi0: vec![0.2, 0.5, 0.3],
        q: vec![vec![0.6, 0.3, 0.1], vec![0.25, 0.5, 0.25], vec![0.1, 0.2, 0.7]],
        info: vec![0.1, 0.8, 0.4],
        lambda_c: 0.5,
        lambda_g: 0.7,
    };
    for horizon in [10, 6] {
        let s = PathMeasureSpec { horizon, ..spec.clone() };
        let a = transfer_solve(&s).unwrap();
        let b = enumerate_paths(&s).unwrap();
        assert!((&a.node_marginals - b.node_marginals()).amax() <= 1e-10);
        assert_abs_diff_eq!(a.ln_z, b.ln_z, epsilon = 1e-10);
    }
    // the first epochs of the long measure are not those of the short one,
    // the backward messages see a longer future
    let long = transfer_solve(&spec).unwrap();
    let short = transfer_solve(&PathMeasureSpec { horizon: 6, ..spec }).unwrap();
    assert!((long.node_marginals.row(3) - short.node_marginals.row(3)).amax() > 1e-6);
}

#[test]
fn switching_probability_increases_with_gain() {
    let mut prev = 0.0;
    for i in 0..40 {
        let lg = i as f64 * 0.1;
        let spec = PathMeasureSpec::uniform(4, vec![0.0, 1.0], 1.0, lg);
        let p = transfer_solve(&spec).unwrap().switch_probability(3, 0).unwrap();
        assert!(p > prev);
        prev = p;
    }
}

#[test]
fn odds_examples() {
    let spec = PathMeasureSpec::uniform(1, vec![0.0, 2.0], 1.0, 1.0);
    let o = transition_odds(&spec, 0, 0, 1).unwrap();
    assert_abs_diff_eq!(o.one_step, std::f64::consts::E, epsilon = 1e-12);
    assert_abs_diff_eq!(o.exact_conditional, o.one_step, epsilon = 1e-12);
    // against the enumerated conditional
    let e = enumerate_paths(&spec).unwrap();
    let p01 = e.probability_of(&Trajectory::new(vec![0, 1])).unwrap();
    let p00 = e.probability_of(&Trajectory::new(vec![0, 0])).unwrap();
    assert_abs_diff_eq!(p01 / p00, o.exact_conditional, epsilon = 1e-12);

    let at_threshold = PathMeasureSpec::uniform(3, vec![0.0, 1.5], 0.75, 0.5);
    assert_abs_diff_eq!(transition_odds(&at_threshold, 1, 0, 1).unwrap().one_step, 1.0, epsilon = 1e-14);
}

#[test]
fn sample_frequencies_match_enumeration() {
    let mut r = common::rng(25);
    let spec = common::random_spec(&mut r, 2, 3);
    let n = 200_000;
    let paths = sample_paths(&spec, n, 7).unwrap();
    let mut counts: HashMap<Trajectory, usize> = HashMap::new();
    for p in paths {
        *counts.entry(p).or_default() += 1;
    }
    let e = enumerate_paths(&spec).unwrap();
    for (path, p) in e.paths.iter().zip(&e.probs) {
        let f = *counts.get(path).unwrap_or(&0) as f64 / n as f64;
        let band = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((f - p).abs() <= band, "{path:?}: {f} vs {p} ± {band}");
    }
}

fn infos(v: &[f64]) -> Vec<InfoValue> {
    v.iter().map(|x| InfoValue::new(*x).unwrap()).collect()
}

proptest! {
    #[test]
    fn ledger_dominates_and_scales(
        trace in prop::collection::vec(0.0f64..10.0, 2..40),
        kbt in 1e-3f64..10.0,
        c in 0.1f64..5.0,
    ) {
        let cfg = ThermoConfig::new(kbt).unwrap();
        let l = landauer_ledger(&infos(&trace), &cfg).unwrap();
        // every step pays at least kBT times what it learned
        for (s, w) in l.steps.iter().zip(trace.windows(2)) {
            prop_assert!(s.w_min >= kbt * (w[1] - w[0]) - 1e-12);
            prop_assert!(s.w_min >= 0.0);
        }
        let net = trace[trace.len() - 1] - trace[0];
        prop_assert!(l.cumulative_w_min >= kbt * net - 1e-9);
        let scaled = landauer_ledger(&infos(&trace), &ThermoConfig::new(c * kbt).unwrap()).unwrap();
        prop_assert!((scaled.cumulative_w_min - c * l.cumulative_w_min).abs() <= 1e-9 * scaled.cumulative_w_min.max(1.0));
    }

    #[test]
    fn ledger_concatenation(
        trace in prop::collection::vec(0.0f64..10.0, 3..40),
        cut_frac in 0.0f64..1.0,
    ) {
        let cfg = ThermoConfig::default();
        let cut = 1 + ((trace.len() - 2) as f64 * cut_frac) as usize;
        let cut = cut.min(trace.len() - 2);
        let v = infos(&trace);
        let whole = landauer_ledger(&v, &cfg).unwrap();
        let joined = landauer_ledger(&v[..=cut], &cfg).unwrap()
            .concat(&landauer_ledger(&v[cut..], &cfg).unwrap()).unwrap();
        prop_assert_eq!(whole, joined);
    }

    #[test]
    fn calibration_round_trip(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let m = 2 + (seed % 2) as usize;
        let spec = common::random_spec(&mut r, m, 4);
        let fwd = transfer_solve(&spec).unwrap();
        let cal = kernelcal_core::pathengine::calibrate_multipliers(
            &spec.with_multipliers(0.0, 0.0), fwd.expected_switch_cost, fwd.expected_info).unwrap();
        prop_assert!((cal.lambda_c - spec.lambda_c).abs() <= 1e-6);
        prop_assert!((cal.lambda_g - spec.lambda_g).abs() <= 1e-6);
    }
}
