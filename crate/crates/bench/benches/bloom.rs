use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use kernelcal_core::bloomsim::{run_episode, BloomConfig, Policy};

fn bloom(c: &mut Criterion) {
    let mut g = c.benchmark_group("episode");
    g.sample_size(10);
    let cfg = BloomConfig::default();
    for policy in [Policy::Adaptive, Policy::FixedA] {
        g.bench_function(policy.as_str(), |b| b.iter(|| run_episode(black_box(&cfg), policy, 3).unwrap()));
    }
    let mut h2 = cfg.clone();
    h2.weights.horizon = 2;
    g.bench_function("adaptive_lookahead2", |b| b.iter(|| run_episode(black_box(&h2), Policy::Adaptive, 3).unwrap()));
    g.finish();
}

criterion_group!(benches, bloom);
criterion_main!(benches);
