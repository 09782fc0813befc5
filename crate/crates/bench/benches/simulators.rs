use std::hint::black_box;

use abcsmc_bench::model;
use abcsmc_core::rng;
use criterion::{criterion_group, criterion_main, Criterion};

fn simulators(c: &mut Criterion) {
    let cases: [(&str, &[f64]); 5] = [
        ("coalescent", &[4.68]),
        ("hierarchical", &[0.0, 1.0]),
        ("lotka_volterra", &[1.0, 1.0]),
        ("birth_death", &[1.0, 0.6]),
        ("michaelis_menten", &[0.1, 6.0, -4.0]),
    ];
    let mut group = c.benchmark_group("simulate");
    for (name, theta) in cases {
        let m = model(name);
        let mut r = rng::stream(3, 0);
        group.bench_function(name, |b| b.iter(|| m.simulate(black_box(theta), &mut r)));
    }
    group.finish();
}

criterion_group!(benches, simulators);
criterion_main!(benches);
