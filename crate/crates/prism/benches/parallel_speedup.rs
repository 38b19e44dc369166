//! Compares the data-parallel fan-out against its sequential twin, both for
//! the raw map primitive and for a full evaluation sweep. Build with
//! `--no-default-features` to measure the fallback build instead (both
//! functions then run sequentially and should coincide).

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use prism::bench::{gen_scm, ScmConfig};
use prism::eval::{run_sweep, run_sweep_seq, MethodConfig};
use prism::par;

/// CPU-bound per-item work with no shared state, so ordering cannot matter.
fn mix(seed: u64) -> u64 {
    let mut x = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    for _ in 0..100_000 {
        x ^= x >> 30;
        x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 27;
    }
    x
}

fn bench_map_primitive(c: &mut Criterion) {
    let items: Vec<u64> = (0..64).collect();
    let mut group = c.benchmark_group("map_vec");
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(par::map_vec(black_box(&items), |&x| mix(x))))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(par::map_vec_seq(black_box(&items), |&x| mix(x))))
    });
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let bench = gen_scm(&ScmConfig::spurious(1000)).expect("scm generation");
    let methods = vec![
        MethodConfig::parse("prism-causal-opt", None).unwrap(),
        MethodConfig::parse("independence-only", None).unwrap(),
    ];
    let epsilons = [1.0];
    let seeds = [0, 1];

    let mut group = c.benchmark_group("sweep");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(run_sweep(&methods, &bench, &epsilons, &seeds).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(run_sweep_seq(&methods, &bench, &epsilons, &seeds).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, bench_map_primitive, bench_sweep);
criterion_main!(benches);
