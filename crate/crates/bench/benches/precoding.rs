use criterion::{criterion_group, criterion_main, Criterion};
use hbcoop_bench::Fixture;
use hbcoop_core::analog::{build_all, Architecture};
use hbcoop_core::montecarlo::realization_channels;
use hbcoop_core::silence::{algorithm1, algorithm2, all_active};
use std::hint::black_box;

fn channels(c: &mut Criterion) {
    let f = Fixture::reference(0);
    c.bench_function("channel_set_2bs_4users_64ant", |b| {
        b.iter(|| realization_channels(black_box(&f.scenario), 0).unwrap())
    });
}

fn analog(c: &mut Criterion) {
    let f = Fixture::reference(0);
    for arch in [Architecture::Fhp, Architecture::Php] {
        c.bench_function(&format!("egt_{}", arch.name()), |b| {
            b.iter(|| build_all(arch, black_box(&f.channels), &[4, 4]).unwrap())
        });
    }
}

fn silence(c: &mut Criterion) {
    let f = Fixture::reference(0);
    let inst = f.instance();
    let p = &f.scenario.silence;
    let mut g = c.benchmark_group("silence");
    g.sample_size(20);
    g.bench_function("all_active", |b| {
        b.iter(|| all_active(black_box(&inst), p).unwrap())
    });
    g.bench_function("algorithm1", |b| {
        b.iter(|| algorithm1(black_box(&inst), p).unwrap())
    });
    g.bench_function("algorithm2", |b| {
        b.iter(|| algorithm2(black_box(&inst), p).unwrap())
    });
    g.finish();
}

criterion_group!(benches, channels, analog, silence);
criterion_main!(benches);
