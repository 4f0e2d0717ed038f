use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ultrawide_bench::square_data;
use ultrawide_core::{
    build_empirical, center, esd, hermite_data, Activation, BaseActivation, BuildOptions, CenterMode,
    DeterministicEquivalents, WeightDraw,
};

fn empirical_ck(c: &mut Criterion) {
    let act = Activation::new(BaseActivation::Arctan).unwrap();
    let mut group = c.benchmark_group("build_empirical");
    group.sample_size(10);
    for (n, d1) in [(100, 10_000), (200, 20_000)] {
        let data = square_data(n);
        let w = WeightDraw::new(1, n, d1).unwrap();
        group.bench_with_input(BenchmarkId::new("ck", format!("{n}x{d1}")), &data, |b, data| {
            b.iter(|| build_empirical(data, &act, &w, &BuildOptions::ck_only()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("ntk", format!("{n}x{d1}")), &data, |b, data| {
            b.iter(|| build_empirical(data, &act, &w, &BuildOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn centered_spectrum(c: &mut Criterion) {
    let act = Activation::new(BaseActivation::Arctan).unwrap();
    let hd = hermite_data(&act, 40).unwrap();
    let data = square_data(200);
    let w = WeightDraw::new(1, 200, 20_000).unwrap();
    let k = build_empirical(&data, &act, &w, &BuildOptions::ck_only()).unwrap();
    let eq = DeterministicEquivalents::compute(&data, &act, &hd, None, false).unwrap();
    c.bench_function("center_and_esd/200", |b| {
        b.iter(|| esd(&center(CenterMode::CkVsPhi0, &k, &eq).unwrap().matrix).unwrap())
    });
}

criterion_group!(benches, empirical_ck, centered_spectrum);
criterion_main!(benches);
