use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use epmpd_core::{epmpd_run, generate, naive_pairwise_run, EpmpdOptions, Runtime, Variant, WorkloadSpec};

fn tree(c: &mut Criterion) {
    let mut g = c.benchmark_group("epmpd");
    g.sample_size(10);
    for m in [4u32, 8] {
        let sets = generate(&WorkloadSpec::new(m, 256, 30.0, 7)).unwrap().sets;
        for variant in [Variant::I, Variant::II, Variant::III] {
            g.bench_with_input(BenchmarkId::new(variant.to_string(), m), &sets, |b, sets| {
                b.iter(|| epmpd_run(sets, variant, &Runtime::in_process(), &EpmpdOptions::default()).unwrap())
            });
        }
        g.bench_with_input(BenchmarkId::new("naive", m), &sets, |b, sets| {
            b.iter(|| naive_pairwise_run(sets, &Runtime::in_process(), &EpmpdOptions::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, tree);
criterion_main!(benches);
