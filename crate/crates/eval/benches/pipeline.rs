use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ivaclean_core::pipeline::remove_artifacts;
use ivaclean_core::semisim::gen_ground_truth;
use ivaclean_core::{Method, PipelineConfig, SimConfig};

fn remove(c: &mut Criterion) {
    let gt = gen_ground_truth(&SimConfig::default().with_seed(1)).unwrap();
    let mut group = c.benchmark_group("remove_artifacts");
    group.sample_size(10);
    for method in Method::ALL {
        let cfg = PipelineConfig::default().with_method(method);
        group.bench_with_input(BenchmarkId::from_parameter(method), &cfg, |b, cfg| {
            b.iter(|| remove_artifacts(&gt.contaminated, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, remove);
criterion_main!(benches);
