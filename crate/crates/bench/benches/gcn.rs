use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use waypoint_bench::fixture;
use waypoint_core::{encode_instance, neural_probe, GcnModel, ModelConfig};

fn inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("probe");
    for name in ["b1", "b2"] {
        let f = fixture(name, &[3]);
        let model = GcnModel::new(&f.graph, &ModelConfig::default(), 1).unwrap();
        let inst = f.instances[0].clone();
        group.bench_with_input(BenchmarkId::new("neural", f.graph.n()), &inst, |b, inst| {
            b.iter(|| neural_probe(&model, &f.graph, inst).unwrap())
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let f = fixture("b1", &[1, 2, 4]);
    let model = GcnModel::new(&f.graph, &ModelConfig::default(), 1).unwrap();
    let xs: Vec<Vec<u8>> = f
        .instances
        .iter()
        .cycle()
        .take(32)
        .map(|i| encode_instance(f.graph.n(), i))
        .collect();
    let xs: Vec<&[u8]> = xs.iter().map(Vec::as_slice).collect();
    let labels: Vec<usize> = f.instances.iter().cycle().take(32).map(|i| i.dest).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mask = model.sample_mask(xs.len(), &mut rng);
    c.bench_function("forward_backward/batch32", |b| {
        b.iter(|| {
            let cache = model.forward_train(&xs, &mask).unwrap();
            model.backward(&cache, &labels).unwrap()
        })
    });
}

criterion_group!(benches, inference, training_step);
criterion_main!(benches);
