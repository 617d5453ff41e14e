//! Sequential vs rayon execution of the data-parallel stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssqa_core::frontend::{EmbeddingMatrix, Frontend, FrontendConfig, Waveform};
use ssqa_core::inference::{predict_batch, Datastore, DistanceKind, InferenceMode, KnnConfig};
use ssqa_core::model::{Model, ModelConfig};
use ssqa_core::training::{batch_gradient, Example};
use ssqa_core::Exec;

const MODES: [Exec; 2] = [Exec::Sequential, Exec::Parallel];

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Waveform {
    Waveform::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), 16_000)
}

fn matrix(rng: &mut ChaCha8Rng, t: usize, d: usize) -> EmbeddingMatrix {
    EmbeddingMatrix::new(Array2::from_shape_simple_fn((t, d), || rng.random_range(-1.0..1.0)), 100.0).unwrap()
}

fn features(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let waves: Vec<Waveform> = (0..32).map(|_| noise(&mut rng, 16_000)).collect();
    let fe = Frontend::new(FrontendConfig::default()).unwrap();
    let mut g = c.benchmark_group("dsp_features_32x1s");
    for exec in MODES {
        g.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| exec.try_map(&waves, |w| fe.waveform_features(w)).unwrap())
        });
    }
    g.finish();
}

fn gradients(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = Model::init(&ModelConfig::default(), 80, &[], 0).unwrap();
    let batch: Vec<Example> = (0..16)
        .map(|i| Example {
            sample_id: format!("s{i}"),
            system_id: None,
            dataset: "x".into(),
            target: 3.0,
            mat: matrix(&mut rng, 200, 80),
        })
        .collect();
    let refs: Vec<&Example> = batch.iter().collect();
    let mut g = c.benchmark_group("head_batch_gradient_16x200");
    for exec in MODES {
        g.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| batch_gradient(&model, &refs, 0.25, false, exec).unwrap())
        });
    }
    g.finish();
}

fn knn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let records = (0..5000)
        .map(|i| {
            let v: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
            (v, rng.random_range(1.0..5.0), format!("d{}", i % 3))
        })
        .collect();
    let ds = Datastore::from_records(records, DistanceKind::Euclidean).unwrap();
    let queries: Vec<EmbeddingMatrix> = (0..64).map(|_| matrix(&mut rng, 50, 80)).collect();
    let model = Model::init(&ModelConfig::default(), 80, &[], 0).unwrap();
    let ids = vec![None; queries.len()];
    let cfg = KnnConfig::default();
    let mut g = c.benchmark_group("knn_64_queries_5000_records");
    for exec in MODES {
        g.bench_function(BenchmarkId::from_parameter(format!("{exec:?}")), |b| {
            b.iter(|| predict_batch(InferenceMode::Knn, &model, Some(&ds), &cfg, &queries, &ids, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = features, gradients, knn
}
criterion_main!(benches);
