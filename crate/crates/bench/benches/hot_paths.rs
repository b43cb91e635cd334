use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use momalign_bench::{sequences, similarity};
use momalign_core::numerics::{SeededRng, Tape};
use momalign_core::objective::{dcl_loss, kmeans, paired_diversity, DiversityEstimator};
use momalign_core::pipeline::recall_at_k;
use momalign_core::representation::{aggregate_batch, FeatureAggregator, FeatureSequence};

fn dcl(c: &mut Criterion) {
    let mut group = c.benchmark_group("dcl_loss_fwd_bwd");
    for n in [32, 128] {
        let s = similarity(n, n, 64, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| {
                let (fwd, bwd) = paired_diversity(s, Some(DiversityEstimator::Std), 0.1).unwrap();
                let mut tape = Tape::new();
                let sv = tape.param(s.clone());
                let loss = dcl_loss(&mut tape, sv, &fwd, &bwd, 0.1, 0.3).unwrap();
                black_box(tape.backward(loss).unwrap());
            })
        });
    }
    group.finish();
}

fn aggregation(c: &mut Criterion) {
    let agg = FeatureAggregator::new(32, 64, 64, 64, &mut SeededRng::new(2)).unwrap();
    let seqs = sequences(32, 6, 32, 3);
    let refs: Vec<&FeatureSequence> = seqs.iter().collect();
    c.bench_function("aggregate_batch_32x6", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let vars = agg.bind(&mut tape, true);
            let out = aggregate_batch(&mut tape, &vars, &refs).unwrap();
            let loss = tape.sum(out).unwrap();
            black_box(tape.backward(loss).unwrap());
        })
    });
}

fn recall(c: &mut Criterion) {
    let mut group = c.benchmark_group("recall_at_k");
    for n in [100, 1000] {
        let s = similarity(n, n, 64, 4);
        let ids: Vec<usize> = (0..n).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &s, |b, s| {
            b.iter(|| black_box(recall_at_k(s, &ids).unwrap()))
        });
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let data = SeededRng::new(5).normal_matrix(1000, 64, 1.0);
    c.bench_function("kmeans_1000x64_k16", |b| {
        b.iter(|| black_box(kmeans(&data, 16, 50, 7).unwrap()))
    });
}

criterion_group!(benches, dcl, aggregation, recall, clustering);
criterion_main!(benches);
