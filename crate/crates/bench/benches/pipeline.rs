use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sharedrec_core::dataset::{build_interaction_matrix, generate_synthetic};
use sharedrec_core::graph::{normalize_adjacency, propagate};
use sharedrec_core::numeric::{irfft, rfft};
use sharedrec_core::{Hyper, Model, Sequence, SyntheticConfig};
use std::hint::black_box;

fn fft(c: &mut Criterion) {
    let mut g = c.benchmark_group("rfft_irfft");
    for n in [16usize, 50, 64] {
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| irfft(&rfft(black_box(x)).unwrap(), x.len()).unwrap())
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let (data, _) = generate_synthetic(&SyntheticConfig::default()).unwrap();
    let interactions = build_interaction_matrix(&data);
    let model = Model::new(Hyper::default(), interactions.clone()).unwrap();
    let adj = normalize_adjacency(&interactions);
    let p = model.params();

    c.bench_function("propagate_500x200_l3", |b| {
        b.iter(|| propagate(&p.account_emb, &p.item_emb, &adj, 3, false).unwrap())
    });
    let prop = model.propagate().unwrap();
    let s = &data.sequences[0];
    c.bench_function("forward_one_sequence", |b| {
        b.iter(|| {
            model
                .forward(&prop, s.account, black_box(&s.items))
                .unwrap()
        })
    });
    let batch: Vec<&Sequence> = data.sequences.iter().take(64).collect();
    c.bench_function("gradients_batch_64", |b| {
        b.iter(|| model.compute_gradients(&prop, &batch).unwrap())
    });
}

criterion_group!(benches, fft, pipeline);
criterion_main!(benches);
