use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use geostream_bench::fixture;
use geostream_core::embed::encode_context;
use geostream_core::kgstore::EntityId;
use geostream_core::policy::q_values;
use std::hint::black_box;

fn bench_encode_context(c: &mut Criterion) {
    let f = fixture(200, 50, 2000, 64, 20, 1);
    let busiest = (0..f.kg.poi_count()).max_by_key(|&p| f.kg.visit_count(p)).unwrap();
    let ctx = f.kg.entity_context(EntityId::poi(busiest));
    c.bench_function("encode_context busiest poi", |b| {
        b.iter(|| encode_context(black_box(&ctx), f.embedder.encoder(), f.embedder.table()).unwrap())
    });
}

fn bench_q_values(c: &mut Criterion) {
    let f = fixture(200, 50, 2000, 64, 20, 2);
    c.bench_function("q_values 80 candidates", |b| {
        b.iter(|| q_values(&f.qnet, black_box(&f.state), &f.actions).unwrap())
    });
}

fn bench_apply_visit(c: &mut Criterion) {
    let f = fixture(200, 50, 2000, 64, 20, 3);
    c.bench_function("apply_visit + incremental update", |b| {
        b.iter_batched(
            || (f.kg.clone(), f.embedder.clone()),
            |(mut kg, mut emb)| {
                let d = kg.apply_visit(f.next_user, 7, f.next_time).unwrap();
                emb.incremental_update(&kg, &d).unwrap();
            },
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(benches, bench_encode_context, bench_q_values, bench_apply_visit);
criterion_main!(benches);
