use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use metaselect_core::cf::{train_als, train_bpr, AlsConfig, BprConfig};
use metaselect_core::eval::ndcg_at_k;
use metaselect_core::ingest::{filter_min_interactions, split_per_user, to_implicit};
use metaselect_core::metalearn::{train_meta, MetaLearnerId, Params};
use metaselect_core::metaset::MetaDataset;
use metaselect_core::synthetic::{generate, SyntheticConfig};
use metaselect_core::MetaLabel;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;

fn split() -> metaselect_core::PerUserSplit {
    let cfg = SyntheticConfig { n_users: 500, n_items: 200, head_items: 20, n_clusters: 5, ..Default::default() };
    let data = generate(&cfg).unwrap();
    let implicit = filter_min_interactions(&to_implicit(&data.ratings, 3.5).unwrap(), 10).unwrap();
    split_per_user(&implicit, (0.7, 0.1, 0.2), 1).unwrap()
}

fn base_learners(c: &mut Criterion) {
    let s = split();
    let als = AlsConfig { factors: 32, iters: 5, ..AlsConfig::default() };
    c.bench_function("als_5_sweeps_500x200", |b| b.iter(|| train_als(&s.train, &als, 1).unwrap()));
    let bpr = BprConfig { factors: 32, epochs: 5, ..BprConfig::default() };
    c.bench_function("bpr_5_epochs_500x200", |b| b.iter(|| train_bpr(&s.train, &bpr, 1).unwrap()));
}

fn ndcg(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let list: Vec<u32> = (0..30).map(|_| rng.gen_range(0..1000)).collect();
    let rel: HashSet<u32> = (0..10).map(|_| rng.gen_range(0..1000)).collect();
    c.bench_function("ndcg_at_30", |b| b.iter(|| ndcg_at_k(&list, &rel, 30)));
}

fn meta_learners(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1000;
    let ds = MetaDataset {
        user_ids: (0..n).map(|i| i.to_string()).collect(),
        features: Array2::from_shape_simple_fn((n, 32), || rng.gen_range(-1.0..1.0)),
        labels: (0..n).map(|i| i % 5).collect(),
        classes: MetaLabel::ALL.to_vec(),
        provenance: "bench".into(),
    };
    let mut group = c.benchmark_group("meta_fit_1000x32");
    group.sample_size(10);
    for id in MetaLearnerId::ALL {
        group.bench_function(id.name(), |b| {
            b.iter_batched(|| ds.clone(), |d| train_meta(id, &d, &Params::new(), 1).unwrap(), BatchSize::LargeInput)
        });
    }
    group.finish();
}

criterion_group!(benches, base_learners, ndcg, meta_learners);
criterion_main!(benches);
