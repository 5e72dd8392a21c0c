//! Sequential vs rayon execution of a full pipeline run (four sub-queries
//! retrieved and four sections generated) over a synthetic corpus.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stagewise_core::domain::{DocumentChunk, UserQuery};
use stagewise_core::retrieval::build_index;
use stagewise_core::{ExecMode, Index, Pipeline, PipelineConfig};

const WORDS: &[&str] = &[
    "sigir",
    "2025",
    "padua",
    "padova",
    "venue",
    "conference",
    "hotel",
    "hotels",
    "flight",
    "flights",
    "airport",
    "train",
    "registration",
    "cost",
    "sightseeing",
    "attractions",
    "museum",
    "near",
    "walk",
    "july",
    "held",
    "city",
    "options",
    "recommended",
    "best",
    "trip",
    "plan",
    "attend",
    "river",
    "dinner",
    "keynote",
    "poster",
];

fn corpus(n: usize) -> Vec<DocumentChunk> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(20..60);
            let text: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            DocumentChunk {
                chunk_id: format!("c{i:06}"),
                doc_id: format!("d{}", i / 4),
                text: text.join(" "),
                source_domain: "bench.example.com".into(),
                published_date: None,
                url: format!("https://bench.example.com/{i}"),
            }
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let index: Arc<Index> = Arc::new(build_index(corpus(20_000)).unwrap());
    let query =
        UserQuery::new("q", "u", "Plan a trip to attend SIGIR 2025", "2025-03-10T09:00:00.000Z".parse().unwrap());
    let mut group = c.benchmark_group("pipeline_run");
    group.sample_size(20);
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        let pipeline = Pipeline::new(index.clone(), PipelineConfig::default()).with_exec_mode(mode);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{mode:?}")), &pipeline, |b, p| {
            b.iter(|| p.run(&query).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
