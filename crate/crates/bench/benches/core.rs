use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use linkforge_bench::{article, labels, metric_rows, sentences};
use linkforge_core::annotate::cohens_kappa;
use linkforge_core::corpus::segment_text;
use linkforge_core::evaluate::aggregate_dataset;
use linkforge_core::retrieval::Bm25Index;
use linkforge_core::text::tokenize;

fn bm25(c: &mut Criterion) {
    let mut g = c.benchmark_group("bm25");
    for n in [20, 200, 2000] {
        let corpus: Vec<Vec<String>> = sentences(1, n).iter().map(|s| tokenize(s)).collect();
        let query = tokenize(&sentences(2, 1)[0]);
        g.bench_with_input(BenchmarkId::new("index", n), &corpus, |b, corpus| {
            b.iter(|| Bm25Index::from_tokens(black_box(corpus), 1.2, 0.75))
        });
        let index = Bm25Index::from_tokens(&corpus, 1.2, 0.75);
        g.bench_with_input(BenchmarkId::new("score", n), &query, |b, query| {
            b.iter(|| index.score_tokens(black_box(query)))
        });
    }
    g.finish();
}

fn aggregation(c: &mut Criterion) {
    let cutoffs = [1, 3, 5, 7, 10, 20];
    let mut g = c.benchmark_group("aggregate");
    for sources in [100, 1000, 10_000] {
        let rows = metric_rows(3, sources, 40, &cutoffs);
        g.bench_with_input(BenchmarkId::from_parameter(sources), &rows, |b, rows| {
            b.iter(|| aggregate_dataset(black_box(rows), &cutoffs).expect("non-empty"))
        });
    }
    g.finish();
}

fn kappa(c: &mut Criterion) {
    let (a, b) = labels(4, 10_000, 0.85);
    c.bench_function("kappa/10000", |bench| bench.iter(|| cohens_kappa(black_box(&a), black_box(&b))));
}

fn segmentation(c: &mut Criterion) {
    let text = article(5, 500);
    c.bench_function("segment/500", |b| b.iter(|| segment_text(black_box(&text))));
}

criterion_group!(benches, bm25, aggregation, kappa, segmentation);
criterion_main!(benches);
