use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use searchgym_core::bench::{generate_synthetic, run_bench, SyntheticCorpus, SyntheticSpec, DEFAULT_KS};
use searchgym_core::config::{AppConfig, ConfigNode};
use searchgym_core::docs::DocTable;
use searchgym_core::embed::{build_vectorset, ChunkingStrategy, EmbedderConfig, HashingEmbedder, Metric, VectorSetArtifact, VectorSetConfig};
use searchgym_core::exec;
use searchgym_core::router::{SearchMode, VectorEngine};
use searchgym_core::schema::{ingest, DatasetSnapshot};
use searchgym_core::state::CheckpointStore;
use searchgym_core::vindex::{kmeans, VectorIndex, VectorIndexConfig};

const N_DOCS: usize = 20_000;
const DIM: usize = 128;

struct Setup {
    corpus: SyntheticCorpus,
    snapshot: DatasetSnapshot,
    vs: VectorSetConfig,
    artifact: VectorSetArtifact,
}

fn setup() -> Setup {
    let spec = SyntheticSpec { dim: DIM, n_queries: 200, ..SyntheticSpec::new(N_DOCS, 1) };
    let corpus = generate_synthetic(&spec).unwrap();
    let snapshot = ingest(&corpus.dataset, corpus.corpus_jsonl().as_bytes()).unwrap();
    let vs = VectorSetConfig {
        name: "body".into(),
        dataset: searchgym_core::config::hash(&ConfigNode::Dataset(corpus.dataset.clone())).unwrap(),
        channel: "body".into(),
        chunking: ChunkingStrategy::WholeDocument,
        embedder: EmbedderConfig::Hashing { dim: DIM, seed: 0 },
        metric: Metric::Cosine,
    };
    let artifact = build_vectorset(&vs, &snapshot, &HashingEmbedder::new(DIM, 0)).unwrap();
    Setup { corpus, snapshot, vs, artifact }
}

const MODES: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn embedding(c: &mut Criterion, s: &Setup) {
    let mut g = c.benchmark_group("build_vectorset");
    g.sample_size(10);
    let embedder = HashingEmbedder::new(DIM, 0);
    for (mode, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| build_vectorset(&s.vs, &s.snapshot, &embedder).unwrap())
        });
    }
    g.finish();
}

fn clustering(c: &mut Criterion, s: &Setup) {
    let mut g = c.benchmark_group("kmeans");
    g.sample_size(10);
    let clusters = VectorIndexConfig::ivf().clusters_for(s.artifact.count());
    for (mode, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| kmeans(black_box(&s.artifact.data), DIM, clusters, 5, 0))
        });
    }
    g.finish();
}

fn knn_batch(c: &mut Criterion, s: &Setup) {
    let docs = Arc::new(DocTable::new(s.snapshot.documents.iter().map(|d| d.doc_id.clone())));
    let engine = VectorEngine {
        index: VectorIndex::build(&VectorIndexConfig::default(), s.artifact.clone(), docs).unwrap(),
        embedder: Box::new(HashingEmbedder::new(DIM, 0)),
        metric: Metric::Cosine,
    };
    let queries: Vec<Vec<f32>> = s.corpus.queries.iter().map(|q| engine.embed_query(&q.text).unwrap()).collect();
    let mut g = c.benchmark_group("flat_knn_batch");
    g.sample_size(10);
    for (mode, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| exec::map(&queries, |q| engine.index.knn(q, 10, None).unwrap()))
        });
    }
    g.finish();
}

fn bench_run(c: &mut Criterion, s: &Setup) {
    let dir = tempfile::tempdir().unwrap();
    let store = CheckpointStore::open(dir.path()).unwrap();
    let input = dir.path().join("corpus.jsonl");
    std::fs::write(&input, s.corpus.corpus_jsonl()).unwrap();
    let (dataset, _, _) = store.ingest(&s.corpus.dataset, &input).unwrap();
    let vs = store.put_config(&ConfigNode::Vectorset(s.vs.clone())).unwrap();
    let app = AppConfig {
        name: "bench".into(),
        dataset,
        vectorsets: vec![vs],
        active_vectorset: "body".into(),
        vector_index: VectorIndexConfig::ivf(),
        lexical_channel: None,
        router: Default::default(),
        fusion: Default::default(),
    };
    let hash = store.put_config(&ConfigNode::App(app)).unwrap();
    let (app, _) = store.activate(&hash).unwrap();
    let mut g = c.benchmark_group("run_bench");
    g.sample_size(10);
    for (mode, on) in MODES {
        exec::set_parallel(on);
        g.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| run_bench(&app, &s.corpus.queries, &DEFAULT_KS, SearchMode::Semantic))
        });
    }
    g.finish();
    exec::set_parallel(true);
}

fn all(c: &mut Criterion) {
    let s = setup();
    embedding(c, &s);
    clustering(c, &s);
    knn_batch(c, &s);
    bench_run(c, &s);
}

criterion_group!(benches, all);
criterion_main!(benches);
