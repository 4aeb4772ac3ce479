#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use searchgym_core::app::ActiveApp;
use searchgym_core::bench::{generate_synthetic, SyntheticCorpus, SyntheticSpec};
use searchgym_core::config::{AppConfig, ConfigHash, ConfigNode};
use searchgym_core::embed::{ChunkingStrategy, Embedder, EmbedderConfig, Metric, VectorSetConfig};
use searchgym_core::fusion::FusionConfig;
use searchgym_core::router::RouterConfig;
use searchgym_core::state::{ActivationReport, CheckpointStore};
use searchgym_core::vindex::VectorIndexConfig;
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read_node(name: &str) -> ConfigNode {
    ConfigNode::from_json(&std::fs::read(fixtures().join(name)).unwrap()).unwrap()
}

pub struct FixtureDag {
    pub dataset: ConfigHash,
    pub abstracts: ConfigHash,
    pub titles: ConfigHash,
    pub app: ConfigHash,
}

/// Puts the fixture configs into `store` and ingests the fixture corpus.
pub fn load_fixture_dag(store: &CheckpointStore) -> FixtureDag {
    let ConfigNode::Dataset(ds) = read_node("dataset.json") else { panic!() };
    let (dataset, _, _) = store.ingest(&ds, &fixtures().join("corpus.jsonl")).unwrap();
    FixtureDag {
        dataset,
        abstracts: store.put_config(&read_node("vectorset.json")).unwrap(),
        titles: store.put_config(&read_node("vectorset_titles.json")).unwrap(),
        app: store.put_config(&read_node("app.json")).unwrap(),
    }
}

pub fn hashing_vectorset(name: &str, dataset: &ConfigHash, dim: usize, seed: u64) -> VectorSetConfig {
    VectorSetConfig {
        name: name.into(),
        dataset: dataset.clone(),
        channel: "body".into(),
        chunking: ChunkingStrategy::WholeDocument,
        embedder: EmbedderConfig::Hashing { dim, seed },
        metric: Metric::Cosine,
    }
}

pub fn app_config(name: &str, dataset: &ConfigHash, vectorsets: Vec<ConfigHash>, active: &str, index: VectorIndexConfig) -> AppConfig {
    AppConfig {
        name: name.into(),
        dataset: dataset.clone(),
        vectorsets,
        active_vectorset: active.into(),
        vector_index: index,
        lexical_channel: Some("body".into()),
        router: RouterConfig::default(),
        fusion: FusionConfig::default(),
    }
}

pub struct SyntheticApp {
    pub store: CheckpointStore,
    pub corpus: SyntheticCorpus,
    pub dataset: ConfigHash,
    pub app_hash: ConfigHash,
    pub app: Arc<ActiveApp>,
    pub report: ActivationReport,
}

/// Generates a corpus, ingests it into a store at `root`, and activates a
/// one-vectorset app over the body channel with the generator's embedder.
pub fn synthetic_app(root: &Path, spec: &SyntheticSpec, index: VectorIndexConfig) -> SyntheticApp {
    let corpus = generate_synthetic(spec).unwrap();
    let store = CheckpointStore::open(root).unwrap();
    let input = root.join("corpus.jsonl");
    std::fs::write(&input, corpus.corpus_jsonl()).unwrap();
    let (dataset, snapshot, _) = store.ingest(&corpus.dataset, &input).unwrap();
    assert_eq!(snapshot.count(), spec.n_docs);
    let vs = store
        .put_config(&ConfigNode::Vectorset(hashing_vectorset("body", &dataset, spec.dim, spec.embed_seed)))
        .unwrap();
    let app_hash = store
        .put_config(&ConfigNode::App(app_config("synthetic", &dataset, vec![vs], "body", index)))
        .unwrap();
    let (app, report) = store.activate(&app_hash).unwrap();
    SyntheticApp {
        store,
        corpus,
        dataset,
        app_hash,
        app,
        report,
    }
}

/// Rebuilds JSON text with object members in random order.
pub fn permuted_text(v: &Value, rng: &mut ChaCha8Rng) -> String {
    match v {
        Value::Object(m) => {
            let mut entries: Vec<(&String, &Value)> = m.iter().collect();
            entries.shuffle(rng);
            let body: Vec<String> = entries
                .into_iter()
                .map(|(k, v)| format!("{}: {}", Value::String(k.clone()), permuted_text(v, rng)))
                .collect();
            format!("{{ {} }}", body.join(" , "))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(|i| permuted_text(i, rng)).collect::<Vec<_>>().join(", ")),
        other => other.to_string(),
    }
}

/// Parses the query text "x,y,..." as the vector itself.
pub struct Literal;

impl Embedder for Literal {
    fn embed_batch(&self, texts: &[String]) -> searchgym_core::Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| t.split(',').map(|x| x.parse().unwrap()).collect()).collect())
    }
}
