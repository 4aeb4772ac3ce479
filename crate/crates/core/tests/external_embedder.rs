mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::{app_config, load_fixture_dag};
use searchgym_core::config::{ConfigNode, NodeKind};
use searchgym_core::embed::{ChunkingStrategy, Embedder, EmbedderConfig, ExternalEmbedder, Metric, VectorSetConfig};
use searchgym_core::router::SearchRequest;
use searchgym_core::state::{CheckpointStore, Outcome};
use searchgym_core::vindex::VectorIndexConfig;
use searchgym_core::Error;
use serde_json::{json, Value};

type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP server answering every POST with `handler(request_no, body)`.
fn stub(handler: Arc<Handler>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    let count = Arc::new(AtomicUsize::new(0));
    let seen = count.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let n = seen.fetch_add(1, Ordering::SeqCst);
            let (status, out) = handler(n, &serde_json::from_slice(&body).unwrap_or(Value::Null));
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                out.len()
            );
        }
    });
    (url, count)
}

fn texts(body: &Value) -> Vec<String> {
    body["texts"].as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_owned()).collect()
}

/// Deterministic 4-dim features of a text.
fn features(t: &str) -> Vec<f32> {
    let words = t.split_whitespace().count() as f32;
    let vowels = t.chars().filter(|c| "aeiou".contains(*c)).count() as f32;
    vec![1.0, words, vowels, t.len() as f32]
}

#[test]
fn vectors_come_back_in_order() {
    let (url, _) = stub(Arc::new(|_, body| {
        let v: Vec<Vec<f32>> = texts(body).iter().map(|t| features(t)).collect();
        (200, json!({ "vectors": v }).to_string())
    }));
    let e = ExternalEmbedder::new(url);
    let out = e.embed_batch(&["a b".into(), "ccc".into()]).unwrap();
    assert_eq!(out, vec![features("a b"), features("ccc")]);
    assert!(e.embed_batch(&[]).unwrap().is_empty());
}

#[test]
fn ragged_dimensions_are_an_error() {
    let (url, _) = stub(Arc::new(|_, _| (200, r#"{"vectors":[[1,2,3],[1,2,3,4]]}"#.into())));
    let err = ExternalEmbedder::new(url).embed_batch(&["x".into(), "y".into()]).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 3, got: 4 }), "{err}");
}

#[test]
fn wrong_count_is_an_error() {
    let (url, _) = stub(Arc::new(|_, _| (200, r#"{"vectors":[[1,2]]}"#.into())));
    assert!(matches!(ExternalEmbedder::new(url).embed_batch(&["x".into(), "y".into()]), Err(Error::Embedder(_))));
}

#[test]
fn server_errors_are_retried_client_errors_are_not() {
    let (url, calls) = stub(Arc::new(|n, _| match n {
        0 | 1 => (503, "{}".into()),
        _ => (200, r#"{"vectors":[[0.5,0.5]]}"#.into()),
    }));
    let e = ExternalEmbedder::new(url).with_retries(3, Duration::from_millis(5));
    assert_eq!(e.embed_batch(&["x".into()]).unwrap(), vec![vec![0.5, 0.5]]);
    assert_eq!(calls.load(Ordering::SeqCst), 3);

    let (url, calls) = stub(Arc::new(|_, _| (400, "{}".into())));
    let e = ExternalEmbedder::new(url).with_retries(3, Duration::from_millis(5));
    assert!(matches!(e.embed_batch(&["x".into()]), Err(Error::Embedder(_))));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[test]
fn app_over_an_external_vectorset() {
    let (url, calls) = stub(Arc::new(|_, body| {
        let v: Vec<Vec<f32>> = texts(body).iter().map(|t| features(t)).collect();
        (200, json!({ "vectors": v }).to_string())
    }));
    let dir = tempfile::tempdir().unwrap();
    let store = CheckpointStore::open(dir.path()).unwrap();
    let dag = load_fixture_dag(&store);
    let vs = VectorSetConfig {
        name: "remote".into(),
        dataset: dag.dataset.clone(),
        channel: "abstract".into(),
        chunking: ChunkingStrategy::WholeDocument,
        embedder: EmbedderConfig::External { endpoint: url },
        metric: Metric::Cosine,
    };
    let vh = store.put_config(&ConfigNode::Vectorset(vs)).unwrap();
    let mut app = app_config("remote-app", &dag.dataset, vec![vh], "remote", VectorIndexConfig::default());
    app.lexical_channel = None;
    let ah = store.put_config(&ConfigNode::App(app)).unwrap();
    let (active, report) = store.activate(&ah).unwrap();
    assert_eq!(report.outcome(NodeKind::Vectorset), Some(Outcome::Built));
    // 11 of the 12 fixture documents have an abstract.
    assert_eq!(report.embed_calls, 11);
    let before = calls.load(Ordering::SeqCst);
    let resp = active.search(&SearchRequest::semantic("graph search", 3)).unwrap();
    assert_eq!(resp.hits.len(), 3);
    assert_eq!(calls.load(Ordering::SeqCst), before + 1);
}
