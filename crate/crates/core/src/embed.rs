//! Vector sets: one channel of a dataset, chunked and embedded.
//!
//! Two embedders are provided. [`HashingEmbedder`] is a deterministic signed
//! feature hash (FNV-1a-64 of each case-folded token, XOR seed; bucket is the
//! hash mod `dim`, sign is bit 63). [`ExternalEmbedder`] posts batches to an
//! HTTP service speaking `{"texts":[..]}` → `{"vectors":[[..]]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::ConfigHash;
use crate::error::{Error, IoContext, Result};
use crate::exec;
use crate::schema::DatasetSnapshot;

pub const DEFAULT_DIM: usize = 256;

/// Case-folded whitespace tokens. Shared by the embedder and the lexical index.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChunkingStrategy {
    #[default]
    WholeDocument,
    FixedWindow {
        window_tokens: usize,
        #[serde(default)]
        overlap_tokens: usize,
    },
}

impl ChunkingStrategy {
    pub fn check(&self) -> Option<String> {
        match *self {
            ChunkingStrategy::WholeDocument => None,
            ChunkingStrategy::FixedWindow {
                window_tokens,
                overlap_tokens,
            } => {
                if window_tokens == 0 {
                    Some("window_tokens must be positive".into())
                } else if overlap_tokens >= window_tokens {
                    Some("overlap_tokens must be smaller than window_tokens".into())
                } else {
                    None
                }
            }
        }
    }
}

/// Splits `text` into chunks. Fixed windows advance by
/// `window - overlap` words; the last window may be short.
pub fn chunk(strategy: &ChunkingStrategy, text: &str) -> Vec<String> {
    match *strategy {
        ChunkingStrategy::WholeDocument => {
            if text.trim().is_empty() {
                vec![]
            } else {
                vec![text.to_owned()]
            }
        }
        ChunkingStrategy::FixedWindow {
            window_tokens,
            overlap_tokens,
        } => {
            let words: Vec<&str> = text.split_whitespace().collect();
            let window = window_tokens.max(1);
            let stride = window.saturating_sub(overlap_tokens).max(1);
            (0..words.len())
                .step_by(stride)
                .map(|start| words[start..(start + window).min(words.len())].join(" "))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    External {
        endpoint: String,
    },
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl EmbedderConfig {
    pub fn check(&self) -> Option<String> {
        match self {
            EmbedderConfig::Hashing { dim, .. } if *dim < 2 => Some("hashing dim must be at least 2".into()),
            EmbedderConfig::Hashing { .. } => None,
            EmbedderConfig::External { endpoint } => {
                let ok = ["http://", "https://"].iter().any(|scheme| {
                    endpoint
                        .strip_prefix(scheme)
                        .is_some_and(|rest| !rest.is_empty() && !rest.starts_with('/'))
                });
                (!ok).then(|| format!("endpoint {endpoint:?} is not an http(s) URL"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Cosine,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSetConfig {
    pub name: String,
    pub dataset: ConfigHash,
    pub channel: String,
    #[serde(default)]
    pub chunking: ChunkingStrategy,
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub metric: Metric,
}

pub trait Embedder: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    /// Texts per call when building a whole vector set.
    fn batch_size(&self) -> usize {
        256
    }

    /// Whether batches may be issued concurrently.
    fn concurrent(&self) -> bool {
        true
    }
}

pub fn embedder_for(cfg: &EmbedderConfig) -> Box<dyn Embedder> {
    match cfg {
        EmbedderConfig::Hashing { dim, seed } => Box::new(HashingEmbedder::new(*dim, *seed)),
        EmbedderConfig::External { endpoint } => Box::new(ExternalEmbedder::new(endpoint.clone())),
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn embed(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0f64; self.dim];
        for token in tokenize(text) {
            let h = fnv1a64(token.as_bytes()) ^ self.seed;
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return vec![0.0; self.dim];
        }
        acc.iter().map(|x| (x / norm) as f32).collect()
    }
}

impl Embedder for HashingEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

/// Client for an embedding service. Transport failures and 5xx responses are
/// retried with exponential backoff; anything else fails immediately.
pub struct ExternalEmbedder {
    endpoint: String,
    agent: ureq::Agent,
    max_attempts: u32,
    backoff: Duration,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

impl ExternalEmbedder {
    pub fn new(endpoint: String) -> Self {
        Self {
            endpoint,
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
            max_attempts: 3,
            backoff: Duration::from_millis(100),
        }
    }

    pub fn with_retries(mut self, max_attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn post(&self, texts: &[String]) -> Result<EmbedResponse> {
        let mut last = String::new();
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.agent.post(&self.endpoint).send_json(EmbedRequest { texts }) {
                Ok(resp) => {
                    return resp
                        .into_json::<EmbedResponse>()
                        .map_err(|e| Error::Embedder(format!("bad response body: {e}")));
                }
                Err(ureq::Error::Status(code, _)) if code < 500 => {
                    return Err(Error::Embedder(format!("{} returned status {code}", self.endpoint)));
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(Error::Embedder(format!(
            "{} failed after {} attempts: {last}",
            self.endpoint, self.max_attempts
        )))
    }
}

impl Embedder for ExternalEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Ok(vec![]);
        }
        let resp = self.post(texts)?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::Embedder(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                resp.vectors.len()
            )));
        }
        if let Some(first) = resp.vectors.first() {
            for v in &resp.vectors {
                if v.len() != first.len() {
                    return Err(Error::DimensionMismatch {
                        expected: first.len(),
                        got: v.len(),
                    });
                }
            }
        }
        Ok(resp.vectors)
    }

    fn batch_size(&self) -> usize {
        64
    }

    fn concurrent(&self) -> bool {
        false
    }
}

pub fn l2_normalize(v: &mut [f32]) {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRef {
    pub doc_id: String,
    pub chunk_index: u32,
}

/// Every embedded chunk of a vector set, row-major, ordered by document
/// ingestion order then chunk index.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSetArtifact {
    pub dim: usize,
    pub rows: Vec<RowRef>,
    pub data: Vec<f32>,
    /// Chunks embedded while producing this artifact (0 when loaded from disk).
    pub embed_calls: u64,
}

impl VectorSetArtifact {
    pub fn count(&self) -> usize {
        self.rows.len()
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }
}

pub fn build_vectorset(
    cfg: &VectorSetConfig,
    snapshot: &DatasetSnapshot,
    embedder: &dyn Embedder,
) -> Result<VectorSetArtifact> {
    let mut rows = Vec::new();
    let mut texts = Vec::new();
    for doc in &snapshot.documents {
        let Some(text) = doc.channels.get(&cfg.channel) else { continue };
        for (i, piece) in chunk(&cfg.chunking, text).into_iter().enumerate() {
            rows.push(RowRef {
                doc_id: doc.doc_id.clone(),
                chunk_index: i as u32,
            });
            texts.push(piece);
        }
    }

    let batches: Vec<&[String]> = texts.chunks(embedder.batch_size().max(1)).collect();
    let embedded: Vec<Result<Vec<Vec<f32>>>> = if embedder.concurrent() {
        exec::map(&batches, |b| embedder.embed_batch(b))
    } else {
        batches.iter().map(|b| embedder.embed_batch(b)).collect()
    };

    let expected_dim = match cfg.embedder {
        EmbedderConfig::Hashing { dim, .. } => Some(dim),
        EmbedderConfig::External { .. } => None,
    };
    let mut dim = expected_dim;
    let mut data = Vec::new();
    for batch in embedded {
        for mut v in batch? {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: v.len(),
                    })
                }
                Some(_) => {}
            }
            if cfg.metric == Metric::Cosine {
                l2_normalize(&mut v);
            }
            data.extend_from_slice(&v);
        }
    }
    Ok(VectorSetArtifact {
        dim: dim.unwrap_or(0),
        embed_calls: rows.len() as u64,
        rows,
        data,
    })
}

pub const VECTORS_FILE: &str = "vectors.bin";
pub const ROWS_FILE: &str = "rows.jsonl";
const MAGIC: &[u8; 8] = b"SGVECF32";

#[derive(Serialize, Deserialize)]
struct RowLine {
    row: usize,
    doc_id: String,
    chunk_index: u32,
}

/// Writes `vectors.bin` (magic, u32 dim, u64 count, then little-endian f32
/// rows) and the `rows.jsonl` sidecar into `dir`.
pub fn write_artifact(dir: &Path, art: &VectorSetArtifact) -> Result<()> {
    let path = dir.join(VECTORS_FILE);
    let mut w = BufWriter::new(File::create(&path).at(&path)?);
    w.write_all(MAGIC).at(&path)?;
    w.write_all(&(art.dim as u32).to_le_bytes()).at(&path)?;
    w.write_all(&(art.count() as u64).to_le_bytes()).at(&path)?;
    for x in &art.data {
        w.write_all(&x.to_le_bytes()).at(&path)?;
    }
    w.flush().at(&path)?;

    let path = dir.join(ROWS_FILE);
    let mut w = BufWriter::new(File::create(&path).at(&path)?);
    for (row, r) in art.rows.iter().enumerate() {
        let line = RowLine {
            row,
            doc_id: r.doc_id.clone(),
            chunk_index: r.chunk_index,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").at(&path)?;
    }
    w.flush().at(&path)
}

pub fn read_artifact(dir: &Path) -> Result<VectorSetArtifact> {
    let path = dir.join(VECTORS_FILE);
    let mut bytes = Vec::new();
    File::open(&path).at(&path)?.read_to_end(&mut bytes).at(&path)?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Corrupt(format!("{} has no vector header", path.display())));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() != dim * count * 4 {
        return Err(Error::Corrupt(format!("{} is truncated", path.display())));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();

    let path = dir.join(ROWS_FILE);
    let reader = BufReader::new(File::open(&path).at(&path)?);
    let mut rows = Vec::with_capacity(count);
    for (i, line) in reader.lines().enumerate() {
        let line: RowLine = serde_json::from_str(&line.at(&path)?)?;
        if line.row != i {
            return Err(Error::Corrupt(format!("{} row {i} out of order", path.display())));
        }
        rows.push(RowRef {
            doc_id: line.doc_id,
            chunk_index: line.chunk_index,
        });
    }
    if rows.len() != count {
        return Err(Error::Corrupt(format!("{} has {} rows, header says {count}", path.display(), rows.len())));
    }
    Ok(VectorSetArtifact {
        dim,
        rows,
        data,
        embed_calls: 0,
    })
}
