//! Three-layer checkpoint store and activation.
//!
//! Layout under the store root:
//!
//! ```text
//! configs/<hash>.json          canonical config bytes
//! configs/latest/<kind>-<hex>  newest hash put under a name
//! datasets/<hash>/             MANIFEST, documents.jsonl, rejects.jsonl
//! vectorsets/<hash>/           MANIFEST, vectors.bin, rows.jsonl
//! apps/<hash>/                 MANIFEST, doc_ids.json, structured.json,
//!                              lexical.json, vindex/<vectorset hash>/
//! active/<app hash>            vector set name selected by the last swap
//! locks/                       one lock file per hash being built
//! tmp/                         checkpoints under construction
//! ```
//!
//! A checkpoint directory becomes visible by renaming a finished temp
//! directory into place. MANIFEST is written last, and a checkpoint whose
//! MANIFEST is missing or unreadable is treated as absent and rebuilt.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::app::{ActiveApp, VectorSnapshot};
use crate::config::{self, AppConfig, ConfigHash, ConfigNode, ConfigResolver, NodeKind};
use crate::docs::DocTable;
use crate::embed::{build_vectorset, embedder_for, read_artifact, write_artifact, VectorSetArtifact, VectorSetConfig};
use crate::error::{Error, IoContext, Result, Violation};
use crate::inverted::{LexicalIndex, StructuredIndex};
use crate::router::VectorEngine;
use crate::schema::{ingest, DatasetConfig, DatasetSnapshot, DatasetStats, Document};
use crate::vindex::{IndexKind, IvfLayout, VectorIndex, VectorIndexConfig};

pub const STORE_ENV: &str = "SEARCHGYM_STORE";
pub const DEFAULT_STORE: &str = "./searchgym-store";
pub const MANIFEST: &str = "MANIFEST";

const IVF_MAGIC: &[u8; 8] = b"SGIVF001";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: NodeKind,
    pub config_hash: ConfigHash,
    pub children: Vec<ConfigHash>,
    pub stats: Value,
    pub created_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Reused,
    Built,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: NodeKind,
    pub hash: ConfigHash,
    pub outcome: Outcome,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationReport {
    pub app: ConfigHash,
    pub vectorset: String,
    pub layers: Vec<LayerReport>,
    pub embed_calls: u64,
}

impl ActivationReport {
    pub fn outcome(&self, layer: NodeKind) -> Option<Outcome> {
        self.layers.iter().find(|l| l.layer == layer).map(|l| l.outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub hash: ConfigHash,
    pub kind: NodeKind,
    pub name: String,
}

fn layer_dir(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::Dataset => "datasets",
        NodeKind::Vectorset => "vectorsets",
        NodeKind::App => "apps",
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    serde_json::to_writer(&mut w, value)?;
    w.flush().at(path)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path).at(path)?);
    serde_json::from_reader(r).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").at(path)?;
    }
    w.flush().at(path)
}

fn write_ivf(path: &Path, dim: usize, layout: &IvfLayout) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    w.write_all(IVF_MAGIC).at(path)?;
    w.write_all(&(dim as u32).to_le_bytes()).at(path)?;
    w.write_all(&(layout.lists.len() as u32).to_le_bytes()).at(path)?;
    for x in &layout.centroids {
        w.write_all(&x.to_le_bytes()).at(path)?;
    }
    for list in &layout.lists {
        w.write_all(&(list.len() as u32).to_le_bytes()).at(path)?;
        for r in list {
            w.write_all(&r.to_le_bytes()).at(path)?;
        }
    }
    w.flush().at(path)
}

fn read_ivf(path: &Path, dim: usize) -> Result<IvfLayout> {
    let mut bytes = Vec::new();
    File::open(path).at(path)?.read_to_end(&mut bytes).at(path)?;
    let corrupt = || Error::Corrupt(format!("{} is malformed", path.display()));
    let mut words = bytes.get(8..).ok_or_else(corrupt)?.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()));
    if &bytes[..8] != IVF_MAGIC || words.next() != Some(dim as u32) {
        return Err(corrupt());
    }
    let clusters = words.next().ok_or_else(corrupt)? as usize;
    let centroids: Vec<f32> = words.by_ref().take(clusters * dim).map(f32::from_bits).collect();
    if centroids.len() != clusters * dim {
        return Err(corrupt());
    }
    let mut lists = Vec::with_capacity(clusters);
    for _ in 0..clusters {
        let len = words.next().ok_or_else(corrupt)? as usize;
        let list: Vec<u32> = words.by_ref().take(len).collect();
        if list.len() != len {
            return Err(corrupt());
        }
        lists.push(list);
    }
    Ok(IvfLayout { centroids, lists })
}

/// Held while building one checkpoint; released on drop.
struct BuildLock(File);

impl Drop for BuildLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

/// The on-disk store of configs and checkpoints.
#[derive(Debug, Clone)]
pub struct CheckpointStore {
    root: PathBuf,
}

impl CheckpointStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["configs/latest", "datasets", "vectorsets", "apps", "active", "locks", "tmp"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).at(&p)?;
        }
        Ok(Self { root })
    }

    /// Opens the store named by `SEARCHGYM_STORE`, or the default location.
    pub fn from_env() -> Result<Self> {
        Self::open(std::env::var_os(STORE_ENV).map_or_else(|| PathBuf::from(DEFAULT_STORE), PathBuf::from))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoint_dir(&self, kind: NodeKind, hash: &ConfigHash) -> PathBuf {
        self.root.join(layer_dir(kind)).join(hash.as_str())
    }

    fn temp_dir(&self, label: &str) -> Result<PathBuf> {
        let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_nanos());
        let p = self.root.join("tmp").join(format!("{label}.{}.{nanos}", std::process::id()));
        fs::create_dir_all(&p).at(&p)?;
        Ok(p)
    }

    fn lock(&self, key: &str) -> Result<BuildLock> {
        let p = self.root.join("locks").join(format!("{key}.lock"));
        let f = File::options().create(true).truncate(false).write(true).open(&p).at(&p)?;
        f.lock().at(&p)?;
        Ok(BuildLock(f))
    }

    /// Fills a temp directory with `fill`, then renames it to `dest`,
    /// replacing whatever incomplete directory was there.
    fn publish(&self, label: &str, dest: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let tmp = self.temp_dir(label)?;
        let filled = fill(&tmp).and_then(|()| {
            if dest.exists() {
                fs::remove_dir_all(dest).at(dest)?;
            }
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent).at(parent)?;
            }
            fs::rename(&tmp, dest).at(dest)
        });
        if filled.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        filled
    }

    fn commit(
        &self,
        kind: NodeKind,
        hash: &ConfigHash,
        children: Vec<ConfigHash>,
        stats: Value,
        fill: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<()> {
        let manifest = Manifest {
            kind,
            config_hash: hash.clone(),
            children,
            stats,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        self.publish(hash.as_str(), &self.checkpoint_dir(kind, hash), |dir| {
            fill(dir)?;
            write_json(&dir.join(MANIFEST), &manifest)
        })
    }

    /// The checkpoint's MANIFEST if the checkpoint is complete.
    pub fn manifest(&self, kind: NodeKind, hash: &ConfigHash) -> Option<Manifest> {
        let m: Manifest = read_json(&self.checkpoint_dir(kind, hash).join(MANIFEST)).ok()?;
        (m.kind == kind && &m.config_hash == hash).then_some(m)
    }

    /// Every complete checkpoint in the store.
    pub fn checkpoints(&self) -> Result<Vec<Manifest>> {
        let mut out = Vec::new();
        for kind in [NodeKind::Dataset, NodeKind::Vectorset, NodeKind::App] {
            for hash in self.hashes_in(&self.root.join(layer_dir(kind)))? {
                out.extend(self.manifest(kind, &hash));
            }
        }
        Ok(out)
    }

    fn hashes_in(&self, dir: &Path) -> Result<Vec<ConfigHash>> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir).at(dir)? {
            let entry = entry.at(dir)?;
            if let Some(h) = entry.file_name().to_str().and_then(|n| ConfigHash::parse(n).ok()) {
                out.push(h);
            }
        }
        out.sort();
        Ok(out)
    }

    // ---- configs ----

    /// Validates `node` against the store and records it under its hash.
    pub fn put_config(&self, node: &ConfigNode) -> Result<ConfigHash> {
        let violations = config::validate_node(node, self);
        if !violations.is_empty() {
            return Err(Error::Violations(violations));
        }
        let bytes = config::canonicalize(node)?;
        let hash = ConfigHash::of_bytes(&bytes);
        let path = self.root.join("configs").join(format!("{hash}.json"));
        if !path.exists() {
            let tmp = self.temp_dir(hash.as_str())?.join("config.json");
            fs::write(&tmp, &bytes).at(&tmp)?;
            fs::rename(&tmp, &path).at(&path)?;
            let _ = fs::remove_dir(tmp.parent().unwrap());
        }
        let latest = self.latest_path(node.kind(), node.name());
        fs::write(&latest, hash.as_str()).at(&latest)?;
        Ok(hash)
    }

    fn latest_path(&self, kind: NodeKind, name: &str) -> PathBuf {
        self.root.join("configs/latest").join(format!("{}-{}", kind.as_str(), hex::encode(name)))
    }

    /// The most recently put config of `kind` named `name`.
    pub fn latest(&self, kind: NodeKind, name: &str) -> Option<ConfigHash> {
        ConfigHash::parse(fs::read_to_string(self.latest_path(kind, name)).ok()?.trim()).ok()
    }

    pub fn get_config(&self, hash: &ConfigHash) -> Result<ConfigNode> {
        let path = self.root.join("configs").join(format!("{hash}.json"));
        let bytes = fs::read(&path).map_err(|_| Error::NotFound(format!("config {hash}")))?;
        ConfigNode::from_json(&bytes)
    }

    pub fn list_configs(&self) -> Result<Vec<ConfigEntry>> {
        let dir = self.root.join("configs");
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).at(&dir)? {
            let entry = entry.at(&dir)?;
            let name = entry.file_name();
            let Some(hash) = name.to_str().and_then(|n| n.strip_suffix(".json")).and_then(|h| ConfigHash::parse(h).ok()) else {
                continue;
            };
            let node = self.get_config(&hash)?;
            out.push(ConfigEntry {
                kind: node.kind(),
                name: node.name().to_owned(),
                hash,
            });
        }
        out.sort_by(|a, b| (a.kind, &a.name, &a.hash).cmp(&(b.kind, &b.name, &b.hash)));
        Ok(out)
    }

    fn dataset_config(&self, hash: &ConfigHash) -> Result<DatasetConfig> {
        match self.get_config(hash)? {
            ConfigNode::Dataset(d) => Ok(d),
            _ => Err(Error::Violations(vec![Violation::WrongRefKind(hash.to_string())])),
        }
    }

    fn vectorset_config(&self, hash: &ConfigHash) -> Result<VectorSetConfig> {
        match self.get_config(hash)? {
            ConfigNode::Vectorset(v) => Ok(v),
            _ => Err(Error::Violations(vec![Violation::WrongRefKind(hash.to_string())])),
        }
    }

    // ---- dataset layer ----

    /// Ingests `input` as the dataset checkpoint for `cfg`, or reuses the
    /// existing checkpoint.
    pub fn ingest(&self, cfg: &DatasetConfig, input: &Path) -> Result<(ConfigHash, DatasetSnapshot, LayerReport)> {
        let hash = self.put_config(&ConfigNode::Dataset(cfg.clone()))?;
        let (snapshot, report) = self.ensure_dataset(&hash, cfg, Some(input))?;
        Ok((hash, snapshot, report))
    }

    fn ensure_dataset(&self, hash: &ConfigHash, cfg: &DatasetConfig, input: Option<&Path>) -> Result<(DatasetSnapshot, LayerReport)> {
        let start = Instant::now();
        let _lock = self.lock(hash.as_str())?;
        let (snapshot, outcome) = match self.manifest(NodeKind::Dataset, hash) {
            Some(_) => (self.load_dataset(hash, cfg)?, Outcome::Reused),
            None => (self.build_dataset(hash, cfg, input)?, Outcome::Built),
        };
        let report = LayerReport {
            layer: NodeKind::Dataset,
            hash: hash.clone(),
            outcome,
            wall_ms: ms_since(start),
        };
        Ok((snapshot, report))
    }

    /// Checks the dataset checkpoint without loading documents, building it if
    /// absent.
    fn touch_dataset(&self, hash: &ConfigHash, cfg: &DatasetConfig) -> Result<(Option<DatasetSnapshot>, LayerReport)> {
        let start = Instant::now();
        if self.manifest(NodeKind::Dataset, hash).is_some() {
            let report = LayerReport {
                layer: NodeKind::Dataset,
                hash: hash.clone(),
                outcome: Outcome::Reused,
                wall_ms: ms_since(start),
            };
            return Ok((None, report));
        }
        let (snapshot, report) = self.ensure_dataset(hash, cfg, None)?;
        Ok((Some(snapshot), report))
    }

    fn build_dataset(&self, hash: &ConfigHash, cfg: &DatasetConfig, input: Option<&Path>) -> Result<DatasetSnapshot> {
        let path = match (input, &cfg.source) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(src)) => PathBuf::from(src),
            (None, None) => {
                return Err(Error::MissingInput(format!(
                    "dataset {:?} has no checkpoint and no source; ingest it first",
                    cfg.name
                )))
            }
        };
        let file = File::open(&path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        let snapshot = ingest(cfg, BufReader::new(file))?;
        let stats = json!({
            "count": snapshot.count(),
            "rejected": snapshot.rejects.len(),
            "fields": snapshot.stats.fields,
        });
        self.commit(NodeKind::Dataset, hash, vec![], stats, |dir| {
            write_jsonl(&dir.join("documents.jsonl"), &snapshot.documents)?;
            write_jsonl(&dir.join("rejects.jsonl"), &snapshot.rejects)
        })?;
        Ok(snapshot)
    }

    /// Loads accepted documents from a dataset checkpoint. Rejects stay on
    /// disk in `rejects.jsonl`.
    pub fn load_dataset(&self, hash: &ConfigHash, cfg: &DatasetConfig) -> Result<DatasetSnapshot> {
        let path = self.checkpoint_dir(NodeKind::Dataset, hash).join("documents.jsonl");
        let reader = BufReader::new(File::open(&path).at(&path)?);
        let mut documents = Vec::new();
        for line in reader.lines() {
            let doc: Document = serde_json::from_str(&line.at(&path)?).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?;
            documents.push(doc);
        }
        Ok(DatasetSnapshot {
            stats: DatasetStats::compute(cfg, &documents),
            documents,
            rejects: Vec::new(),
        })
    }

    // ---- vectorset layer ----

    fn ensure_vectorset(
        &self,
        hash: &ConfigHash,
        cfg: &VectorSetConfig,
        dataset: &dyn Fn() -> Result<Arc<DatasetSnapshot>>,
    ) -> Result<(VectorSetArtifact, LayerReport)> {
        let start = Instant::now();
        let _lock = self.lock(hash.as_str())?;
        let dir = self.checkpoint_dir(NodeKind::Vectorset, hash);
        let reused = match self.manifest(NodeKind::Vectorset, hash) {
            Some(_) => read_artifact(&dir).ok(),
            None => None,
        };
        let (artifact, outcome) = match reused {
            Some(a) => (a, Outcome::Reused),
            None => {
                let snapshot = dataset()?;
                let embedder = embedder_for(&cfg.embedder);
                let artifact = build_vectorset(cfg, &snapshot, embedder.as_ref())?;
                let stats = json!({
                    "count": artifact.count(),
                    "dim": artifact.dim,
                    "embed_calls": artifact.embed_calls,
                });
                self.commit(NodeKind::Vectorset, hash, vec![cfg.dataset.clone()], stats, |d| write_artifact(d, &artifact))?;
                (artifact, Outcome::Built)
            }
        };
        let report = LayerReport {
            layer: NodeKind::Vectorset,
            hash: hash.clone(),
            outcome,
            wall_ms: ms_since(start),
        };
        Ok((artifact, report))
    }

    // ---- app layer ----

    fn load_app_base(&self, hash: &ConfigHash) -> Result<(Arc<DocTable>, StructuredIndex, Option<LexicalIndex>)> {
        let dir = self.checkpoint_dir(NodeKind::App, hash);
        let ids: Vec<String> = read_json(&dir.join("doc_ids.json"))?;
        let docs = Arc::new(DocTable::new(ids));
        let structured: StructuredIndex = read_json(&dir.join("structured.json"))?;
        let lexical_path = dir.join("lexical.json");
        let lexical = if lexical_path.exists() {
            Some(read_json::<LexicalIndex>(&lexical_path)?.attach(docs.clone()))
        } else {
            None
        };
        Ok((docs, structured, lexical))
    }

    fn ensure_app_base(
        &self,
        hash: &ConfigHash,
        app: &AppConfig,
        dataset_cfg: &DatasetConfig,
        dataset: &dyn Fn() -> Result<Arc<DatasetSnapshot>>,
    ) -> Result<(Arc<DocTable>, StructuredIndex, Option<LexicalIndex>, Outcome)> {
        let _lock = self.lock(hash.as_str())?;
        if self.manifest(NodeKind::App, hash).is_some() {
            if let Ok((d, s, l)) = self.load_app_base(hash) {
                return Ok((d, s, l, Outcome::Reused));
            }
        }
        let snapshot = dataset()?;
        let docs = Arc::new(DocTable::new(snapshot.documents.iter().map(|d| d.doc_id.clone())));
        let structured = StructuredIndex::build(dataset_cfg, &snapshot, &docs);
        let lexical = app
            .lexical_channel
            .as_deref()
            .map(|ch| LexicalIndex::build(&snapshot, ch, docs.clone()));
        let mut children = vec![app.dataset.clone()];
        children.extend(app.vectorsets.iter().cloned());
        let stats = json!({
            "docs": docs.len(),
            "lexical_docs": lexical.as_ref().map(LexicalIndex::indexed_docs),
        });
        self.commit(NodeKind::App, hash, children, stats, |dir| {
            write_json(&dir.join("doc_ids.json"), &docs.ids())?;
            write_json(&dir.join("structured.json"), &structured)?;
            if let Some(l) = &lexical {
                write_json(&dir.join("lexical.json"), l)?;
            }
            fs::create_dir_all(dir.join("vindex")).at(dir)
        })?;
        Ok((docs, structured, lexical, Outcome::Built))
    }

    /// Loads or builds the vector index for one vector set of an app. Stored
    /// under the app checkpoint since it depends on the app's index config.
    fn ensure_vindex(
        &self,
        app_hash: &ConfigHash,
        vs_hash: &ConfigHash,
        cfg: &VectorIndexConfig,
        artifact: VectorSetArtifact,
        docs: Arc<DocTable>,
    ) -> Result<(VectorIndex, Outcome)> {
        let _lock = self.lock(&format!("{app_hash}-{vs_hash}"))?;
        let dir = self.checkpoint_dir(NodeKind::App, app_hash).join("vindex").join(vs_hash.as_str());
        let marker = dir.join("index.json");
        if marker.exists() {
            let loaded = match cfg.kind {
                IndexKind::Flat => VectorIndex::build(cfg, artifact.clone(), docs.clone()),
                IndexKind::Ivf => read_ivf(&dir.join("ivf.bin"), artifact.dim)
                    .and_then(|layout| VectorIndex::with_layout(cfg, artifact.clone(), docs.clone(), layout)),
            };
            if let Ok(index) = loaded {
                return Ok((index, Outcome::Reused));
            }
        }
        let index = VectorIndex::build(cfg, artifact, docs)?;
        self.publish(&format!("{app_hash}-{vs_hash}"), &dir, |tmp| {
            if let Some(layout) = index.ivf_layout() {
                write_ivf(&tmp.join("ivf.bin"), index.dim(), layout)?;
            }
            write_json(
                &tmp.join("index.json"),
                &json!({"kind": index.kind(), "rows": index.row_count(), "clusters": index.ivf_layout().map(|l| l.lists.len())}),
            )
        })?;
        Ok((index, Outcome::Built))
    }

    fn active_path(&self, app: &ConfigHash) -> PathBuf {
        self.root.join("active").join(app.as_str())
    }

    fn app_config(&self, hash: &ConfigHash) -> Result<AppConfig> {
        match self.get_config(hash)? {
            ConfigNode::App(a) => Ok(a),
            _ => Err(Error::Violations(vec![Violation::WrongRefKind(hash.to_string())])),
        }
    }

    /// Resolves the app's config DAG, reusing or building each layer, and
    /// returns a live handle.
    pub fn activate(&self, app_hash: &ConfigHash) -> Result<(Arc<ActiveApp>, ActivationReport)> {
        let app = self.app_config(app_hash)?;
        let violations = config::validate_composition(&app, self);
        if !violations.is_empty() {
            return Err(Error::Violations(violations));
        }
        let dataset_cfg = self.dataset_config(&app.dataset)?;
        let mut declared = BTreeMap::new();
        let mut vs_configs = BTreeMap::new();
        for h in &app.vectorsets {
            let vs = self.vectorset_config(h)?;
            declared.insert(vs.name.clone(), h.clone());
            vs_configs.insert(vs.name.clone(), vs);
        }
        let active_name = fs::read_to_string(self.active_path(app_hash))
            .ok()
            .map(|s| s.trim().to_owned())
            .filter(|n| declared.contains_key(n))
            .unwrap_or_else(|| app.active_vectorset.clone());

        let (loaded, dataset_report) = self.touch_dataset(&app.dataset, &dataset_cfg)?;
        let cache: OnceCell<Arc<DatasetSnapshot>> = OnceCell::new();
        if let Some(s) = loaded {
            let _ = cache.set(Arc::new(s));
        }
        let dataset = || -> Result<Arc<DatasetSnapshot>> {
            if let Some(s) = cache.get() {
                return Ok(s.clone());
            }
            let s = Arc::new(self.load_dataset(&app.dataset, &dataset_cfg)?);
            Ok(cache.get_or_init(|| s).clone())
        };

        let vs_hash = &declared[&active_name];
        let vs_cfg = &vs_configs[&active_name];
        let (artifact, vs_report) = self.ensure_vectorset(vs_hash, vs_cfg, &dataset)?;
        let embed_calls = artifact.embed_calls;

        let start = Instant::now();
        let (docs, structured, lexical, base) = self.ensure_app_base(app_hash, &app, &dataset_cfg, &dataset)?;
        let (index, vindex) = self.ensure_vindex(app_hash, vs_hash, &app.vector_index, artifact, docs.clone())?;
        let app_report = LayerReport {
            layer: NodeKind::App,
            hash: app_hash.clone(),
            outcome: if base == Outcome::Reused && vindex == Outcome::Reused { Outcome::Reused } else { Outcome::Built },
            wall_ms: ms_since(start),
        };

        let snapshot = VectorSnapshot {
            name: active_name.clone(),
            hash: vs_hash.clone(),
            engine: VectorEngine {
                index,
                embedder: embedder_for(&vs_cfg.embedder),
                metric: vs_cfg.metric,
            },
        };
        let handle = ActiveApp::new(app_hash.clone(), app, declared, docs, structured, lexical, snapshot);
        let report = ActivationReport {
            app: app_hash.clone(),
            vectorset: active_name,
            layers: vec![dataset_report, vs_report, app_report],
            embed_calls,
        };
        Ok((Arc::new(handle), report))
    }

    /// Makes `name` the app's active vector set, building its artifact and
    /// index if needed. Searches keep running against the old snapshot until
    /// the new one is published; on failure the old one stays.
    pub fn hot_swap(&self, app: &ActiveApp, name: &str) -> Result<ActivationReport> {
        let _guard = app.swap_guard();
        let vs_hash = app
            .vectorsets
            .get(name)
            .ok_or_else(|| Error::UnknownVectorSet(name.to_owned()))?
            .clone();
        let vs_cfg = self.vectorset_config(&vs_hash)?;
        let dataset_cfg = self.dataset_config(&app.config.dataset)?;
        let dataset_hash = app.config.dataset.clone();
        let cache: OnceCell<Arc<DatasetSnapshot>> = OnceCell::new();
        let dataset = || -> Result<Arc<DatasetSnapshot>> {
            if let Some(s) = cache.get() {
                return Ok(s.clone());
            }
            let (s, _) = self.ensure_dataset(&dataset_hash, &dataset_cfg, None)?;
            Ok(cache.get_or_init(|| Arc::new(s)).clone())
        };
        let (artifact, vs_report) = self.ensure_vectorset(&vs_hash, &vs_cfg, &dataset)?;
        let embed_calls = artifact.embed_calls;
        let start = Instant::now();
        let (index, outcome) = self.ensure_vindex(&app.hash, &vs_hash, &app.config.vector_index, artifact, app.docs().clone())?;
        let app_report = LayerReport {
            layer: NodeKind::App,
            hash: app.hash.clone(),
            outcome,
            wall_ms: ms_since(start),
        };
        app.install(VectorSnapshot {
            name: name.to_owned(),
            hash: vs_hash,
            engine: VectorEngine {
                index,
                embedder: embedder_for(&vs_cfg.embedder),
                metric: vs_cfg.metric,
            },
        });
        let pointer = self.active_path(&app.hash);
        fs::write(&pointer, name).at(&pointer)?;
        Ok(ActivationReport {
            app: app.hash.clone(),
            vectorset: name.to_owned(),
            layers: vec![vs_report, app_report],
            embed_calls,
        })
    }

    /// Removes every checkpoint not reachable from `keep` through MANIFEST
    /// child edges, plus leftover temp directories. Returns removed hashes.
    pub fn gc(&self, keep: &BTreeSet<ConfigHash>) -> Result<Vec<ConfigHash>> {
        let mut children: BTreeMap<ConfigHash, Vec<ConfigHash>> = BTreeMap::new();
        let mut present = Vec::new();
        for kind in [NodeKind::Dataset, NodeKind::Vectorset, NodeKind::App] {
            for hash in self.hashes_in(&self.root.join(layer_dir(kind)))? {
                if let Some(m) = self.manifest(kind, &hash) {
                    children.entry(hash.clone()).or_default().extend(m.children);
                }
                present.push((kind, hash));
            }
        }
        let mut reachable = BTreeSet::new();
        let mut stack: Vec<ConfigHash> = keep.iter().cloned().collect();
        while let Some(h) = stack.pop() {
            if reachable.insert(h.clone()) {
                stack.extend(children.get(&h).into_iter().flatten().cloned());
            }
        }
        let mut removed = BTreeSet::new();
        for (kind, hash) in present {
            if !reachable.contains(&hash) {
                let dir = self.checkpoint_dir(kind, &hash);
                fs::remove_dir_all(&dir).at(&dir)?;
                removed.insert(hash);
            }
        }
        let tmp = self.root.join("tmp");
        for entry in fs::read_dir(&tmp).at(&tmp)? {
            let _ = fs::remove_dir_all(entry.at(&tmp)?.path());
        }
        Ok(removed.into_iter().collect())
    }
}

impl ConfigResolver for CheckpointStore {
    fn resolve(&self, hash: &ConfigHash) -> Option<ConfigNode> {
        self.get_config(hash).ok()
    }
}
