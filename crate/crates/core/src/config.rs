//! Typed hierarchical configs and their content hashes.
//!
//! A config node is a dataset, a vector set, or an app. Vector sets and apps
//! reference their children by hash, so a node's hash covers everything
//! beneath it: editing a leaf changes the hash of every ancestor and nothing
//! else.
//!
//! The hash is SHA-256 over a canonical JSON form: object keys sorted by
//! UTF-8 bytes, no whitespace, integers in plain decimal, floats in shortest
//! round-trip decimal, strings with minimal escaping.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::embed::VectorSetConfig;
use crate::error::{Error, Result, Violation};
use crate::fusion::FusionConfig;
use crate::router::RouterConfig;
use crate::schema::{validate_dataset_config, DatasetConfig};
use crate::vindex::VectorIndexConfig;

/// 64 lowercase hex characters: SHA-256 of a canonical config.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConfigHash(String);

impl ConfigHash {
    pub fn parse(s: &str) -> Result<Self> {
        if s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(Self(s.to_owned()))
        } else {
            Err(Error::InvalidHash(s.to_owned()))
        }
    }

    pub fn of_bytes(bytes: &[u8]) -> Self {
        Self(hex::encode(Sha256::digest(bytes)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ConfigHash {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<ConfigHash> for String {
    fn from(h: ConfigHash) -> String {
        h.0
    }
}

impl fmt::Display for ConfigHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for ConfigHash {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub name: String,
    pub dataset: ConfigHash,
    pub vectorsets: Vec<ConfigHash>,
    pub active_vectorset: String,
    #[serde(default)]
    pub vector_index: VectorIndexConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexical_channel: Option<String>,
    #[serde(default)]
    pub router: RouterConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Dataset,
    Vectorset,
    App,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Dataset => "dataset",
            NodeKind::Vectorset => "vectorset",
            NodeKind::App => "app",
        }
    }
}

/// One config file: `{"kind": "...", "body": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "lowercase")]
pub enum ConfigNode {
    Dataset(DatasetConfig),
    Vectorset(VectorSetConfig),
    App(AppConfig),
}

impl ConfigNode {
    pub fn kind(&self) -> NodeKind {
        match self {
            ConfigNode::Dataset(_) => NodeKind::Dataset,
            ConfigNode::Vectorset(_) => NodeKind::Vectorset,
            ConfigNode::App(_) => NodeKind::App,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            ConfigNode::Dataset(c) => &c.name,
            ConfigNode::Vectorset(c) => &c.name,
            ConfigNode::App(c) => &c.name,
        }
    }

    /// Child references by slot name.
    pub fn refs(&self) -> BTreeMap<String, ConfigHash> {
        let mut out = BTreeMap::new();
        match self {
            ConfigNode::Dataset(_) => {}
            ConfigNode::Vectorset(c) => {
                out.insert("dataset".into(), c.dataset.clone());
            }
            ConfigNode::App(c) => {
                out.insert("dataset".into(), c.dataset.clone());
                for (i, h) in c.vectorsets.iter().enumerate() {
                    out.insert(format!("vectorsets[{i}]"), h.clone());
                }
            }
        }
        out
    }

    fn check_finite(&self) -> Result<()> {
        let ConfigNode::App(app) = self else { return Ok(()) };
        let r = &app.router;
        let mut floats = vec![
            ("router.selectivity_threshold".to_string(), r.selectivity_threshold),
            ("router.oversample_factor".to_string(), r.oversample_factor),
            ("router.widen_factor".to_string(), r.widen_factor),
        ];
        floats.extend(app.fusion.weights.iter().map(|(k, w)| (format!("fusion.weights.{k}"), *w)));
        match floats.into_iter().find(|(_, x)| !x.is_finite()) {
            Some((path, _)) => Err(Error::NonFiniteFloat(path)),
            None => Ok(()),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Canonical byte form of a node.
pub fn canonicalize(node: &ConfigNode) -> Result<Vec<u8>> {
    node.check_finite()?;
    let value = serde_json::to_value(node)?;
    let mut out = Vec::new();
    write_canonical(&value, &mut out);
    Ok(out)
}

pub fn hash(node: &ConfigNode) -> Result<ConfigHash> {
    Ok(ConfigHash::of_bytes(&canonicalize(node)?))
}

/// Canonical JSON for an arbitrary value.
pub fn canonical_json(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(b) => out.extend_from_slice(if *b { b"true" } else { b"false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else {
                // Display for f64 prints the shortest digits that round-trip.
                let f = n.as_f64().expect("finite json number");
                out.extend_from_slice(format!("{f}").as_bytes());
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_by(|a, b| a.as_bytes().cmp(b.as_bytes()));
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_canonical(&map[key], out);
            }
            out.push(b'}');
        }
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    for c in s.chars() {
        match c {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            '\n' => out.extend_from_slice(b"\\n"),
            '\r' => out.extend_from_slice(b"\\r"),
            '\t' => out.extend_from_slice(b"\\t"),
            '\u{08}' => out.extend_from_slice(b"\\b"),
            '\u{0c}' => out.extend_from_slice(b"\\f"),
            c if (c as u32) < 0x20 => out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes()),
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

/// Read access to stored config nodes.
pub trait ConfigResolver {
    fn resolve(&self, hash: &ConfigHash) -> Option<ConfigNode>;
}

/// In-memory resolver, mostly for tests and tooling.
#[derive(Debug, Clone, Default)]
pub struct MemoryConfigs {
    nodes: HashMap<ConfigHash, ConfigNode>,
}

impl MemoryConfigs {
    pub fn insert(&mut self, node: ConfigNode) -> Result<ConfigHash> {
        let h = hash(&node)?;
        self.nodes.insert(h.clone(), node);
        Ok(h)
    }
}

impl ConfigResolver for MemoryConfigs {
    fn resolve(&self, hash: &ConfigHash) -> Option<ConfigNode> {
        self.nodes.get(hash).cloned()
    }
}

fn resolve_dataset(store: &dyn ConfigResolver, h: &ConfigHash, out: &mut BTreeSet<Violation>) -> Option<DatasetConfig> {
    match store.resolve(h) {
        Some(ConfigNode::Dataset(d)) => Some(d),
        Some(_) => {
            out.insert(Violation::WrongRefKind(h.to_string()));
            None
        }
        None => {
            out.insert(Violation::DanglingRef(h.to_string()));
            None
        }
    }
}

fn check_vectorset(vs: &VectorSetConfig, dataset: Option<&DatasetConfig>, out: &mut BTreeSet<Violation>) {
    if vs.name.trim().is_empty() {
        out.insert(Violation::EmptyName("vectorset".into()));
    }
    if let Some(msg) = vs.chunking.check() {
        out.insert(Violation::InvalidChunking(msg));
    }
    if let Some(msg) = vs.embedder.check() {
        out.insert(Violation::InvalidEmbedder(msg));
    }
    if let Some(d) = dataset {
        if !d.has_channel(&vs.channel) {
            out.insert(Violation::VectorSetChannelMissing(vs.channel.clone()));
        }
    }
}

/// Cross-reference checks for an app. Dangling references are reported as
/// violations.
pub fn validate_composition(app: &AppConfig, store: &dyn ConfigResolver) -> Vec<Violation> {
    let mut out = BTreeSet::new();
    if app.name.trim().is_empty() {
        out.insert(Violation::EmptyName("app".into()));
    }
    let dataset = resolve_dataset(store, &app.dataset, &mut out);
    let mut names = HashMap::new();
    for h in &app.vectorsets {
        match store.resolve(h) {
            Some(ConfigNode::Vectorset(vs)) => {
                if vs.dataset != app.dataset {
                    out.insert(Violation::CrossDatasetRef(h.to_string()));
                }
                check_vectorset(&vs, dataset.as_ref(), &mut out);
                if names.insert(vs.name.clone(), h.clone()).is_some() {
                    out.insert(Violation::DuplicateVectorSetName(vs.name.clone()));
                }
            }
            Some(_) => {
                out.insert(Violation::WrongRefKind(h.to_string()));
            }
            None => {
                out.insert(Violation::DanglingRef(h.to_string()));
            }
        }
    }
    if !names.contains_key(&app.active_vectorset) {
        out.insert(Violation::UnknownActiveVectorSet(app.active_vectorset.clone()));
    }
    if let (Some(ch), Some(d)) = (&app.lexical_channel, &dataset) {
        if !d.has_channel(ch) {
            out.insert(Violation::LexicalChannelMissing(ch.clone()));
        }
    }
    out.extend(app.vector_index.check());
    out.extend(app.router.check());
    out.extend(app.fusion.check());
    out.into_iter().collect()
}

/// Validates any node kind against the store.
pub fn validate_node(node: &ConfigNode, store: &dyn ConfigResolver) -> Vec<Violation> {
    match node {
        ConfigNode::Dataset(d) => validate_dataset_config(d),
        ConfigNode::Vectorset(vs) => {
            let mut out = BTreeSet::new();
            let dataset = resolve_dataset(store, &vs.dataset, &mut out);
            check_vectorset(vs, dataset.as_ref(), &mut out);
            out.into_iter().collect()
        }
        ConfigNode::App(app) => validate_composition(app, store),
    }
}

/// Replaces `name@latest` references in a raw config document with hashes,
/// using `lookup(kind, name)`. Parents must be closed terms before hashing.
pub fn resolve_latest(
    raw: &mut Value,
    lookup: impl Fn(NodeKind, &str) -> Option<ConfigHash>,
) -> std::result::Result<(), String> {
    let kind = raw.get("kind").and_then(Value::as_str).unwrap_or_default().to_owned();
    let Some(body) = raw.get_mut("body").and_then(Value::as_object_mut) else {
        return Ok(());
    };
    let fix = |v: &mut Value, kind: NodeKind| -> std::result::Result<(), String> {
        if let Some(name) = v.as_str().and_then(|s| s.strip_suffix("@latest")) {
            let h = lookup(kind, name).ok_or_else(|| format!("no {} named {name:?} in the store", kind.as_str()))?;
            *v = Value::String(h.to_string());
        }
        Ok(())
    };
    if kind == "vectorset" || kind == "app" {
        if let Some(v) = body.get_mut("dataset") {
            fix(v, NodeKind::Dataset)?;
        }
    }
    if kind == "app" {
        if let Some(Value::Array(items)) = body.get_mut("vectorsets") {
            for v in items {
                fix(v, NodeKind::Vectorset)?;
            }
        }
    }
    Ok(())
}
