//! Operations shared by the HTTP API and the CLI.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use searchgym_core::app::{ActiveApp, SearchResponse};
use searchgym_core::config::{resolve_latest, ConfigHash, ConfigNode, NodeKind};
use searchgym_core::router::{PlanKind, SearchRequest};
use searchgym_core::state::{ActivationReport, CheckpointStore};
use searchgym_core::vindex::CostCounters;
use searchgym_core::{Error, Result, Violation};
use serde::Serialize;
use serde_json::Value;

/// Cumulative counters since the service started.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub configs_put: u64,
    pub activations: u64,
    pub swaps: u64,
    pub searches: u64,
    pub search_errors: u64,
    pub plans: BTreeMap<PlanKind, u64>,
    pub counters: CostCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppStatus {
    pub hash: ConfigHash,
    pub name: String,
    pub active: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub active_vectorset: Option<String>,
    pub vectorsets: Vec<String>,
    /// Most recent activation or swap report in this process.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_report: Option<ActivationReport>,
}

struct Live {
    app: Arc<ActiveApp>,
    report: ActivationReport,
}

pub struct Service {
    store: CheckpointStore,
    apps: RwLock<BTreeMap<ConfigHash, Live>>,
    /// Serializes activations so one app is never built twice at once.
    activating: Mutex<()>,
    metrics: Mutex<Metrics>,
}

/// Parses a config document, resolving `name@latest` references against
/// `store` when given.
pub fn parse_config(bytes: &[u8], store: Option<&CheckpointStore>) -> Result<ConfigNode> {
    let malformed = |e: String| Error::Violations(vec![Violation::Malformed(e)]);
    let mut raw: Value = serde_json::from_slice(bytes).map_err(|e| malformed(e.to_string()))?;
    if let Some(store) = store {
        resolve_latest(&mut raw, |kind, name| store.latest(kind, name)).map_err(malformed)?;
    }
    serde_json::from_value(raw).map_err(|e| malformed(e.to_string()))
}

/// A path or argument naming a config. Strings that cannot be hashes name
/// nothing.
fn lookup(hash: &str) -> Result<ConfigHash> {
    ConfigHash::parse(hash).map_err(|_| Error::NotFound(format!("config {hash:?}")))
}

impl Service {
    pub fn new(store: CheckpointStore) -> Self {
        Self {
            store,
            apps: RwLock::new(BTreeMap::new()),
            activating: Mutex::new(()),
            metrics: Mutex::new(Metrics::default()),
        }
    }

    pub fn store(&self) -> &CheckpointStore {
        &self.store
    }

    fn bump(&self, f: impl FnOnce(&mut Metrics)) {
        f(&mut self.metrics.lock().unwrap_or_else(|e| e.into_inner()));
    }

    pub fn put_config(&self, bytes: &[u8]) -> Result<ConfigHash> {
        let node = parse_config(bytes, None)?;
        let hash = self.store.put_config(&node)?;
        self.bump(|m| m.configs_put += 1);
        Ok(hash)
    }

    pub fn get_config(&self, hash: &str) -> Result<ConfigNode> {
        self.store.get_config(&lookup(hash)?)
    }

    fn app_hash(&self, hash: &str) -> Result<ConfigHash> {
        let hash = lookup(hash)?;
        match self.store.get_config(&hash)? {
            ConfigNode::App(_) => Ok(hash),
            _ => Err(Error::NotFound(format!("app {hash}"))),
        }
    }

    pub fn activate(&self, hash: &str) -> Result<ActivationReport> {
        let hash = self.app_hash(hash)?;
        let _one = self.activating.lock().unwrap_or_else(|e| e.into_inner());
        let (app, report) = self.store.activate(&hash)?;
        self.apps
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(hash, Live { app, report: report.clone() });
        self.bump(|m| m.activations += 1);
        Ok(report)
    }

    /// The live app for `hash`, activating it on first use.
    pub fn app(&self, hash: &str) -> Result<Arc<ActiveApp>> {
        let key = self.app_hash(hash)?;
        if let Some(live) = self.apps.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(live.app.clone());
        }
        {
            let _one = self.activating.lock().unwrap_or_else(|e| e.into_inner());
            if !self.apps.read().unwrap_or_else(|e| e.into_inner()).contains_key(&key) {
                let (app, report) = self.store.activate(&key)?;
                self.apps.write().unwrap_or_else(|e| e.into_inner()).insert(key.clone(), Live { app, report });
                self.bump(|m| m.activations += 1);
            }
        }
        Ok(self.apps.read().unwrap_or_else(|e| e.into_inner())[&key].app.clone())
    }

    pub fn search(&self, hash: &str, req: &SearchRequest, forced: Option<PlanKind>) -> Result<SearchResponse> {
        let out = self.app(hash).and_then(|app| match forced {
            Some(kind) => app.search_forced(req, kind),
            None => app.search(req),
        });
        self.bump(|m| match &out {
            Ok(r) => {
                m.searches += 1;
                *m.plans.entry(r.plan.kind).or_default() += 1;
                m.counters += r.counters;
            }
            Err(_) => m.search_errors += 1,
        });
        out
    }

    pub fn swap(&self, hash: &str, vectorset: &str) -> Result<ActivationReport> {
        let app = self.app(hash)?;
        let report = self.store.hot_swap(&app, vectorset)?;
        if let Some(live) = self.apps.write().unwrap_or_else(|e| e.into_inner()).get_mut(&app.hash) {
            live.report = report.clone();
        }
        self.bump(|m| m.swaps += 1);
        Ok(report)
    }

    /// Every app config in the store, with live state for activated ones.
    pub fn apps(&self) -> Result<Vec<AppStatus>> {
        let live = self.apps.read().unwrap_or_else(|e| e.into_inner());
        let mut out = Vec::new();
        for entry in self.store.list_configs()? {
            if entry.kind != NodeKind::App {
                continue;
            }
            let ConfigNode::App(cfg) = self.store.get_config(&entry.hash)? else { continue };
            let names = cfg
                .vectorsets
                .iter()
                .map(|h| self.store.get_config(h).map(|n| n.name().to_owned()))
                .collect::<Result<Vec<_>>>()?;
            let current = live.get(&entry.hash);
            out.push(AppStatus {
                hash: entry.hash.clone(),
                name: cfg.name,
                active: current.is_some(),
                active_vectorset: current.map(|l| l.app.active_vectorset()),
                vectorsets: names,
                last_report: current.map(|l| l.report.clone()),
            });
        }
        Ok(out)
    }

    pub fn metrics(&self) -> Metrics {
        self.metrics.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}
