//! A live, activated app: immutable structured and lexical indexes plus an
//! atomically replaceable vector snapshot.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};

use crate::config::{AppConfig, ConfigHash};
use crate::docs::DocTable;
use crate::error::{Error, Result, Violation};
use crate::fusion::fuse;
use crate::inverted::{LexicalIndex, StructuredIndex};
use crate::router::{self, Engines, PlanKind, PlanReport, SearchEngine, SearchMode, SearchRequest, VectorEngine};
use crate::vindex::{CostCounters, ScoredHit};

/// One vector set made searchable. Replaced wholesale on hot-swap.
pub struct VectorSnapshot {
    pub name: String,
    pub hash: ConfigHash,
    pub engine: VectorEngine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    /// Name of the vector set that answered.
    pub vectorset: String,
    pub hits: Vec<ScoredHit>,
    pub plan: PlanReport,
    pub counters: CostCounters,
}

pub struct ActiveApp {
    pub hash: ConfigHash,
    pub config: AppConfig,
    /// Declared vector sets by name.
    pub vectorsets: BTreeMap<String, ConfigHash>,
    docs: Arc<DocTable>,
    structured: StructuredIndex,
    lexical: Option<LexicalIndex>,
    active: ArcSwap<VectorSnapshot>,
    swap: Mutex<()>,
}

impl ActiveApp {
    pub fn new(
        hash: ConfigHash,
        config: AppConfig,
        vectorsets: BTreeMap<String, ConfigHash>,
        docs: Arc<DocTable>,
        structured: StructuredIndex,
        lexical: Option<LexicalIndex>,
        initial: VectorSnapshot,
    ) -> Self {
        Self {
            hash,
            config,
            vectorsets,
            docs,
            structured,
            lexical,
            active: ArcSwap::from_pointee(initial),
            swap: Mutex::new(()),
        }
    }

    pub fn docs(&self) -> &Arc<DocTable> {
        &self.docs
    }

    pub fn structured(&self) -> &StructuredIndex {
        &self.structured
    }

    pub fn lexical(&self) -> Option<&LexicalIndex> {
        self.lexical.as_ref()
    }

    /// The snapshot a search started now would use.
    pub fn snapshot(&self) -> Arc<VectorSnapshot> {
        self.active.load_full()
    }

    pub fn active_vectorset(&self) -> String {
        self.active.load().name.clone()
    }

    /// Serializes swaps on this app. Held across the build so two swaps
    /// never race; searches are not blocked.
    pub fn swap_guard(&self) -> MutexGuard<'_, ()> {
        self.swap.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Publishes a new vector snapshot. In-flight searches keep the one they
    /// loaded.
    pub fn install(&self, snapshot: VectorSnapshot) {
        self.active.store(Arc::new(snapshot));
    }

    pub fn search(&self, req: &SearchRequest) -> Result<SearchResponse> {
        self.run(req, None)
    }

    /// Runs `req` with the given plan kind regardless of selectivity.
    pub fn search_forced(&self, req: &SearchRequest, kind: PlanKind) -> Result<SearchResponse> {
        self.run(req, Some(kind))
    }

    fn run(&self, req: &SearchRequest, forced: Option<PlanKind>) -> Result<SearchResponse> {
        let snap = self.active.load_full();
        let engines = Engines {
            vector: &snap.engine,
            structured: &self.structured,
            lexical: self.lexical.as_ref(),
        };
        let cfg = &self.config.router;
        let respond = |hits, plan: PlanReport, counters| SearchResponse {
            vectorset: snap.name.clone(),
            hits,
            plan,
            counters,
        };
        if req.mode == SearchMode::Hybrid {
            let Some(lexical) = engines.lexical else {
                return Err(Error::Violations(vec![Violation::InvalidRequest(
                    "hybrid mode needs an app with a lexical channel".into(),
                )]));
            };
            let vreq = SearchRequest {
                mode: SearchMode::Semantic,
                ..req.clone()
            };
            let vplan = match forced {
                Some(kind) => router::forced_plan(cfg, &vreq, &engines, kind)?,
                None => router::plan(cfg, &vreq, &engines)?,
            };
            let lplan = router::forced_plan(cfg, &vreq, &engines, PlanKind::Lexical)?;
            let v = router::execute(cfg, &vplan, &vreq, &engines)?;
            let l = router::execute(cfg, &lplan, &vreq, &engines)?;
            let lists = BTreeMap::from([
                (snap.engine.name().to_owned(), v.hits),
                (lexical.name().to_owned(), l.hits),
            ]);
            let mut counters = v.counters;
            counters += l.counters;
            return Ok(respond(fuse(&self.config.fusion, &lists, req.k), v.report, counters));
        }
        let plan = match forced {
            Some(kind) => router::forced_plan(cfg, req, &engines, kind)?,
            None => router::plan(cfg, req, &engines)?,
        };
        let out = router::execute(cfg, &plan, req, &engines)?;
        Ok(respond(out.hits, out.report, out.counters))
    }
}
