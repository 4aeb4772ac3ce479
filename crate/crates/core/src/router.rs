//! Query planning and execution across the vector and structured engines.
//!
//! A filtered semantic query can be reduced in two orders:
//!
//! * **PreFilter** (structured → vector): evaluate the filter, then run an
//!   exact kNN over the matching documents only. Cheap when the filter is
//!   strong; when it is weak the structured engine has to materialize most of
//!   the corpus and the kNN has to score all of it.
//! * **PostFilter** (vector → structured): fetch the top `m0 = 2k` documents
//!   unrestricted, drop the ones failing the filter, and widen `m`
//!   geometrically until `k` survive. Cheap when the filter is weak, since the
//!   vector engine can stop early; expensive when matches are rare.
//!
//! The planner picks between them by estimated selectivity.

use serde::{Deserialize, Serialize};

use crate::docs::DocSet;
use crate::embed::{l2_normalize, Embedder, Metric};
use crate::error::{Error, Result, Violation};
use crate::inverted::{Filter, LexicalIndex, StructuredIndex};
use crate::vindex::{CostCounters, RawHit, ScoredHit, VectorIndex};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    #[default]
    Semantic,
    Keyword,
    Auto,
    /// Vector and lexical results merged by the app's fusion config.
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub query_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<Filter>,
    pub k: usize,
    #[serde(default)]
    pub mode: SearchMode,
}

impl SearchRequest {
    pub fn semantic(query: impl Into<String>, k: usize) -> Self {
        Self {
            query_text: query.into(),
            filter: None,
            k,
            mode: SearchMode::Semantic,
        }
    }

    pub fn with_filter(mut self, filter: Filter) -> Self {
        self.filter = Some(filter);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterConfig {
    #[serde(default = "defaults::threshold")]
    pub selectivity_threshold: f64,
    #[serde(default = "defaults::two")]
    pub oversample_factor: f64,
    #[serde(default = "defaults::two")]
    pub widen_factor: f64,
    #[serde(default = "defaults::keyword_tokens")]
    pub keyword_max_tokens: usize,
    #[serde(default = "defaults::max_k")]
    pub max_k: usize,
}

mod defaults {
    pub fn threshold() -> f64 {
        0.1
    }
    pub fn two() -> f64 {
        2.0
    }
    pub fn keyword_tokens() -> usize {
        3
    }
    pub fn max_k() -> usize {
        1000
    }
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            selectivity_threshold: defaults::threshold(),
            oversample_factor: defaults::two(),
            widen_factor: defaults::two(),
            keyword_max_tokens: defaults::keyword_tokens(),
            max_k: defaults::max_k(),
        }
    }
}

impl RouterConfig {
    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let t = self.selectivity_threshold;
        if !(t > 0.0 && t <= 1.0) {
            out.push(Violation::InvalidRouter(format!("selectivity_threshold {t} not in (0, 1]")));
        }
        if !(self.oversample_factor >= 1.0) || !self.oversample_factor.is_finite() {
            out.push(Violation::InvalidRouter("oversample_factor must be >= 1".into()));
        }
        if !(self.widen_factor > 1.0) || !self.widen_factor.is_finite() {
            out.push(Violation::InvalidRouter("widen_factor must be > 1".into()));
        }
        if self.max_k == 0 {
            out.push(Violation::InvalidRouter("max_k must be positive".into()));
        }
        out
    }

    pub fn oversample(&self, k: usize) -> usize {
        ((self.oversample_factor * k as f64).ceil() as usize).max(k)
    }

    fn widen(&self, m: usize) -> usize {
        ((m as f64 * self.widen_factor).ceil() as usize).max(m + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlanKind {
    Unfiltered,
    PreFilter,
    PostFilter,
    Lexical,
}

impl PlanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::Unfiltered => "Unfiltered",
            PlanKind::PreFilter => "PreFilter",
            PlanKind::PostFilter => "PostFilter",
            PlanKind::Lexical => "Lexical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub kind: PlanKind,
    pub oversample_m0: Option<usize>,
    pub selectivity_estimate: f64,
}

/// The plan as reported to callers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub kind: PlanKind,
    pub selectivity: f64,
    pub m0: usize,
    pub widen_rounds: u64,
}

/// The vector side of an app: an index plus the embedder that produced it.
pub struct VectorEngine {
    pub index: VectorIndex,
    pub embedder: Box<dyn Embedder>,
    pub metric: Metric,
}

impl VectorEngine {
    pub fn embed_query(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = self
            .embedder
            .embed_batch(&[text.to_owned()])?
            .pop()
            .ok_or_else(|| Error::Embedder("embedder returned no vector".into()))?;
        if self.metric == Metric::Cosine {
            l2_normalize(&mut v);
        }
        Ok(v)
    }
}

/// The uniform engine interface: text in, ranked hits out, optionally
/// restricted to a precomputed document set.
pub trait SearchEngine {
    fn name(&self) -> &str;
    fn search(&self, query: &str, k: usize, allowed: Option<&DocSet>) -> Result<(Vec<ScoredHit>, CostCounters)>;
}

impl SearchEngine for VectorEngine {
    fn name(&self) -> &str {
        "vector"
    }

    fn search(&self, query: &str, k: usize, allowed: Option<&DocSet>) -> Result<(Vec<ScoredHit>, CostCounters)> {
        self.index.knn(&self.embed_query(query)?, k, allowed)
    }
}

impl SearchEngine for LexicalIndex {
    fn name(&self) -> &str {
        "lexical"
    }

    fn search(&self, query: &str, k: usize, allowed: Option<&DocSet>) -> Result<(Vec<ScoredHit>, CostCounters)> {
        let (hits, scanned) = LexicalIndex::search(self, query, k, allowed);
        Ok((
            hits,
            CostCounters {
                postings_scanned: scanned,
                ..CostCounters::default()
            },
        ))
    }
}

/// Engines the router dispatches to.
#[derive(Clone, Copy)]
pub struct Engines<'a> {
    pub vector: &'a VectorEngine,
    pub structured: &'a StructuredIndex,
    pub lexical: Option<&'a LexicalIndex>,
}

/// Result of executing one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub hits: Vec<ScoredHit>,
    pub counters: CostCounters,
    pub report: PlanReport,
}

pub fn validate_request(cfg: &RouterConfig, req: &SearchRequest, structured: &StructuredIndex) -> Vec<Violation> {
    let mut out = Vec::new();
    if req.k == 0 {
        out.push(Violation::InvalidRequest("k must be at least 1".into()));
    } else if req.k > cfg.max_k {
        out.push(Violation::InvalidRequest(format!("k {} exceeds max_k {}", req.k, cfg.max_k)));
    }
    if let Some(f) = &req.filter {
        out.extend(structured.validate(f));
    }
    out
}

fn is_keyword_query(cfg: &RouterConfig, req: &SearchRequest, has_lexical: bool) -> Result<bool> {
    match req.mode {
        SearchMode::Keyword if !has_lexical => Err(Error::Violations(vec![Violation::InvalidRequest(
            "keyword mode needs an app with a lexical channel".into(),
        )])),
        SearchMode::Keyword => Ok(true),
        SearchMode::Auto => Ok(has_lexical && req.query_text.split_whitespace().count() <= cfg.keyword_max_tokens),
        SearchMode::Semantic | SearchMode::Hybrid => Ok(false),
    }
}

/// Chooses the reduction pathway for `req`.
pub fn plan(cfg: &RouterConfig, req: &SearchRequest, engines: &Engines<'_>) -> Result<QueryPlan> {
    let violations = validate_request(cfg, req, engines.structured);
    if !violations.is_empty() {
        return Err(Error::Violations(violations));
    }
    let selectivity = match &req.filter {
        Some(f) => engines.structured.selectivity(f)?,
        None => 1.0,
    };
    if is_keyword_query(cfg, req, engines.lexical.is_some())? {
        return Ok(QueryPlan {
            kind: PlanKind::Lexical,
            oversample_m0: None,
            selectivity_estimate: selectivity,
        });
    }
    Ok(match req.filter {
        None => QueryPlan {
            kind: PlanKind::Unfiltered,
            oversample_m0: None,
            selectivity_estimate: 1.0,
        },
        Some(_) if selectivity <= cfg.selectivity_threshold => QueryPlan {
            kind: PlanKind::PreFilter,
            oversample_m0: None,
            selectivity_estimate: selectivity,
        },
        Some(_) => QueryPlan {
            kind: PlanKind::PostFilter,
            oversample_m0: Some(cfg.oversample(req.k)),
            selectivity_estimate: selectivity,
        },
    })
}

/// A plan of the given kind regardless of selectivity. Used to compare
/// pathways on identical requests.
pub fn forced_plan(cfg: &RouterConfig, req: &SearchRequest, engines: &Engines<'_>, kind: PlanKind) -> Result<QueryPlan> {
    let mut p = plan(cfg, req, engines)?;
    if matches!(kind, PlanKind::PreFilter | PlanKind::PostFilter) && req.filter.is_none() {
        return Err(Error::Violations(vec![Violation::InvalidRequest(format!(
            "{} needs a filter",
            kind.as_str()
        ))]));
    }
    if kind == PlanKind::Lexical && engines.lexical.is_none() {
        return Err(Error::Violations(vec![Violation::InvalidRequest(
            "app has no lexical index".into(),
        )]));
    }
    p.kind = kind;
    p.oversample_m0 = (kind == PlanKind::PostFilter).then(|| cfg.oversample(req.k));
    Ok(p)
}

/// Runs `plan` for `req`. Engine failures carry the plan kind.
pub fn execute(cfg: &RouterConfig, plan: &QueryPlan, req: &SearchRequest, engines: &Engines<'_>) -> Result<Execution> {
    run(cfg, plan, req, engines).map_err(|e| match e {
        Error::Violations(_) => e,
        other => Error::Engine {
            plan: plan.kind.as_str().to_owned(),
            source: Box::new(other),
        },
    })
}

fn run(cfg: &RouterConfig, plan: &QueryPlan, req: &SearchRequest, engines: &Engines<'_>) -> Result<Execution> {
    let k = req.k;
    let mut counters = CostCounters::default();
    let allowed = match &req.filter {
        Some(f) if plan.kind != PlanKind::Unfiltered => {
            let (set, scanned) = engines.structured.eval(f)?;
            counters.postings_scanned += scanned;
            Some(set)
        }
        _ => None,
    };
    let vector = engines.vector;
    let hits = match plan.kind {
        PlanKind::Lexical => {
            let lex = engines
                .lexical
                .ok_or_else(|| Error::Violations(vec![Violation::InvalidRequest("app has no lexical index".into())]))?;
            let (hits, c) = SearchEngine::search(lex, &req.query_text, k, allowed.as_ref())?;
            counters += c;
            hits
        }
        PlanKind::Unfiltered => {
            let q = vector.embed_query(&req.query_text)?;
            let (hits, c) = vector.index.knn(&q, k, None)?;
            counters += c;
            hits
        }
        PlanKind::PreFilter => {
            let q = vector.embed_query(&req.query_text)?;
            let allowed = allowed.as_ref().expect("prefilter has a filter");
            let (hits, c) = vector.index.knn_within(&q, k, allowed)?;
            counters += c;
            hits
        }
        PlanKind::PostFilter => {
            let q = vector.embed_query(&req.query_text)?;
            let allowed = allowed.as_ref().expect("postfilter has a filter");
            let corpus = vector.index.doc_count();
            let mut m = plan.oversample_m0.unwrap_or_else(|| cfg.oversample(k)).max(k);
            let kept: Vec<RawHit> = loop {
                let (raw, c) = vector.index.knn_raw(&q, m, None)?;
                counters += c;
                let kept: Vec<RawHit> = raw.into_iter().filter(|h| allowed.contains(h.ord)).collect();
                if kept.len() >= k || m >= corpus {
                    break kept;
                }
                m = cfg.widen(m);
                counters.widen_rounds += 1;
            };
            vector.index.materialize(&kept[..kept.len().min(k)])
        }
    };
    Ok(Execution {
        hits,
        counters,
        report: PlanReport {
            kind: plan.kind,
            selectivity: plan.selectivity_estimate,
            m0: plan.oversample_m0.unwrap_or(0),
            widen_rounds: counters.widen_rounds,
        },
    })
}
