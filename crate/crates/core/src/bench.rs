//! Benchmark harness: top-k retrieval rates over a query file, a synthetic
//! corpus generator with planted filter selectivities and planted nearest
//! neighbours, and the pre-filter/post-filter cost sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::app::ActiveApp;
use crate::config::ConfigHash;
use crate::embed::{l2_normalize, tokenize, HashingEmbedder};
use crate::error::{Error, Result};
use crate::exec;
use crate::inverted::Filter;
use crate::router::{PlanKind, SearchMode, SearchRequest};
use crate::schema::{ChannelSpec, DatasetConfig, Document, FieldKind, MetadataFieldSpec};
use crate::vindex::{dot, CostCounters};

pub const DEFAULT_KS: [usize; 6] = [1, 5, 10, 20, 50, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchQuery {
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<Filter>,
    pub gold_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub error: String,
}

/// Reads BenchQuery JSONL. Malformed lines are returned, not fatal.
pub fn read_queries<R: BufRead>(source: R) -> Result<(Vec<BenchQuery>, Vec<SkippedLine>)> {
    let mut queries = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("<queries line {line_no}>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let problem = match serde_json::from_str::<BenchQuery>(&line) {
            Err(e) => Some(e.to_string()),
            Ok(q) if q.gold_doc_ids.is_empty() => Some("gold_doc_ids is empty".into()),
            Ok(q) if !seen.insert(q.query_id.clone()) => Some(format!("duplicate query_id {:?}", q.query_id)),
            Ok(q) => {
                queries.push(q);
                None
            }
        };
        if let Some(error) = problem {
            skipped.push(SkippedLine { line: line_no, error });
        }
    }
    Ok((queries, skipped))
}

pub fn queries_jsonl(queries: &[BenchQuery]) -> String {
    let mut out = String::new();
    for q in queries {
        out.push_str(&serde_json::to_string(q).expect("queries serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    /// 1-based rank of the first gold document, if retrieved at all.
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanTotals {
    pub queries: usize,
    pub counters: CostCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub app: ConfigHash,
    pub vectorset: String,
    pub ks: Vec<usize>,
    pub queries: usize,
    /// k → fraction of queries with a gold document in the top k.
    pub rates: BTreeMap<usize, f64>,
    pub per_query: BTreeMap<String, QueryOutcome>,
    pub by_plan: BTreeMap<PlanKind, PlanTotals>,
    pub skipped: Vec<SkippedLine>,
    pub failed: usize,
}

impl BenchReport {
    pub fn rate(&self, k: usize) -> Option<f64> {
        self.rates.get(&k).copied()
    }
}

/// rate(k) = |{q : rank(q) ≤ k}| / |queries|.
pub fn retrieval_rates(ranks: &[Option<usize>], ks: &[usize]) -> BTreeMap<usize, f64> {
    ks.iter()
        .map(|&k| {
            let hits = ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count();
            let rate = if ranks.is_empty() { 0.0 } else { hits as f64 / ranks.len() as f64 };
            (k, rate)
        })
        .collect()
}

/// Runs every query at max(ks) and scores it by the rank of its first gold
/// document. A query whose search fails counts as a miss.
pub fn run_bench(app: &ActiveApp, queries: &[BenchQuery], ks: &[usize], mode: SearchMode) -> BenchReport {
    let mut ks: Vec<usize> = ks.iter().copied().filter(|&k| k > 0).collect();
    ks.sort_unstable();
    ks.dedup();
    let k_max = ks.last().copied().unwrap_or(1);
    let results = exec::map(queries, |q| {
        let req = SearchRequest {
            query_text: q.text.clone(),
            filter: q.filter.clone(),
            k: k_max,
            mode,
        };
        app.search(&req)
    });
    let mut per_query = BTreeMap::new();
    let mut by_plan: BTreeMap<PlanKind, PlanTotals> = BTreeMap::new();
    let mut failed = 0;
    let mut vectorset = app.active_vectorset();
    for (q, result) in queries.iter().zip(results) {
        let outcome = match result {
            Ok(resp) => {
                let gold: BTreeSet<&str> = q.gold_doc_ids.iter().map(String::as_str).collect();
                let totals = by_plan.entry(resp.plan.kind).or_default();
                totals.queries += 1;
                totals.counters += resp.counters;
                vectorset = resp.vectorset;
                QueryOutcome {
                    rank: resp.hits.iter().position(|h| gold.contains(h.doc_id.as_str())).map(|p| p + 1),
                    plan: Some(resp.plan.kind),
                    error: None,
                }
            }
            Err(e) => {
                failed += 1;
                QueryOutcome {
                    rank: None,
                    plan: None,
                    error: Some(e.to_string()),
                }
            }
        };
        per_query.insert(q.query_id.clone(), outcome);
    }
    let ranks: Vec<Option<usize>> = per_query.values().map(|o| o.rank).collect();
    BenchReport {
        app: app.hash.clone(),
        vectorset,
        rates: retrieval_rates(&ranks, &ks),
        ks,
        queries: queries.len(),
        per_query,
        by_plan,
        skipped: Vec::new(),
        failed,
    }
}

// ---- synthetic corpus ----

const N_TOPICS: usize = 16;
const TOPIC_WORDS: usize = 64;
const GLOBAL_WORDS: usize = 4096;
const TOPIC_SHARE: f64 = 0.7;
const MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    /// Labels available to the `topics` keyword_list field.
    #[serde(default)]
    pub n_tags: usize,
    /// Planted disjoint `tag` values: `tag{i}` matches round(s_i · n_docs) docs.
    #[serde(default)]
    pub tag_selectivities: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_queries")]
    pub n_queries: usize,
    /// Hashing embedder the planted queries are verified against.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub embed_seed: u64,
}

fn default_queries() -> usize {
    100
}

fn default_dim() -> usize {
    256
}

impl SyntheticSpec {
    pub fn new(n_docs: usize, seed: u64) -> Self {
        Self {
            n_docs,
            n_tags: 8,
            tag_selectivities: Vec::new(),
            seed,
            n_queries: default_queries(),
            dim: default_dim(),
            embed_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: DatasetConfig,
    pub documents: Vec<Document>,
    pub queries: Vec<BenchQuery>,
}

impl SyntheticCorpus {
    pub fn corpus_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&serde_json::to_string(d).expect("documents serialize"));
            out.push('\n');
        }
        out
    }

    pub fn queries_jsonl(&self) -> String {
        queries_jsonl(&self.queries)
    }
}

/// Schema of generated corpora. `slot` holds a random permutation of
/// 0..n_docs, so `slot ≤ m − 1` selects exactly m documents.
pub fn synthetic_dataset_config(name: &str) -> DatasetConfig {
    let field = |name: &str, kind| MetadataFieldSpec {
        name: name.into(),
        kind,
        filterable: true,
    };
    DatasetConfig {
        name: name.into(),
        channels: vec![ChannelSpec { name: "title".into() }, ChannelSpec { name: "body".into() }],
        metadata_fields: vec![
            field("tag", FieldKind::Keyword),
            field("topics", FieldKind::KeywordList),
            field("year", FieldKind::Integer),
            field("published", FieldKind::Date),
            field("slot", FieldKind::Integer),
            field("score", FieldKind::Float),
        ],
        source: None,
    }
}

/// Filter matching exactly round(s · n_docs) documents of a generated corpus.
pub fn slot_filter(n_docs: usize, s: f64) -> Filter {
    let m = (s * n_docs as f64).round() as i64;
    Filter::range("slot", None, Some(json!(m - 1)))
}

fn word(rng: &mut ChaCha8Rng, topic: usize) -> String {
    if rng.gen_bool(TOPIC_SHARE) {
        format!("t{topic:02}w{:02}", rng.gen_range(0..TOPIC_WORDS))
    } else {
        format!("w{:04}", rng.gen_range(0..GLOBAL_WORDS))
    }
}

fn sentence(rng: &mut ChaCha8Rng, topic: usize, len: usize) -> String {
    (0..len).map(|_| word(rng, topic)).collect::<Vec<_>>().join(" ")
}

fn query_vector(embedder: &HashingEmbedder, text: &str) -> Vec<f32> {
    let mut v = embedder.embed(text);
    l2_normalize(&mut v);
    v
}

/// Shortest prefix (from 6 tokens up, by 2) of a shuffled subset of the gold
/// body whose vector has gold as its unique nearest document.
fn plant_query(embedder: &HashingEmbedder, vectors: &[Vec<f32>], body: &str, gold: usize, rng: &mut ChaCha8Rng) -> Option<String> {
    let mut tokens: Vec<String> = tokenize(body);
    tokens.sort();
    tokens.dedup();
    tokens.shuffle(rng);
    let mut take = tokens.len().min(6);
    loop {
        let text = tokens[..take].join(" ");
        let q = query_vector(embedder, &text);
        let target = dot(&q, &vectors[gold]);
        let unique = vectors
            .iter()
            .enumerate()
            .all(|(i, v)| i == gold || dot(&q, v) < target - MARGIN);
        if unique {
            return Some(text);
        }
        if take == tokens.len() {
            return None;
        }
        take = (take + 2).min(tokens.len());
    }
}

/// Deterministic corpus and planted queries for `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    let n = spec.n_docs;
    if n == 0 {
        return Err(Error::Infeasible("n_docs must be positive".into()));
    }
    if spec.dim < 2 {
        return Err(Error::Infeasible("dim must be at least 2".into()));
    }
    if let Some(s) = spec.tag_selectivities.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
        return Err(Error::Infeasible(format!("selectivity {s} not in (0, 1]")));
    }
    let counts: Vec<usize> = spec.tag_selectivities.iter().map(|s| (s * n as f64).round() as usize).collect();
    let total: f64 = spec.tag_selectivities.iter().sum();
    if total > 1.0 + 1e-9 || counts.iter().sum::<usize>() > n {
        return Err(Error::Infeasible(format!(
            "disjoint tags need {total} of the corpus; at most 1 is available"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut rng);
    let mut bounds = Vec::with_capacity(counts.len());
    let mut start = 0;
    for c in &counts {
        bounds.push(start..start + c);
        start += c;
    }

    let mut documents = Vec::with_capacity(n);
    for (i, &slot) in slots.iter().enumerate() {
        let topic = rng.gen_range(0..N_TOPICS);
        let title_len = rng.gen_range(4..9);
        let body_len = rng.gen_range(24..41);
        let title = sentence(&mut rng, topic, title_len);
        let body = sentence(&mut rng, topic, body_len);
        let year: i64 = rng.gen_range(1990..=2024);
        let published = format!("{year}-{:02}-{:02}", rng.gen_range(1..=12), rng.gen_range(1..=28));
        let score = f64::from(rng.gen_range(0u32..1_000_000)) / 1e6;
        let mut metadata = BTreeMap::new();
        if let Some(t) = bounds.iter().position(|b| b.contains(&slot)) {
            metadata.insert("tag".to_string(), json!(format!("tag{t}")));
        }
        if spec.n_tags > 0 {
            let picks = rng.gen_range(1..=3.min(spec.n_tags));
            let labels: BTreeSet<String> = (0..picks).map(|_| format!("t{}", rng.gen_range(0..spec.n_tags))).collect();
            metadata.insert("topics".to_string(), json!(labels));
        }
        metadata.insert("year".to_string(), json!(year));
        metadata.insert("published".to_string(), json!(published));
        metadata.insert("slot".to_string(), json!(slot));
        metadata.insert("score".to_string(), json!(score));
        documents.push(Document {
            doc_id: format!("doc{i:06}"),
            channels: BTreeMap::from([("title".to_string(), title), ("body".to_string(), body)]),
            metadata,
        });
    }

    let embedder = HashingEmbedder::new(spec.dim, spec.embed_seed);
    let vectors: Vec<Vec<f32>> = exec::map(&documents, |d| query_vector(&embedder, &d.channels["body"]));
    let planted: Vec<Option<BenchQuery>> = exec::map_range(spec.n_queries, |q| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(q as u64 + 1);
        (0..32).find_map(|_| {
            let gold = rng.gen_range(0..n);
            let text = plant_query(&embedder, &vectors, &documents[gold].channels["body"], gold, &mut rng)?;
            Some(BenchQuery {
                query_id: format!("q{q:05}"),
                text,
                filter: None,
                gold_doc_ids: vec![documents[gold].doc_id.clone()],
            })
        })
    });
    let queries = planted.into_iter().flatten().collect();
    Ok(SyntheticCorpus {
        dataset: synthetic_dataset_config("synthetic"),
        documents,
        queries,
    })
}

// ---- cost sweep ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub selectivity: f64,
    pub plan: PlanKind,
    pub scored_vectors: f64,
    pub postings_scanned: f64,
    pub widen_rounds: f64,
    /// Mean wall time per query, microseconds.
    pub wall_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepChoice {
    pub selectivity: f64,
    pub estimate: f64,
    pub plan: PlanKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub app: ConfigHash,
    pub n_docs: usize,
    pub k: usize,
    pub queries: usize,
    pub repetitions: usize,
    pub rows: Vec<SweepRow>,
    pub chosen: Vec<SweepChoice>,
    /// First selectivity where PostFilter scores fewer vectors than PreFilter.
    pub crossover: Option<f64>,
}

impl SweepTable {
    pub fn row(&self, s: f64, plan: PlanKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.selectivity == s && r.plan == plan)
    }

    /// Columns: selectivity, plan, scored_vectors, postings_scanned, widen_rounds.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("selectivity,plan,scored_vectors,postings_scanned,widen_rounds\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.selectivity,
                r.plan.as_str(),
                r.scored_vectors,
                r.postings_scanned,
                r.widen_rounds
            );
        }
        out
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("sweep serializes")
    }
}

/// Forces PreFilter and PostFilter on every query at every selectivity and
/// averages their cost counters. `filter_for(s)` must select a fraction `s`
/// of the corpus.
pub fn cost_sweep(
    app: &ActiveApp,
    queries: &[String],
    selectivities: &[f64],
    k: usize,
    repetitions: usize,
    filter_for: &(dyn Fn(f64) -> Filter + Sync),
) -> Result<SweepTable> {
    let reps = repetitions.max(1);
    let mut rows = Vec::new();
    let mut chosen = Vec::new();
    let mut crossover = None;
    for &s in selectivities {
        let filter = filter_for(s);
        let mut means = BTreeMap::new();
        for plan in [PlanKind::PreFilter, PlanKind::PostFilter] {
            let mut total = CostCounters::default();
            let start = Instant::now();
            for _ in 0..reps {
                let runs = exec::map(queries, |q| {
                    let req = SearchRequest::semantic(q.clone(), k).with_filter(filter.clone());
                    app.search_forced(&req, plan).map(|r| r.counters)
                });
                for c in runs {
                    total += c?;
                }
            }
            let runs = (queries.len() * reps).max(1) as f64;
            let row = SweepRow {
                selectivity: s,
                plan,
                scored_vectors: total.scored_vectors as f64 / runs,
                postings_scanned: total.postings_scanned as f64 / runs,
                widen_rounds: total.widen_rounds as f64 / runs,
                wall_us: start.elapsed().as_secs_f64() * 1e6 / runs,
            };
            means.insert(plan, row.scored_vectors);
            rows.push(row);
        }
        if crossover.is_none() && means[&PlanKind::PostFilter] < means[&PlanKind::PreFilter] {
            crossover = Some(s);
        }
        if let Some(q) = queries.first() {
            let resp = app.search(&SearchRequest::semantic(q.clone(), k).with_filter(filter.clone()))?;
            chosen.push(SweepChoice {
                selectivity: s,
                estimate: resp.plan.selectivity,
                plan: resp.plan.kind,
            });
        }
    }
    Ok(SweepTable {
        app: app.hash.clone(),
        n_docs: app.docs().len(),
        k,
        queries: queries.len(),
        repetitions: reps,
        rows,
        chosen,
        crossover,
    })
}
