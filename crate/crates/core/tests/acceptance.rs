//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! stderr (not captured by the test harness) and the test fails if any does.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::oracle::{brute_force_topk, check_ranking, linear_eval, random_filter};
use common::{app_config, fixtures, hashing_vectorset, load_fixture_dag, permuted_text, read_node, synthetic_app, Literal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use searchgym_core::bench::{cost_sweep, retrieval_rates, run_bench, slot_filter, BenchQuery, SyntheticSpec, DEFAULT_KS};
use searchgym_core::config::{hash, ConfigHash, ConfigNode, NodeKind};
use searchgym_core::docs::DocTable;
use searchgym_core::embed::{l2_normalize, tokenize, EmbedderConfig, HashingEmbedder, Metric, RowRef, VectorSetArtifact};
use searchgym_core::inverted::{eval_filter, Filter, LexicalIndex, StructuredIndex, DEFAULT_B, DEFAULT_K1};
use searchgym_core::router::{execute, forced_plan, Engines, PlanKind, RouterConfig, SearchMode, SearchRequest, VectorEngine};
use searchgym_core::schema::{ingest, ChannelSpec, DatasetConfig, Document, FieldKind, MetadataFieldSpec};
use searchgym_core::state::{CheckpointStore, Outcome};
use searchgym_core::vindex::{VectorIndex, VectorIndexConfig};
use serde_json::{json, Value};

type Verdict = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ids_of(hits: &[searchgym_core::vindex::ScoredHit]) -> Vec<&str> {
    hits.iter().map(|h| h.doc_id.as_str()).collect()
}

/// Body-channel vectors of `docs` as the app would embed them.
fn oracle_rows(docs: &[Document], dim: usize, seed: u64) -> Vec<(String, Vec<f32>)> {
    let e = HashingEmbedder::new(dim, seed);
    docs.iter()
        .filter_map(|d| {
            let mut v = e.embed(d.channels.get("body")?);
            l2_normalize(&mut v);
            Some((d.doc_id.clone(), v))
        })
        .collect()
}

fn plan_equivalence() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { tag_selectivities: vec![0.01, 0.05, 0.2], ..SyntheticSpec::new(5000, 11) };
    let s = synthetic_app(dir.path(), &spec, VectorIndexConfig::default());
    let rows = oracle_rows(&s.corpus.documents, spec.dim, spec.embed_seed);
    let engine = &s.app.snapshot().engine;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 1000;
    for i in 0..n {
        let text = s.corpus.queries[i % s.corpus.queries.len()].text.clone();
        let f = random_filter(&mut rng, 3, spec.n_docs);
        let k = rng.gen_range(1..=20);
        let req = SearchRequest::semantic(text.clone(), k).with_filter(f.clone());
        let pre = s.app.search_forced(&req, PlanKind::PreFilter).unwrap();
        let post = s.app.search_forced(&req, PlanKind::PostFilter).unwrap();
        check!(ids_of(&pre.hits) == ids_of(&post.hits), "query {i}: PreFilter and PostFilter hit sets differ");
        for (a, b) in pre.hits.iter().zip(&post.hits) {
            check!((a.score - b.score).abs() <= 1e-6, "query {i}: score {} vs {}", a.score, b.score);
        }
        let allowed = linear_eval(&s.corpus.documents, &f);
        let want = brute_force_topk(&rows, &engine.embed_query(&text).unwrap(), Some(&allowed), k);
        check_ranking(&pre.hits, &want, 1e-6).map_err(|e| format!("query {i}: {e}"))?;
    }
    let took = start.elapsed();
    check!(took < Duration::from_secs(120), "took {took:?}");
    Ok(format!("{n} filtered queries, n=5000, {:.1}s", took.as_secs_f64()))
}

fn cost_crossover() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let n = 50_000;
    let spec = SyntheticSpec { n_queries: 20, ..SyntheticSpec::new(n, 12) };
    let s = synthetic_app(dir.path(), &spec, VectorIndexConfig::ivf());
    let layout = s.app.snapshot().engine.index.ivf_layout().map(|l| l.lists.len());
    check!(layout == Some(224), "expected 224 clusters, got {layout:?}");
    let queries: Vec<String> = s.corpus.queries.iter().map(|q| q.text.clone()).collect();
    let sel = [0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0];
    let table = cost_sweep(&s.app, &queries, &sel, 10, 1, &|x| slot_filter(n, x)).unwrap();
    let cost = |x: f64, p| table.row(x, p).unwrap().scored_vectors;
    check!(
        cost(0.001, PlanKind::PreFilter) < cost(0.001, PlanKind::PostFilter),
        "s=0.001: pre {} vs post {}",
        cost(0.001, PlanKind::PreFilter),
        cost(0.001, PlanKind::PostFilter)
    );
    check!(
        cost(0.5, PlanKind::PreFilter) > cost(0.5, PlanKind::PostFilter),
        "s=0.5: pre {} vs post {}",
        cost(0.5, PlanKind::PreFilter),
        cost(0.5, PlanKind::PostFilter)
    );
    let Some(star) = table.crossover else { return Err("no crossover".into()) };
    check!(table.row(1.0, PlanKind::PostFilter).unwrap().widen_rounds == 0.0, "widening at s=1");
    for q in &queries {
        let req = SearchRequest::semantic(q.clone(), 10);
        let post = s.app.search_forced(&req.clone().with_filter(slot_filter(n, 1.0)), PlanKind::PostFilter).unwrap();
        let plain = s.app.search(&req).unwrap();
        check!(post.hits == plain.hits, "s=1 PostFilter differs from Unfiltered");
    }
    let took = start.elapsed();
    check!(took < Duration::from_secs(300), "took {took:?}");
    let summary: Vec<String> = sel
        .iter()
        .map(|&x| format!("{x}:{:.0}/{:.0}", cost(x, PlanKind::PreFilter), cost(x, PlanKind::PostFilter)))
        .collect();
    Ok(format!("crossover s*={star}; pre/post scored {}; {:.1}s", summary.join(" "), took.as_secs_f64()))
}

/// `n` docs on a half circle, doc i at angle i·π/n, so the query (1, 0)
/// ranks them in id order. `tagged` docs carry tag "x", the rest "y".
fn circle(n: usize, tagged: &[usize]) -> (VectorEngine, StructuredIndex, Vec<(String, Vec<f32>)>, Vec<Document>) {
    let ids: Vec<String> = (0..n).map(|i| format!("d{i:05}")).collect();
    let docs = Arc::new(DocTable::new(ids.clone()));
    let step = std::f32::consts::PI / n as f32;
    let rows: Vec<(String, Vec<f32>)> = (0..n)
        .map(|i| (ids[i].clone(), vec![(i as f32 * step).cos(), (i as f32 * step).sin()]))
        .collect();
    let art = VectorSetArtifact {
        dim: 2,
        rows: ids.iter().map(|id| RowRef { doc_id: id.clone(), chunk_index: 0 }).collect(),
        data: rows.iter().flat_map(|(_, v)| v.clone()).collect(),
        embed_calls: 0,
    };
    let index = VectorIndex::build(&VectorIndexConfig::default(), art, docs.clone()).unwrap();
    let cfg = DatasetConfig {
        name: "circle".into(),
        channels: vec![ChannelSpec { name: "body".into() }],
        metadata_fields: vec![MetadataFieldSpec { name: "tag".into(), kind: FieldKind::Keyword, filterable: true }],
        source: None,
    };
    let documents: Vec<Document> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| Document {
            doc_id: id.clone(),
            channels: BTreeMap::new(),
            metadata: [("tag".to_string(), json!(if tagged.contains(&i) { "x" } else { "y" }))].into(),
        })
        .collect();
    let snap = searchgym_core::schema::DatasetSnapshot { stats: Default::default(), documents: documents.clone(), rejects: vec![] };
    let structured = StructuredIndex::build(&cfg, &snap, &docs);
    (VectorEngine { index, embedder: Box::new(Literal), metric: Metric::Dot }, structured, rows, documents)
}

fn postfilter_widening() -> Verdict {
    let cfg = RouterConfig::default();
    let n = 1024;
    // Matches sit at the very bottom of the ranking, far outside the top 2k.
    let k = 5;
    let tagged: Vec<usize> = (n - 8..n).collect();
    let (v, s, rows, docs) = circle(n, &tagged);
    let engines = Engines { vector: &v, structured: &s, lexical: None };
    let f = Filter::eq("tag", "x");
    let req = SearchRequest::semantic("1,0", k).with_filter(f.clone());
    let plan = forced_plan(&cfg, &req, &engines, PlanKind::PostFilter).unwrap();
    let out = execute(&cfg, &plan, &req, &engines).unwrap();
    let allowed = linear_eval(&docs, &f);
    let want = brute_force_topk(&rows, &[1.0, 0.0], Some(&allowed), k);
    check!(out.counters.widen_rounds >= 1, "no widening");
    check_ranking(&out.hits, &want, 1e-6)?;
    let adversarial = out.counters.widen_rounds;

    let (v, s, _, _) = circle(n, &[]);
    let engines = Engines { vector: &v, structured: &s, lexical: None };
    let req = SearchRequest::semantic("1,0", 10).with_filter(f);
    let plan = forced_plan(&cfg, &req, &engines, PlanKind::PostFilter).unwrap();
    check!(plan.oversample_m0 == Some(20), "m0 {:?}", plan.oversample_m0);
    let out = execute(&cfg, &plan, &req, &engines).unwrap();
    check!(out.counters.widen_rounds == 6, "zero-match rounds {}", out.counters.widen_rounds);
    check!(out.hits.is_empty(), "zero-match returned hits");
    Ok(format!("adversarial: {adversarial} rounds, oracle top-{k}; zero-match n=1024 m0=20: 6 rounds, empty"))
}

fn ivf_quality() -> Verdict {
    let spec = SyntheticSpec::new(5000, 13);
    let flat_dir = tempfile::tempdir().unwrap();
    let flat = synthetic_app(flat_dir.path(), &spec, VectorIndexConfig::default());
    let ivf = flat
        .store
        .put_config(&ConfigNode::App(app_config(
            "synthetic-ivf",
            &flat.dataset,
            flat.app.vectorsets.values().cloned().collect(),
            "body",
            VectorIndexConfig::ivf(),
        )))
        .unwrap();
    let (ivf, _) = flat.store.activate(&ivf).unwrap();
    let rate_flat = run_bench(&flat.app, &flat.corpus.queries, &DEFAULT_KS, SearchMode::Semantic);
    let rate_ivf = run_bench(&ivf, &flat.corpus.queries, &DEFAULT_KS, SearchMode::Semantic);
    for r in [&rate_flat, &rate_ivf] {
        check!(r.failed == 0 && r.queries == 100, "{} queries, {} failed", r.queries, r.failed);
        check_monotone(&r.rates)?;
    }
    let (f1, i1) = (rate_flat.rate(1).unwrap(), rate_ivf.rate(1).unwrap());
    check!(f1 == 1.0, "flat rate(1) = {f1}");
    check!(i1 >= 0.9 * f1, "ivf rate(1) = {i1}");

    let clusters = ivf.snapshot().engine.index.ivf_layout().map(|l| l.lists.len()).unwrap();
    let full = flat
        .store
        .put_config(&ConfigNode::App(app_config(
            "synthetic-ivf-full",
            &flat.dataset,
            flat.app.vectorsets.values().cloned().collect(),
            "body",
            VectorIndexConfig { n_probe: clusters, ..VectorIndexConfig::ivf() },
        )))
        .unwrap();
    let (full, _) = flat.store.activate(&full).unwrap();
    for q in &flat.corpus.queries {
        let req = SearchRequest::semantic(q.text.clone(), 20);
        check!(
            full.search(&req).unwrap().hits == flat.app.search(&req).unwrap().hits,
            "full probe differs from flat on {}",
            q.query_id
        );
    }
    Ok(format!("rate(1) flat {f1}, ivf {i1}; n_probe={clusters} matches flat on 100 queries"))
}

fn config_hashes() -> Verdict {
    let node = read_node("dataset.json");
    let golden = std::fs::read_to_string(fixtures().join("dataset.sha256")).unwrap();
    let (a, b) = (hash(&node).unwrap(), hash(&read_node("dataset.json")).unwrap());
    check!(a.as_str() == golden.trim() && a == b, "dataset hash {a} vs golden {}", golden.trim());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for file in ["dataset.json", "vectorset.json", "app.json"] {
        let raw: Value = serde_json::from_slice(&std::fs::read(fixtures().join(file)).unwrap()).unwrap();
        let base = hash(&ConfigNode::from_json(raw.to_string().as_bytes()).unwrap()).unwrap();
        for _ in 0..20 {
            let text = permuted_text(&raw, &mut rng);
            check!(hash(&ConfigNode::from_json(text.as_bytes()).unwrap()).unwrap() == base, "{file} permutation changed the hash");
        }
    }

    // dataset <- vectorset <- app
    let chain = |ds: &ConfigNode, vs: &ConfigNode| -> [ConfigHash; 3] {
        let dh = hash(ds).unwrap();
        let ConfigNode::Vectorset(mut v) = vs.clone() else { unreachable!() };
        v.dataset = dh.clone();
        let vh = hash(&ConfigNode::Vectorset(v.clone())).unwrap();
        let ConfigNode::App(mut a) = read_node("app.json") else { unreachable!() };
        a.dataset = dh.clone();
        a.vectorsets = vec![vh.clone()];
        a.active_vectorset = v.name;
        [dh, vh, hash(&ConfigNode::App(a)).unwrap()]
    };
    let (ds, vs) = (read_node("dataset.json"), read_node("vectorset.json"));
    let base = chain(&ds, &vs);
    let mut vs2 = vs.clone();
    if let ConfigNode::Vectorset(v) = &mut vs2 {
        v.embedder = EmbedderConfig::Hashing { dim: 64, seed: 1 };
    }
    let edited = chain(&ds, &vs2);
    check!(edited[0] == base[0] && edited[1] != base[1] && edited[2] != base[2], "vectorset edit");
    let mut ds2 = ds.clone();
    if let ConfigNode::Dataset(d) = &mut ds2 {
        d.name = "papers-2".into();
    }
    let edited = chain(&ds2, &vs);
    check!((0..3).all(|i| edited[i] != base[i]), "dataset edit");

    let empty = ConfigHash::of_bytes(b"");
    check!(
        empty.as_str() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        "empty digest {empty}"
    );
    Ok("golden, 60 key permutations, 3-node Merkle propagation, empty digest".into())
}

fn checkpoint_reuse() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { n_queries: 0, ..SyntheticSpec::new(1000, 14) };
    let s = synthetic_app(dir.path(), &spec, VectorIndexConfig::ivf());
    let store = CheckpointStore::open(dir.path()).unwrap();
    let (_, again) = store.activate(&s.app_hash).unwrap();
    check!(again.layers.iter().all(|l| l.outcome == Outcome::Reused), "second activation: {:?}", again.layers);
    check!(again.embed_calls == 0, "embed_calls {}", again.embed_calls);

    let vs = store
        .put_config(&ConfigNode::Vectorset(hashing_vectorset("body", &s.dataset, spec.dim, 42)))
        .unwrap();
    let app = store
        .put_config(&ConfigNode::App(app_config("synthetic", &s.dataset, vec![vs], "body", VectorIndexConfig::ivf())))
        .unwrap();
    let (_, r) = store.activate(&app).unwrap();
    let got: Vec<(NodeKind, Outcome)> = r.layers.iter().map(|l| (l.layer, l.outcome)).collect();
    check!(
        got == [
            (NodeKind::Dataset, Outcome::Reused),
            (NodeKind::Vectorset, Outcome::Built),
            (NodeKind::App, Outcome::Built)
        ],
        "new seed: {got:?}"
    );
    Ok(format!("second activation all reused, 0 embed calls; new seed rebuilt vectorset+app ({} embed calls)", r.embed_calls))
}

fn hot_swap_atomicity() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { n_queries: 40, ..SyntheticSpec::new(2000, 15) };
    let s = synthetic_app(dir.path(), &spec, VectorIndexConfig::default());
    let a = hashing_vectorset("a", &s.dataset, 128, 1);
    let b = hashing_vectorset("b", &s.dataset, 96, 2);
    let vs: Vec<ConfigHash> = [a, b].into_iter().map(|v| s.store.put_config(&ConfigNode::Vectorset(v)).unwrap()).collect();
    let h = s
        .store
        .put_config(&ConfigNode::App(app_config("swap", &s.dataset, vs, "a", VectorIndexConfig::default())))
        .unwrap();
    let (app, _) = s.store.activate(&h).unwrap();
    let reqs: Vec<SearchRequest> = s
        .corpus
        .queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let r = SearchRequest::semantic(q.text.clone(), 10);
            if i % 2 == 0 {
                r.with_filter(slot_filter(spec.n_docs, 0.3))
            } else {
                r
            }
        })
        .collect();
    let mut expected: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for name in ["a", "b"] {
        s.store.hot_swap(&app, name).unwrap();
        expected.insert(name.into(), reqs.iter().map(|r| app.search(r).unwrap().hits).collect());
    }
    check!(expected["a"] != expected["b"], "vector sets are indistinguishable");

    let done = AtomicBool::new(false);
    let (served, failed, inconsistent) = (AtomicUsize::new(0), AtomicUsize::new(0), AtomicUsize::new(0));
    let mut swaps = 0;
    std::thread::scope(|scope| {
        for t in 0..8 {
            let (app, reqs, expected) = (&app, &reqs, &expected);
            let (done, served, failed, inconsistent) = (&done, &served, &failed, &inconsistent);
            scope.spawn(move || {
                let mut i = t;
                while !done.load(Ordering::Relaxed) {
                    let q = i % reqs.len();
                    match app.search(&reqs[q]) {
                        Ok(resp) => {
                            if expected.get(&resp.vectorset).is_none_or(|e| e[q] != resp.hits) {
                                inconsistent.fetch_add(1, Ordering::Relaxed);
                            }
                        }
                        Err(_) => {
                            failed.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                    served.fetch_add(1, Ordering::Relaxed);
                    i += 7;
                }
            });
        }
        for i in 0..20 {
            let name = if i % 2 == 0 { "a" } else { "b" };
            if s.store.hot_swap(&app, name).is_err() {
                failed.fetch_add(1, Ordering::Relaxed);
            }
            swaps += 1;
            std::thread::sleep(Duration::from_millis(10));
        }
        done.store(true, Ordering::Relaxed);
    });
    let (served, failed, inconsistent) = (served.into_inner(), failed.into_inner(), inconsistent.into_inner());
    check!(failed == 0, "{failed} failed requests or swaps");
    check!(inconsistent == 0, "{inconsistent} of {served} responses match neither snapshot");
    Ok(format!("{served} searches across {swaps} swaps, all consistent, 0 failed"))
}

/// BM25 computed directly from the raw channel text.
fn bm25_by_hand(docs: &[Document], channel: &str, query: &str) -> Vec<(String, f64)> {
    let texts: Vec<(&str, Vec<String>)> = docs
        .iter()
        .filter_map(|d| Some((d.doc_id.as_str(), tokenize(d.channels.get(channel)?))))
        .filter(|(_, t)| !t.is_empty())
        .collect();
    let n = texts.len() as f64;
    let avg = texts.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
    let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
    let mut out = Vec::new();
    for (id, toks) in &texts {
        let mut score = 0.0;
        let mut any = false;
        for term in &terms {
            let tf = toks.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            any = true;
            let df = texts.iter().filter(|(_, t)| t.contains(term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = 1.0 - DEFAULT_B + DEFAULT_B * toks.len() as f64 / avg;
            score += idf * tf * (DEFAULT_K1 + 1.0) / (tf + DEFAULT_K1 * norm);
        }
        if any {
            out.push((id.to_string(), score));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn filter_oracle() -> Verdict {
    let spec = SyntheticSpec { tag_selectivities: vec![0.05, 0.2, 0.3], n_queries: 0, ..SyntheticSpec::new(3000, 16) };
    let mut corpus = searchgym_core::bench::generate_synthetic(&spec).unwrap();
    for (i, d) in corpus.documents.iter_mut().enumerate() {
        if i % 9 == 0 {
            d.metadata.remove("year");
        }
        if i % 4 == 0 {
            d.metadata.remove("topics");
        }
    }
    let snap = ingest(&corpus.dataset, corpus.corpus_jsonl().as_bytes()).unwrap();
    let docs = DocTable::new(snap.documents.iter().map(|d| d.doc_id.clone()));
    let index = StructuredIndex::build(&corpus.dataset, &snap, &docs);
    let eval = |f: &Filter| -> BTreeSet<String> {
        let (set, _) = eval_filter(&index, f).unwrap();
        set.members().iter().map(|&o| docs.id(o).to_owned()).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trees = 1000;
    for i in 0..trees {
        let f = random_filter(&mut rng, 4, spec.n_docs);
        check!(eval(&f) == linear_eval(&snap.documents, &f), "tree {i} differs from linear scan: {f:?}");
        let g = random_filter(&mut rng, 3, spec.n_docs);
        let pairs = [
            (
                Filter::not(Filter::And(vec![f.clone(), g.clone()])),
                Filter::Or(vec![Filter::not(f.clone()), Filter::not(g.clone())]),
            ),
            (
                Filter::not(Filter::Or(vec![f.clone(), g.clone()])),
                Filter::And(vec![Filter::not(f.clone()), Filter::not(g)]),
            ),
        ];
        for (l, r) in pairs {
            check!(eval(&l) == eval(&r), "De Morgan fails on tree {i}");
        }
    }

    // Hand values for D1="cat cat dog", D2="cat", D3="fish".
    let tiny = DatasetConfig {
        name: "tiny".into(),
        channels: vec![ChannelSpec { name: "body".into() }],
        metadata_fields: vec![],
        source: None,
    };
    let lines = [("D1", "cat cat dog"), ("D2", "cat"), ("D3", "fish")]
        .map(|(id, body)| json!({"doc_id": id, "channels": {"body": body}}).to_string())
        .join("\n");
    let snap = ingest(&tiny, lines.as_bytes()).unwrap();
    let tdocs = Arc::new(DocTable::new(snap.documents.iter().map(|d| d.doc_id.clone())));
    let lex = LexicalIndex::build(&snap, "body", tdocs);
    let idf = (1.0f64 + 1.5 / 2.5).ln();
    let avg = 5.0 / 3.0;
    let want = [
        ("D2", idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 / avg))),
        ("D1", idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * 3.0 / avg))),
    ];
    let (hits, _) = lex.search("cat", 10, None);
    check!(hits.len() == 2, "{} hits for 'cat'", hits.len());
    for (h, (id, s)) in hits.iter().zip(want) {
        check!(h.doc_id == id && (h.score - s).abs() < 1e-6, "{} {} vs {id} {s}", h.doc_id, h.score);
    }

    // The fixture corpus against a from-text computation.
    let dir = tempfile::tempdir().unwrap();
    let store = CheckpointStore::open(dir.path()).unwrap();
    let dag = load_fixture_dag(&store);
    let (app, _) = store.activate(&dag.app).unwrap();
    let ConfigNode::Dataset(ds) = read_node("dataset.json") else { unreachable!() };
    let fixture_docs = store.load_dataset(&dag.dataset, &ds).unwrap().documents;
    let lex = app.lexical().unwrap();
    let mut queries = 0;
    for q in ["graph search", "approximate nearest neighbor", "retrieval of dense vectors", "keyword ranking with term weighting"] {
        let (got, _) = lex.search(q, 20, None);
        check!(!got.is_empty(), "no lexical hits for '{q}'");
        check_ranking(&got, &bm25_by_hand(&fixture_docs, "abstract", q), 1e-6).map_err(|e| format!("'{q}': {e}"))?;
        queries += 1;
    }
    Ok(format!("{trees} trees match linear scan, De Morgan on all; BM25 hand fixture + {queries} corpus queries within 1e-6"))
}

fn check_monotone(rates: &BTreeMap<usize, f64>) -> Result<(), String> {
    let v: Vec<f64> = rates.values().copied().collect();
    check!(v.windows(2).all(|w| w[0] <= w[1]), "rates not monotone: {rates:?}");
    Ok(())
}

fn bench_arithmetic() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec { n_queries: 4, ..SyntheticSpec::new(600, 17) };
    let s = synthetic_app(dir.path(), &spec, VectorIndexConfig::default());
    let mut queries = s.corpus.queries.clone();
    for i in 0..6 {
        queries.push(BenchQuery {
            query_id: format!("absent-{i}"),
            text: format!("query without a planted answer {i}"),
            filter: None,
            gold_doc_ids: vec![format!("not-in-corpus-{i}")],
        });
    }
    let report = run_bench(&s.app, &queries, &DEFAULT_KS, SearchMode::Semantic);
    check!(report.queries == 10 && report.failed == 0, "{} queries, {} failed", report.queries, report.failed);
    check!(report.rate(10) == Some(0.4), "rate(10) = {:?}", report.rate(10));
    check_monotone(&report.rates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let ranks: Vec<Option<usize>> = (0..rng.gen_range(0..40))
            .map(|_| rng.gen_bool(0.7).then(|| rng.gen_range(1..150)))
            .collect();
        check_monotone(&retrieval_rates(&ranks, &DEFAULT_KS))?;
    }
    Ok("rate(10) = 0.4 over 10 queries; rates monotone on every run".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("plan equivalence", plan_equivalence),
        ("cost crossover", cost_crossover),
        ("postfilter widening", postfilter_widening),
        ("ivf quality", ivf_quality),
        ("config hash reproducibility", config_hashes),
        ("checkpoint reuse", checkpoint_reuse),
        ("hot-swap atomicity", hot_swap_atomicity),
        ("filter engine oracle", filter_oracle),
        ("bench arithmetic", bench_arithmetic),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match &verdict {
            Ok(detail) => format!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => format!("criterion {} {name}: FAIL ({why})", i + 1),
        };
        // Written straight to stderr so it shows without --nocapture.
        let _ = writeln!(std::io::stderr(), "{line}");
        if verdict.is_err() {
            failed.push(line);
        }
    }
    assert!(failed.is_empty(), "{}", failed.join("\n"));
}
