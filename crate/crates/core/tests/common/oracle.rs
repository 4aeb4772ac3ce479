//! Independent reference implementations for engine tests.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use searchgym_core::inverted::Filter;
use searchgym_core::schema::Document;
use serde_json::{json, Value};

fn random_date(rng: &mut ChaCha8Rng) -> String {
    format!("{}-{:02}-{:02}", rng.gen_range(1990..=2024), rng.gen_range(1..=12), rng.gen_range(1..=28))
}

/// A random, well-typed filter over the synthetic corpus schema.
pub fn random_filter(rng: &mut ChaCha8Rng, depth: u32, n_docs: usize) -> Filter {
    if depth == 0 || rng.gen_bool(0.4) {
        let opt = |rng: &mut ChaCha8Rng, v: Value| if rng.gen_bool(0.8) { Some(v) } else { None };
        return match rng.gen_range(0..8) {
            0 => Filter::eq("tag", format!("tag{}", rng.gen_range(0..4))),
            1 => Filter::In {
                field: "tag".into(),
                values: (0..rng.gen_range(1..4)).map(|_| json!(format!("tag{}", rng.gen_range(0..4)))).collect(),
            },
            2 => Filter::eq("topics", format!("t{}", rng.gen_range(0..7))),
            3 => Filter::In {
                field: "topics".into(),
                values: (0..rng.gen_range(1..3)).map(|_| json!(format!("t{}", rng.gen_range(0..7)))).collect(),
            },
            4 => {
                let lo = rng.gen_range(1985..2030);
                let hi = lo + rng.gen_range(-2..15);
                Filter::range("year", opt(rng, json!(lo)), opt(rng, json!(hi)))
            }
            5 => {
                let (a, b) = (random_date(rng), random_date(rng));
                Filter::range("published", opt(rng, json!(a.clone().min(b.clone()))), opt(rng, json!(a.max(b))))
            }
            6 => {
                if rng.gen_bool(0.5) {
                    Filter::eq("slot", rng.gen_range(0..n_docs as i64 + 2))
                } else {
                    let lo = rng.gen_range(0..n_docs as i64);
                    Filter::range("slot", Some(json!(lo)), Some(json!(lo + rng.gen_range(0..n_docs as i64 / 2 + 1))))
                }
            }
            _ => {
                let lo: f64 = rng.gen_range(0.0..1.0);
                let hi = lo + rng.gen_range(0.0..0.5);
                Filter::range("score", opt(rng, json!(lo)), opt(rng, json!(hi)))
            }
        };
    }
    let children = |rng: &mut ChaCha8Rng| (0..rng.gen_range(1..4)).map(|_| random_filter(rng, depth - 1, n_docs)).collect();
    match rng.gen_range(0..3) {
        0 => Filter::And(children(rng)),
        1 => Filter::Or(children(rng)),
        _ => Filter::not(random_filter(rng, depth - 1, n_docs)),
    }
}

fn cmp_values(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64()?.partial_cmp(&y.as_f64()?),
        (Value::String(x), Value::String(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

fn leaf_matches(stored: &Value, wanted: &Value) -> bool {
    match stored {
        Value::Array(items) => items.contains(wanted),
        other => cmp_values(other, wanted) == Some(Ordering::Equal),
    }
}

/// Evaluates `f` by scanning raw document metadata.
pub fn linear_eval(docs: &[Document], f: &Filter) -> BTreeSet<String> {
    docs.iter().filter(|d| matches(d, f)).map(|d| d.doc_id.clone()).collect()
}

fn matches(d: &Document, f: &Filter) -> bool {
    match f {
        Filter::Eq { field, value } => d.metadata.get(field).is_some_and(|v| leaf_matches(v, value)),
        Filter::In { field, values } => d.metadata.get(field).is_some_and(|v| values.iter().any(|w| leaf_matches(v, w))),
        Filter::Range { field, min, max } => d.metadata.get(field).is_some_and(|v| {
            let above = min.as_ref().is_none_or(|m| matches!(cmp_values(v, m), Some(Ordering::Greater | Ordering::Equal)));
            let below = max.as_ref().is_none_or(|m| matches!(cmp_values(v, m), Some(Ordering::Less | Ordering::Equal)));
            above && below
        }),
        Filter::And(cs) => cs.iter().all(|c| matches(d, c)),
        Filter::Or(cs) => cs.iter().any(|c| matches(d, c)),
        Filter::Not(c) => !matches(d, c),
    }
}

/// Top-k documents by max chunk score, ties by doc_id ascending.
/// `rows` holds (doc_id, chunk vector).
pub fn brute_force_topk(
    rows: &[(String, Vec<f32>)],
    query: &[f32],
    allowed: Option<&BTreeSet<String>>,
    k: usize,
) -> Vec<(String, f64)> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (doc, v) in rows {
        if allowed.is_some_and(|a| !a.contains(doc)) {
            continue;
        }
        let s: f64 = v.iter().zip(query).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
        let e = best.entry(doc.as_str()).or_insert(f64::NEG_INFINITY);
        if s > *e {
            *e = s;
        }
    }
    let mut all: Vec<(String, f64)> = best.into_iter().map(|(d, s)| (d.to_owned(), s)).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Checks `got` against an oracle ranking: same length, scores within `tol`,
/// and the same doc at every rank unless the oracle's scores there are tied
/// to within 1e-9 (summation order can split exact ties by one ulp).
pub fn check_ranking(got: &[searchgym_core::vindex::ScoredHit], want: &[(String, f64)], tol: f64) -> Result<(), String> {
    if got.len() != want.len() {
        return Err(format!("{} hits, oracle has {}", got.len(), want.len()));
    }
    for (i, (g, (id, s))) in got.iter().zip(want).enumerate() {
        if (g.score - s).abs() > tol {
            return Err(format!("rank {i}: score {} vs oracle {s}", g.score));
        }
        if &g.doc_id != id {
            let tied = want.iter().any(|(oid, os)| oid == &g.doc_id && (os - s).abs() <= 1e-9);
            if !tied {
                return Err(format!("rank {i}: {} vs oracle {id}", g.doc_id));
            }
        }
    }
    Ok(())
}
