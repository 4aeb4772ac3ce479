//! Structured engine: metadata filtering over an inverted index, and a BM25
//! lexical index over one channel.
//!
//! Filtering produces an unranked set. Every posting a leaf matches is
//! touched, so the cost of a filter grows with its output no matter how few
//! results the caller eventually keeps.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::docs::{DocSet, DocTable};
use crate::embed::tokenize;
use crate::error::{Error, Result, Violation};
use crate::schema::{DatasetConfig, DatasetSnapshot, FieldKind, MetaValue};
use crate::vindex::{top_k, ScoredHit};

/// Boolean predicate over metadata fields. Range bounds are inclusive.
#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    Eq { field: String, value: Value },
    In { field: String, values: Vec<Value> },
    Range { field: String, min: Option<Value>, max: Option<Value> },
    And(Vec<Filter>),
    Or(Vec<Filter>),
    Not(Box<Filter>),
}

impl Filter {
    pub fn eq(field: impl Into<String>, value: impl Into<Value>) -> Self {
        Filter::Eq {
            field: field.into(),
            value: value.into(),
        }
    }

    pub fn range(field: impl Into<String>, min: Option<Value>, max: Option<Value>) -> Self {
        Filter::Range {
            field: field.into(),
            min,
            max,
        }
    }

    pub fn not(child: Filter) -> Self {
        Filter::Not(Box::new(child))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFilter {
    op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    children: Option<Vec<WireFilter>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<Value>,
}

impl From<&Filter> for WireFilter {
    fn from(f: &Filter) -> Self {
        let blank = |op: &str| WireFilter {
            op: op.into(),
            field: None,
            value: None,
            children: None,
            min: None,
            max: None,
        };
        match f {
            Filter::Eq { field, value } => WireFilter {
                field: Some(field.clone()),
                value: Some(value.clone()),
                ..blank("eq")
            },
            Filter::In { field, values } => WireFilter {
                field: Some(field.clone()),
                value: Some(Value::Array(values.clone())),
                ..blank("in")
            },
            Filter::Range { field, min, max } => WireFilter {
                field: Some(field.clone()),
                min: min.clone(),
                max: max.clone(),
                ..blank("range")
            },
            Filter::And(c) => WireFilter {
                children: Some(c.iter().map(Into::into).collect()),
                ..blank("and")
            },
            Filter::Or(c) => WireFilter {
                children: Some(c.iter().map(Into::into).collect()),
                ..blank("or")
            },
            Filter::Not(c) => WireFilter {
                children: Some(vec![c.as_ref().into()]),
                ..blank("not")
            },
        }
    }
}

impl TryFrom<WireFilter> for Filter {
    type Error = String;

    fn try_from(w: WireFilter) -> std::result::Result<Self, String> {
        let field = |w: &WireFilter| w.field.clone().ok_or_else(|| format!("{:?} needs \"field\"", w.op));
        let children = |w: WireFilter| -> std::result::Result<Vec<Filter>, String> {
            w.children
                .ok_or_else(|| format!("{:?} needs \"children\"", w.op))?
                .into_iter()
                .map(Filter::try_from)
                .collect()
        };
        Ok(match w.op.as_str() {
            "eq" => Filter::Eq {
                field: field(&w)?,
                value: w.value.ok_or("\"eq\" needs \"value\"")?,
            },
            "in" => {
                let field = field(&w)?;
                match w.value {
                    Some(Value::Array(values)) => Filter::In { field, values },
                    _ => return Err("\"in\" needs an array \"value\"".into()),
                }
            }
            "range" => Filter::Range {
                field: field(&w)?,
                min: w.min,
                max: w.max,
            },
            "and" => Filter::And(children(w)?),
            "or" => Filter::Or(children(w)?),
            "not" => {
                let mut c = children(w)?;
                if c.len() != 1 {
                    return Err("\"not\" takes exactly one child".into());
                }
                Filter::Not(Box::new(c.remove(0)))
            }
            other => return Err(format!("unknown filter op {other:?}")),
        })
    }
}

impl Serialize for Filter {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WireFilter::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Filter {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Filter::try_from(WireFilter::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum FieldIndex {
    Postings(BTreeMap<String, Vec<u32>>),
    Ints(Vec<(i64, u32)>),
    Floats(Vec<(f64, u32)>),
    Dates(Vec<(String, u32)>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FieldEntry {
    kind: FieldKind,
    filterable: bool,
    index: Option<FieldIndex>,
}

/// Inverted metadata index over a dataset snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuredIndex {
    universe: usize,
    fields: BTreeMap<String, FieldEntry>,
}

/// A leaf predicate resolved against its field kind.
enum Leaf<'a> {
    Keys(&'a BTreeMap<String, Vec<u32>>, Vec<String>),
    Ints(&'a [(i64, u32)], Vec<(i64, i64)>),
    Floats(&'a [(f64, u32)], Vec<(f64, f64)>),
    Dates(&'a [(String, u32)], Vec<(Option<String>, Option<String>)>),
}

fn bad(field: &str, msg: impl Into<String>) -> Error {
    Error::Violations(vec![Violation::InvalidFilterValue(field.into(), msg.into())])
}

fn typed_point(field: &str, kind: FieldKind, v: &Value) -> Result<MetaValue> {
    let scalar_kind = if kind == FieldKind::KeywordList { FieldKind::Keyword } else { kind };
    MetaValue::typed(scalar_kind, v).ok_or_else(|| bad(field, format!("{v} is not a {}", scalar_kind.as_str())))
}

impl StructuredIndex {
    pub fn build(cfg: &DatasetConfig, snapshot: &DatasetSnapshot, docs: &DocTable) -> Self {
        let mut fields = BTreeMap::new();
        for spec in &cfg.metadata_fields {
            let index = spec.filterable.then(|| {
                let values = snapshot.documents.iter().filter_map(|d| {
                    let ord = docs.ordinal(&d.doc_id)?;
                    let v = MetaValue::typed(spec.kind, d.metadata.get(&spec.name)?)?;
                    Some((v, ord))
                });
                match spec.kind {
                    FieldKind::Keyword | FieldKind::KeywordList => {
                        let mut postings: BTreeMap<String, Vec<u32>> = BTreeMap::new();
                        for (v, ord) in values {
                            match v {
                                MetaValue::Keyword(s) => postings.entry(s).or_default().push(ord),
                                MetaValue::KeywordList(set) => {
                                    for s in set {
                                        postings.entry(s).or_default().push(ord);
                                    }
                                }
                                _ => {}
                            }
                        }
                        for p in postings.values_mut() {
                            p.sort_unstable();
                            p.dedup();
                        }
                        FieldIndex::Postings(postings)
                    }
                    FieldKind::Integer => {
                        let mut col: Vec<(i64, u32)> = values
                            .filter_map(|(v, o)| match v {
                                MetaValue::Integer(i) => Some((i, o)),
                                _ => None,
                            })
                            .collect();
                        col.sort_unstable();
                        FieldIndex::Ints(col)
                    }
                    FieldKind::Float => {
                        let mut col: Vec<(f64, u32)> = values
                            .filter_map(|(v, o)| match v {
                                MetaValue::Float(f) => Some((f, o)),
                                _ => None,
                            })
                            .collect();
                        col.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                        FieldIndex::Floats(col)
                    }
                    FieldKind::Date => {
                        let mut col: Vec<(String, u32)> = values
                            .filter_map(|(v, o)| match v {
                                MetaValue::Date(s) => Some((s, o)),
                                _ => None,
                            })
                            .collect();
                        col.sort_unstable();
                        FieldIndex::Dates(col)
                    }
                }
            });
            fields.insert(
                spec.name.clone(),
                FieldEntry {
                    kind: spec.kind,
                    filterable: spec.filterable,
                    index,
                },
            );
        }
        Self {
            universe: docs.len(),
            fields,
        }
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    /// Sorted posting list of a keyword value, if present.
    pub fn postings(&self, field: &str, value: &str) -> Option<&[u32]> {
        match self.fields.get(field)?.index.as_ref()? {
            FieldIndex::Postings(p) => p.get(value).map(Vec::as_slice),
            _ => None,
        }
    }

    /// Checks field names, filterability, kinds and value types without
    /// evaluating anything.
    pub fn validate(&self, f: &Filter) -> Vec<Violation> {
        let mut out = Vec::new();
        self.validate_into(f, &mut out);
        out
    }

    fn validate_into(&self, f: &Filter, out: &mut Vec<Violation>) {
        match f {
            Filter::And(c) | Filter::Or(c) => {
                if c.is_empty() {
                    out.push(Violation::EmptyComposite(if matches!(f, Filter::And(_)) { "and" } else { "or" }.into()));
                }
                for child in c {
                    self.validate_into(child, out);
                }
            }
            Filter::Not(c) => self.validate_into(c, out),
            leaf => {
                if let Err(Error::Violations(v)) = self.leaf(leaf) {
                    out.extend(v);
                }
            }
        }
    }

    fn leaf<'a>(&'a self, f: &Filter) -> Result<Leaf<'a>> {
        let (Filter::Eq { field, .. } | Filter::In { field, .. } | Filter::Range { field, .. }) = f else {
            unreachable!("leaf called on a composite filter")
        };
        let entry = self
            .fields
            .get(field)
            .ok_or_else(|| Error::Violations(vec![Violation::UnknownField(field.clone())]))?;
        let index = match (&entry.index, entry.filterable) {
            (Some(index), true) => index,
            _ => return Err(Error::Violations(vec![Violation::UnfilterableField(field.clone())])),
        };
        let points: Vec<&Value> = match f {
            Filter::Eq { value, .. } => vec![value],
            Filter::In { values, .. } => values.iter().collect(),
            _ => vec![],
        };

        if let Filter::Range { min, max, .. } = f {
            if !entry.kind.is_ordered() {
                return Err(Error::Violations(vec![Violation::RangeOnNonOrdered(field.clone())]));
            }
            let bound = |b: &Option<Value>| -> Result<Option<MetaValue>> {
                b.as_ref().map(|v| typed_point(field, entry.kind, v)).transpose()
            };
            let (lo, hi) = (bound(min)?, bound(max)?);
            return Ok(match index {
                FieldIndex::Ints(col) => {
                    let get = |m: Option<MetaValue>, d| match m {
                        Some(MetaValue::Integer(i)) => i,
                        _ => d,
                    };
                    Leaf::Ints(col, vec![(get(lo, i64::MIN), get(hi, i64::MAX))])
                }
                FieldIndex::Floats(col) => {
                    let get = |m: Option<MetaValue>, d| match m {
                        Some(MetaValue::Float(x)) => x,
                        _ => d,
                    };
                    Leaf::Floats(col, vec![(get(lo, f64::NEG_INFINITY), get(hi, f64::INFINITY))])
                }
                FieldIndex::Dates(col) => {
                    let get = |m: Option<MetaValue>| match m {
                        Some(MetaValue::Date(s)) => Some(s),
                        _ => None,
                    };
                    Leaf::Dates(col, vec![(get(lo), get(hi))])
                }
                FieldIndex::Postings(_) => unreachable!(),
            });
        }

        let typed: Vec<MetaValue> = points
            .iter()
            .map(|v| typed_point(field, entry.kind, v))
            .collect::<Result<_>>()?;
        Ok(match index {
            FieldIndex::Postings(p) => {
                let mut keys: Vec<String> = typed
                    .into_iter()
                    .filter_map(|m| match m {
                        MetaValue::Keyword(s) => Some(s),
                        _ => None,
                    })
                    .collect();
                keys.sort_unstable();
                keys.dedup();
                Leaf::Keys(p, keys)
            }
            FieldIndex::Ints(col) => {
                let mut pts: Vec<i64> = typed
                    .into_iter()
                    .filter_map(|m| if let MetaValue::Integer(i) = m { Some(i) } else { None })
                    .collect();
                pts.sort_unstable();
                pts.dedup();
                Leaf::Ints(col, pts.into_iter().map(|i| (i, i)).collect())
            }
            FieldIndex::Floats(col) => {
                let mut pts: Vec<f64> = typed
                    .into_iter()
                    .filter_map(|m| if let MetaValue::Float(x) = m { Some(x) } else { None })
                    .collect();
                pts.sort_unstable_by(f64::total_cmp);
                pts.dedup_by(|a, b| a == b);
                Leaf::Floats(col, pts.into_iter().map(|x| (x, x)).collect())
            }
            FieldIndex::Dates(col) => {
                let mut pts: Vec<String> = typed
                    .into_iter()
                    .filter_map(|m| if let MetaValue::Date(s) = m { Some(s) } else { None })
                    .collect();
                pts.sort_unstable();
                pts.dedup();
                Leaf::Dates(col, pts.into_iter().map(|s| (Some(s.clone()), Some(s))).collect())
            }
        })
    }

    /// Exact match set plus the number of posting entries touched.
    pub fn eval(&self, f: &Filter) -> Result<(DocSet, u64)> {
        let (members, scanned) = self.eval_sorted(f)?;
        Ok((DocSet::from_sorted(self.universe, members), scanned))
    }

    fn eval_sorted(&self, f: &Filter) -> Result<(Vec<u32>, u64)> {
        match f {
            Filter::And(children) => {
                if children.is_empty() {
                    return Err(Error::Violations(vec![Violation::EmptyComposite("and".into())]));
                }
                let mut scanned = 0;
                let mut sets = Vec::with_capacity(children.len());
                for c in children {
                    let (s, n) = self.eval_sorted(c)?;
                    scanned += n;
                    sets.push(s);
                }
                sets.sort_by_key(Vec::len);
                let mut acc = sets.remove(0);
                for s in &sets {
                    acc = intersect(&acc, s);
                }
                Ok((acc, scanned))
            }
            Filter::Or(children) => {
                if children.is_empty() {
                    return Err(Error::Violations(vec![Violation::EmptyComposite("or".into())]));
                }
                let mut scanned = 0;
                let mut all = Vec::new();
                for c in children {
                    let (s, n) = self.eval_sorted(c)?;
                    scanned += n;
                    all.extend(s);
                }
                all.sort_unstable();
                all.dedup();
                Ok((all, scanned))
            }
            Filter::Not(child) => {
                let (s, n) = self.eval_sorted(child)?;
                let mut out = Vec::with_capacity(self.universe - s.len());
                let mut it = s.iter().peekable();
                for ord in 0..self.universe as u32 {
                    if it.peek() == Some(&&ord) {
                        it.next();
                    } else {
                        out.push(ord);
                    }
                }
                Ok((out, n + self.universe as u64))
            }
            leaf => {
                let mut out = Vec::new();
                match self.leaf(leaf)? {
                    Leaf::Keys(p, keys) => {
                        for k in keys {
                            if let Some(list) = p.get(&k) {
                                out.extend_from_slice(list);
                            }
                        }
                    }
                    Leaf::Ints(col, spans) => {
                        for (lo, hi) in spans {
                            out.extend(slice_range(col, |v| *v < lo, |v| *v <= hi).iter().map(|e| e.1));
                        }
                    }
                    Leaf::Floats(col, spans) => {
                        for (lo, hi) in spans {
                            out.extend(slice_range(col, |v| *v < lo, |v| *v <= hi).iter().map(|e| e.1));
                        }
                    }
                    Leaf::Dates(col, spans) => {
                        for (lo, hi) in spans {
                            let below = |v: &String| lo.as_ref().is_some_and(|l| v < l);
                            let within = |v: &String| hi.as_ref().is_none_or(|h| v <= h);
                            out.extend(slice_range(col, below, within).iter().map(|e| e.1));
                        }
                    }
                }
                let scanned = out.len() as u64;
                out.sort_unstable();
                out.dedup();
                Ok((out, scanned))
            }
        }
    }

    /// Estimated fraction of the universe matching `f`. Leaves are exact:
    /// posting or column lengths, plus a union count when an `in` names
    /// several keywords (a keyword list can carry more than one). `and`
    /// takes the minimum, `or` the capped sum, `not` the complement.
    pub fn selectivity(&self, f: &Filter) -> Result<f64> {
        if self.universe == 0 {
            self.validate(f).into_iter().next().map_or(Ok(0.0), |v| Err(Error::Violations(vec![v])))
        } else {
            self.estimate(f)
        }
    }

    fn estimate(&self, f: &Filter) -> Result<f64> {
        match f {
            Filter::And(c) => {
                if c.is_empty() {
                    return Err(Error::Violations(vec![Violation::EmptyComposite("and".into())]));
                }
                c.iter().try_fold(1.0f64, |acc, x| Ok(acc.min(self.estimate(x)?)))
            }
            Filter::Or(c) => {
                if c.is_empty() {
                    return Err(Error::Violations(vec![Violation::EmptyComposite("or".into())]));
                }
                let sum = c.iter().try_fold(0.0f64, |acc, x| Ok::<_, Error>(acc + self.estimate(x)?))?;
                Ok(sum.min(1.0))
            }
            Filter::Not(c) => Ok(1.0 - self.estimate(c)?),
            leaf => {
                let count: usize = match self.leaf(leaf)? {
                    Leaf::Keys(p, mut keys) => {
                        keys.sort();
                        keys.dedup();
                        match keys.as_slice() {
                            [k] => p.get(k).map_or(0, Vec::len),
                            _ => {
                                let mut ords: Vec<u32> = keys.iter().filter_map(|k| p.get(k)).flatten().copied().collect();
                                ords.sort_unstable();
                                ords.dedup();
                                ords.len()
                            }
                        }
                    }
                    Leaf::Ints(col, mut spans) => {
                        spans.sort_unstable();
                        spans.dedup();
                        spans
                            .iter()
                            .map(|(lo, hi)| slice_range(col, |v| v < lo, |v| v <= hi).len())
                            .sum()
                    }
                    Leaf::Floats(col, mut spans) => {
                        spans.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                        spans.dedup();
                        spans
                            .iter()
                            .map(|(lo, hi)| slice_range(col, |v| v < lo, |v| v <= hi).len())
                            .sum()
                    }
                    Leaf::Dates(col, mut spans) => {
                        spans.sort();
                        spans.dedup();
                        spans
                            .iter()
                            .map(|(lo, hi)| {
                                let below = |v: &String| lo.as_ref().is_some_and(|l| v < l);
                                let within = |v: &String| hi.as_ref().is_none_or(|h| v <= h);
                                slice_range(col, below, within).len()
                            })
                            .sum()
                    }
                };
                Ok((count as f64 / self.universe as f64).min(1.0))
            }
        }
    }
}

/// Entries of a sorted column with `!below(v) && within(v)`, by binary search.
fn slice_range<T>(col: &[(T, u32)], below: impl Fn(&T) -> bool, within: impl Fn(&T) -> bool) -> &[(T, u32)] {
    let start = col.partition_point(|e| below(&e.0));
    let end = col.partition_point(|e| within(&e.0) || below(&e.0)).max(start);
    &col[start..end]
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Okapi BM25 over one channel with idf = ln(1 + (N − df + 0.5)/(df + 0.5)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexicalIndex {
    channel: String,
    postings: HashMap<String, Vec<(u32, u32)>>,
    doc_len: Vec<u32>,
    indexed: usize,
    avg_len: f64,
    pub k1: f64,
    pub b: f64,
    #[serde(skip)]
    docs: Arc<DocTable>,
}

impl LexicalIndex {
    pub fn build(snapshot: &DatasetSnapshot, channel: &str, docs: Arc<DocTable>) -> Self {
        let mut doc_len = vec![0u32; docs.len()];
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        for d in &snapshot.documents {
            let (Some(text), Some(ord)) = (d.channels.get(channel), docs.ordinal(&d.doc_id)) else {
                continue;
            };
            let tokens = tokenize(text);
            if tokens.is_empty() {
                continue;
            }
            doc_len[ord as usize] = tokens.len() as u32;
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((ord, n));
            }
        }
        for p in postings.values_mut() {
            p.sort_unstable();
        }
        let indexed = doc_len.iter().filter(|&&l| l > 0).count();
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        Self {
            channel: channel.to_owned(),
            postings,
            doc_len,
            indexed,
            avg_len: if indexed == 0 { 0.0 } else { total as f64 / indexed as f64 },
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            docs,
        }
    }

    /// Re-attaches the document table after deserialization.
    pub fn attach(mut self, docs: Arc<DocTable>) -> Self {
        self.docs = docs;
        self
    }

    pub fn channel(&self) -> &str {
        &self.channel
    }

    pub fn indexed_docs(&self) -> usize {
        self.indexed
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (self.indexed as f64 - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-k by BM25 over the distinct query terms. Returns the hits and the
    /// number of postings read.
    pub fn search(&self, query: &str, k: usize, allowed: Option<&DocSet>) -> (Vec<ScoredHit>, u64) {
        let mut terms = tokenize(query);
        terms.sort_unstable();
        terms.dedup();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        let mut scanned = 0u64;
        for t in &terms {
            let Some(list) = self.postings.get(t) else { continue };
            let idf = self.idf(t);
            for &(ord, tf) in list {
                scanned += 1;
                if allowed.is_some_and(|a| !a.contains(ord)) {
                    continue;
                }
                let tf = f64::from(tf);
                let len = f64::from(self.doc_len[ord as usize]);
                let norm = self.k1 * (1.0 - self.b + self.b * len / self.avg_len);
                *scores.entry(ord).or_default() += idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        let items = scores.into_iter().map(|(ord, s)| (s, ord, ())).collect();
        let hits = top_k(items, k)
            .into_iter()
            .map(|(score, ord, ())| ScoredHit {
                doc_id: self.docs.id(ord).to_owned(),
                score,
                chunk_index: 0,
            })
            .collect();
        (hits, scanned)
    }
}

/// Convenience for the standard signature: evaluate `f` against `index`.
pub fn eval_filter(index: &StructuredIndex, f: &Filter) -> Result<(DocSet, u64)> {
    index.eval(f)
}

pub fn bm25_search(index: &LexicalIndex, query: &str, k: usize, allowed: Option<&DocSet>) -> Vec<ScoredHit> {
    index.search(query, k, allowed).0
}
