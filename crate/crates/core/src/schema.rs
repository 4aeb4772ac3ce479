//! Dataset schemata: textual channels plus typed metadata, declared before any
//! document arrives, and the JSONL ingestion path that checks documents
//! against them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Keyword,
    KeywordList,
    Integer,
    Float,
    Date,
}

impl FieldKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Keyword => "keyword",
            FieldKind::KeywordList => "keyword_list",
            FieldKind::Integer => "integer",
            FieldKind::Float => "float",
            FieldKind::Date => "date",
        }
    }

    /// Whether range predicates make sense for this kind.
    pub fn is_ordered(self) -> bool {
        matches!(self, FieldKind::Integer | FieldKind::Float | FieldKind::Date)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetadataFieldSpec {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default = "default_true")]
    pub filterable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub metadata_fields: Vec<MetadataFieldSpec>,
    /// JSONL file the dataset layer is built from when no checkpoint exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl DatasetConfig {
    pub fn has_channel(&self, name: &str) -> bool {
        self.channels.iter().any(|c| c.name == name)
    }

    pub fn field(&self, name: &str) -> Option<&MetadataFieldSpec> {
        self.metadata_fields.iter().find(|f| f.name == name)
    }
}

/// One record: named text channels and untyped metadata values, interpreted
/// through the dataset's field kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub channels: BTreeMap<String, String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
}

/// A metadata value after checking it against its field kind.
#[derive(Debug, Clone, PartialEq)]
pub enum MetaValue {
    Keyword(String),
    KeywordList(BTreeSet<String>),
    Integer(i64),
    Float(f64),
    Date(String),
}

impl MetaValue {
    /// Interprets `value` as `kind`, or `None` on a type mismatch.
    pub fn typed(kind: FieldKind, value: &Value) -> Option<MetaValue> {
        match kind {
            FieldKind::Keyword => value.as_str().map(|s| MetaValue::Keyword(s.to_owned())),
            FieldKind::KeywordList => {
                let items = value.as_array()?;
                let mut set = BTreeSet::new();
                for item in items {
                    set.insert(item.as_str()?.to_owned());
                }
                Some(MetaValue::KeywordList(set))
            }
            FieldKind::Integer => value.as_i64().map(MetaValue::Integer),
            FieldKind::Float => value
                .as_f64()
                .filter(|f| f.is_finite())
                .map(MetaValue::Float),
            FieldKind::Date => value
                .as_str()
                .filter(|s| is_iso_date(s))
                .map(|s| MetaValue::Date(s.to_owned())),
        }
    }
}

/// Strict `YYYY-MM-DD` check including month lengths and leap years.
pub fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return false;
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        b[r].iter().try_fold(0u32, |acc, &c| {
            c.is_ascii_digit().then(|| acc * 10 + u32::from(c - b'0'))
        })
    };
    let (Some(year), Some(month), Some(day)) = (digits(0..4), digits(5..7), digits(8..10)) else {
        return false;
    };
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let days = match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        2 => 28,
        _ => return false,
    };
    (1..=days).contains(&day)
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

/// Checks every schema invariant. The result is sorted, so permuting the
/// channel or field lists never changes it.
pub fn validate_dataset_config(cfg: &DatasetConfig) -> Vec<Violation> {
    let mut out = BTreeSet::new();
    if cfg.name.trim().is_empty() {
        out.insert(Violation::EmptyName("dataset".into()));
    }
    if cfg.channels.is_empty() {
        out.insert(Violation::NoChannels);
    }
    let mut channels = HashSet::new();
    for c in &cfg.channels {
        if !is_identifier(&c.name) {
            out.insert(Violation::InvalidChannelName(c.name.clone()));
        }
        if !channels.insert(c.name.as_str()) {
            out.insert(Violation::DuplicateChannel(c.name.clone()));
        }
    }
    let mut fields = HashSet::new();
    for f in &cfg.metadata_fields {
        if !is_identifier(&f.name) {
            out.insert(Violation::InvalidFieldName(f.name.clone()));
        }
        if !fields.insert(f.name.as_str()) {
            out.insert(Violation::DuplicateField(f.name.clone()));
        }
        if channels.contains(f.name.as_str()) {
            out.insert(Violation::NameCollision(f.name.clone()));
        }
    }
    out.into_iter().collect()
}

/// Checks one document against a (valid) dataset config.
pub fn validate_document(cfg: &DatasetConfig, doc: &Document) -> Vec<Violation> {
    let mut out = Vec::new();
    if doc.doc_id.is_empty() {
        out.push(Violation::EmptyDocId);
    }
    for name in doc.channels.keys() {
        if !cfg.has_channel(name) {
            out.push(Violation::UnknownChannel(name.clone()));
        }
    }
    for (name, value) in &doc.metadata {
        match cfg.field(name) {
            None => out.push(Violation::UnknownField(name.clone())),
            Some(spec) => {
                if MetaValue::typed(spec.kind, value).is_none() {
                    out.push(Violation::TypeMismatch(name.clone(), spec.kind));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldStats {
    /// Documents carrying the field.
    pub present: usize,
    /// Distinct values (keyword lists count each member).
    pub distinct: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub fields: BTreeMap<String, FieldStats>,
}

impl DatasetStats {
    pub fn compute(cfg: &DatasetConfig, docs: &[Document]) -> Self {
        let mut fields = BTreeMap::new();
        for spec in &cfg.metadata_fields {
            let mut present = 0;
            let mut values = HashSet::new();
            for doc in docs {
                let Some(v) = doc.metadata.get(&spec.name) else { continue };
                present += 1;
                match v {
                    Value::Array(items) => values.extend(items.iter().map(|i| i.to_string())),
                    other => {
                        values.insert(other.to_string());
                    }
                }
            }
            fields.insert(
                spec.name.clone(),
                FieldStats {
                    present,
                    distinct: values.len(),
                },
            );
        }
        DatasetStats {
            count: docs.len(),
            fields,
        }
    }
}

/// A record that ingestion refused, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reject {
    pub line: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    pub violations: Vec<Violation>,
}

/// An immutable, ingested dataset. Documents keep ingestion order.
#[derive(Debug, Clone)]
pub struct DatasetSnapshot {
    pub documents: Vec<Document>,
    pub stats: DatasetStats,
    pub rejects: Vec<Reject>,
}

impl DatasetSnapshot {
    pub fn count(&self) -> usize {
        self.documents.len()
    }
}

/// Reads JSONL documents, keeping the valid ones. Blank lines are not
/// records; every other line is either accepted or reported in `rejects`.
pub fn ingest<R: BufRead>(cfg: &DatasetConfig, source: R) -> Result<DatasetSnapshot> {
    let violations = validate_dataset_config(cfg);
    if !violations.is_empty() {
        return Err(Error::Violations(violations));
    }
    let mut documents = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("<input line {line_no}>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = match serde_json::from_str(&line) {
            Ok(doc) => doc,
            Err(e) => {
                rejects.push(Reject {
                    line: line_no,
                    doc_id: None,
                    violations: vec![Violation::Malformed(e.to_string())],
                });
                continue;
            }
        };
        let mut v = validate_document(cfg, &doc);
        if v.is_empty() && seen.contains(&doc.doc_id) {
            v.push(Violation::DuplicateDocId(doc.doc_id.clone()));
        }
        if v.is_empty() {
            seen.insert(doc.doc_id.clone());
            documents.push(doc);
        } else {
            rejects.push(Reject {
                line: line_no,
                doc_id: Some(doc.doc_id),
                violations: v,
            });
        }
    }
    let stats = DatasetStats::compute(cfg, &documents);
    Ok(DatasetSnapshot {
        documents,
        stats,
        rejects,
    })
}
