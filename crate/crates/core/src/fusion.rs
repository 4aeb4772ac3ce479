//! Reranker: merges ranked lists from several engines into one.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Violation;
use crate::vindex::ScoredHit;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMethod {
    #[default]
    Rrf,
    WeightedSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    #[serde(default)]
    pub method: FusionMethod,
    #[serde(default = "default_rrf_k")]
    pub rrf_k: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, f64>,
}

fn default_rrf_k() -> u32 {
    60
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            method: FusionMethod::Rrf,
            rrf_k: default_rrf_k(),
            weights: BTreeMap::new(),
        }
    }
}

impl FusionConfig {
    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.rrf_k == 0 {
            out.push(Violation::InvalidFusion("rrf_k must be positive".into()));
        }
        if self.weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            out.push(Violation::InvalidFusion("weights must be finite and non-negative".into()));
        }
        if self.method == FusionMethod::WeightedSum && !self.weights.values().any(|w| *w > 0.0) {
            out.push(Violation::InvalidFusion("weighted_sum needs at least one positive weight".into()));
        }
        out
    }
}

/// Merges `lists` (engine name → ranked hits) into the top `k`.
///
/// RRF scores each document by Σ 1/(rrf_k + rank) over the lists that contain
/// it, ranks starting at 1. Weighted sum min-max normalizes each list to
/// [0, 1] (a list whose scores are all equal normalizes to 1) and adds the
/// engine weights; engines without a weight contribute nothing.
pub fn fuse(cfg: &FusionConfig, lists: &BTreeMap<String, Vec<ScoredHit>>, k: usize) -> Vec<ScoredHit> {
    let mut fused: HashMap<&str, (f64, u32)> = HashMap::new();
    for (engine, hits) in lists {
        let weight = match cfg.method {
            FusionMethod::Rrf => 1.0,
            FusionMethod::WeightedSum => cfg.weights.get(engine).copied().unwrap_or(0.0),
        };
        let (lo, hi) = hits.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| {
            (lo.min(h.score), hi.max(h.score))
        });
        let mut seen = std::collections::HashSet::new();
        for (i, h) in hits.iter().enumerate() {
            if !seen.insert(h.doc_id.as_str()) {
                continue;
            }
            let contribution = match cfg.method {
                FusionMethod::Rrf => 1.0 / (f64::from(cfg.rrf_k) + (i + 1) as f64),
                FusionMethod::WeightedSum => {
                    let norm = if hi > lo { (h.score - lo) / (hi - lo) } else { 1.0 };
                    weight * norm
                }
            };
            let entry = fused.entry(h.doc_id.as_str()).or_insert((0.0, h.chunk_index));
            entry.0 += contribution;
        }
    }
    let mut out: Vec<ScoredHit> = fused
        .into_iter()
        .map(|(doc_id, (score, chunk_index))| ScoredHit {
            doc_id: doc_id.to_owned(),
            score,
            chunk_index,
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
    out.truncate(k);
    out
}
