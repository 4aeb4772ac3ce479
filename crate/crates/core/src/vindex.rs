//! Top-k vector search.
//!
//! Two index kinds share one interface. `flat` scores every candidate row and
//! is exact; it doubles as the oracle for everything else. `ivf` partitions
//! rows with k-means and probes only the clusters nearest the query, so the
//! work it does scales with k rather than with the corpus.
//!
//! A document's score is the maximum over its chunk scores. Results are
//! ordered by score descending, then doc id ascending.

use std::cmp::Ordering;
use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::docs::{DocSet, DocTable};
use crate::embed::VectorSetArtifact;
use crate::error::{Error, Result, Violation};
use crate::exec;

pub const DEFAULT_N_PROBE: usize = 8;
pub const DEFAULT_KMEANS_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    #[default]
    Flat,
    Ivf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorIndexConfig {
    #[serde(default)]
    pub kind: IndexKind,
    /// Defaults to ⌈√rows⌉ at build time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_clusters: Option<usize>,
    #[serde(default = "default_probe")]
    pub n_probe: usize,
    #[serde(default = "default_iters")]
    pub kmeans_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_probe() -> usize {
    DEFAULT_N_PROBE
}

fn default_iters() -> usize {
    DEFAULT_KMEANS_ITERS
}

impl Default for VectorIndexConfig {
    fn default() -> Self {
        Self {
            kind: IndexKind::Flat,
            n_clusters: None,
            n_probe: DEFAULT_N_PROBE,
            kmeans_iters: DEFAULT_KMEANS_ITERS,
            seed: 0,
        }
    }
}

impl VectorIndexConfig {
    pub fn ivf() -> Self {
        Self {
            kind: IndexKind::Ivf,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.kind == IndexKind::Ivf {
            if self.n_clusters == Some(0) {
                out.push(Violation::InvalidIndex("n_clusters must be positive".into()));
            }
            if self.n_probe == 0 {
                out.push(Violation::InvalidIndex("n_probe must be positive".into()));
            }
            if let Some(c) = self.n_clusters {
                if self.n_probe > c {
                    out.push(Violation::InvalidIndex(format!("n_probe {} exceeds n_clusters {c}", self.n_probe)));
                }
            }
        }
        if self.kmeans_iters == 0 {
            out.push(Violation::InvalidIndex("kmeans_iters must be at least 1".into()));
        }
        out
    }

    /// Cluster count for `rows` vectors.
    pub fn clusters_for(&self, rows: usize) -> usize {
        self.n_clusters
            .unwrap_or_else(|| (rows as f64).sqrt().ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub score: f64,
    pub chunk_index: u32,
}

/// Per-query work counters. Values, never shared state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounters {
    pub scored_vectors: u64,
    pub postings_scanned: u64,
    pub widen_rounds: u64,
}

impl CostCounters {
    pub fn add(&mut self, other: &CostCounters) {
        self.scored_vectors += other.scored_vectors;
        self.postings_scanned += other.postings_scanned;
        self.widen_rounds += other.widen_rounds;
    }
}

impl std::ops::AddAssign for CostCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.add(&rhs);
    }
}

/// Total order used for every ranked list: score descending, then key
/// ascending.
pub(crate) fn rank_order(a: (f64, u32), b: (f64, u32)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Keeps the best `k` of `items` (score, ordinal, payload) in rank order.
pub(crate) fn top_k<T>(mut items: Vec<(f64, u32, T)>, k: usize) -> Vec<(f64, u32, T)> {
    let cmp = |a: &(f64, u32, T), b: &(f64, u32, T)| rank_order((a.0, a.1), (b.0, b.1));
    if items.len() > k && k > 0 {
        items.select_nth_unstable_by(k - 1, cmp);
        items.truncate(k);
    }
    items.truncate(k);
    items.sort_unstable_by(cmp);
    items
}

/// Dot product accumulated in f64 in a fixed order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0f64; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += f64::from(x[i]) * f64::from(y[i]);
        }
    }
    let mut tail = 0f64;
    for (x, y) in ra.iter().zip(rb) {
        tail += f64::from(*x) * f64::from(*y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    let (ca, ra) = a.split_at(a.len() - a.len() % 8);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(8).zip(cb.chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut s = acc.iter().sum::<f32>();
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Persistable IVF state: centroids (row-major) and per-cluster row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvfLayout {
    pub centroids: Vec<f32>,
    pub lists: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
struct Ivf {
    layout: IvfLayout,
    /// Squared centroid norms.
    norms: Vec<f32>,
    n_probe: usize,
}

#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    data: Vec<f32>,
    row_doc: Vec<u32>,
    row_chunk: Vec<u32>,
    doc_rows: Vec<Range<u32>>,
    indexed_docs: usize,
    docs: Arc<DocTable>,
    ivf: Option<Ivf>,
}

/// Builds an index whose document table is derived from the artifact itself.
pub fn build_index(cfg: &VectorIndexConfig, artifact: VectorSetArtifact) -> Result<VectorIndex> {
    let docs = Arc::new(DocTable::new(artifact.rows.iter().map(|r| r.doc_id.clone())));
    VectorIndex::build(cfg, artifact, docs)
}

impl VectorIndex {
    pub fn build(cfg: &VectorIndexConfig, artifact: VectorSetArtifact, docs: Arc<DocTable>) -> Result<Self> {
        let mut index = Self::flat(artifact, docs)?;
        if cfg.kind == IndexKind::Ivf {
            let violations = cfg.check();
            if !violations.is_empty() {
                return Err(Error::Violations(violations));
            }
            let rows = index.row_count();
            let clusters = cfg.clusters_for(rows);
            if rows == 0 || clusters > rows {
                return Err(Error::MoreClustersThanPoints { clusters, points: rows });
            }
            let layout = kmeans(&index.data, index.dim, clusters, cfg.kmeans_iters, cfg.seed);
            index.ivf = Some(Ivf::new(layout, cfg.n_probe.min(clusters), index.dim));
        }
        Ok(index)
    }

    /// Rebuilds an IVF index from a persisted layout without re-clustering.
    pub fn with_layout(
        cfg: &VectorIndexConfig,
        artifact: VectorSetArtifact,
        docs: Arc<DocTable>,
        layout: IvfLayout,
    ) -> Result<Self> {
        let mut index = Self::flat(artifact, docs)?;
        let clusters = layout.lists.len();
        let rows: usize = layout.lists.iter().map(Vec::len).sum();
        if layout.centroids.len() != clusters * index.dim || rows != index.row_count() {
            return Err(Error::Corrupt("ivf layout does not match its vectors".into()));
        }
        index.ivf = Some(Ivf::new(layout, cfg.n_probe.min(clusters).max(1), index.dim));
        Ok(index)
    }

    fn flat(artifact: VectorSetArtifact, docs: Arc<DocTable>) -> Result<Self> {
        let mut row_doc = Vec::with_capacity(artifact.count());
        let mut row_chunk = Vec::with_capacity(artifact.count());
        let mut doc_rows = vec![0..0; docs.len()];
        let mut indexed_docs = 0;
        for (row, r) in artifact.rows.iter().enumerate() {
            let ord = docs
                .ordinal(&r.doc_id)
                .ok_or_else(|| Error::Corrupt(format!("vector row for unknown doc {:?}", r.doc_id)))?;
            let span = &mut doc_rows[ord as usize];
            if span.start == span.end {
                *span = row as u32..row as u32 + 1;
                indexed_docs += 1;
            } else if span.end == row as u32 {
                span.end += 1;
            } else {
                return Err(Error::Corrupt(format!("chunks of {:?} are not contiguous", r.doc_id)));
            }
            row_doc.push(ord);
            row_chunk.push(r.chunk_index);
        }
        Ok(Self {
            dim: artifact.dim,
            data: artifact.data,
            row_doc,
            row_chunk,
            doc_rows,
            indexed_docs,
            docs,
            ivf: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_count(&self) -> usize {
        self.row_doc.len()
    }

    /// Documents with at least one vector.
    pub fn doc_count(&self) -> usize {
        self.indexed_docs
    }

    pub fn docs(&self) -> &Arc<DocTable> {
        &self.docs
    }

    pub fn kind(&self) -> IndexKind {
        if self.ivf.is_some() {
            IndexKind::Ivf
        } else {
            IndexKind::Flat
        }
    }

    pub fn ivf_layout(&self) -> Option<&IvfLayout> {
        self.ivf.as_ref().map(|i| &i.layout)
    }

    /// Sizes of the IVF clusters, if any.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.ivf
            .as_ref()
            .map(|i| i.layout.lists.iter().map(Vec::len).collect())
            .unwrap_or_default()
    }

    fn row(&self, row: u32) -> &[f32] {
        let r = row as usize;
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(())
    }

    /// Top-k documents, optionally restricted to `allowed`.
    ///
    /// Flat indexes score every candidate row. IVF indexes probe the
    /// `n_probe` nearest clusters, and keep probing (in centroid order) until
    /// `k` documents are found; with `allowed` they skip disallowed rows and
    /// fall back to all clusters if the first probe comes up short.
    pub fn knn(&self, query: &[f32], k: usize, allowed: Option<&DocSet>) -> Result<(Vec<ScoredHit>, CostCounters)> {
        let (raw, c) = self.knn_raw(query, k, allowed)?;
        Ok((self.materialize(&raw), c))
    }

    /// Exact top-k over only the rows of `allowed` documents, whatever the
    /// index kind. Cost is the number of rows those documents own.
    pub fn knn_within(&self, query: &[f32], k: usize, allowed: &DocSet) -> Result<(Vec<ScoredHit>, CostCounters)> {
        let (raw, c) = self.knn_within_raw(query, k, allowed)?;
        Ok((self.materialize(&raw), c))
    }

    pub(crate) fn knn_raw(&self, query: &[f32], k: usize, allowed: Option<&DocSet>) -> Result<(Vec<RawHit>, CostCounters)> {
        self.check_query(query)?;
        if k == 0 {
            return Ok((vec![], CostCounters::default()));
        }
        match (&self.ivf, allowed) {
            (None, None) => {
                let mut best = Best::new(self.docs.len());
                for row in 0..self.row_count() as u32 {
                    best.offer(self, row, dot(query, self.row(row)));
                }
                Ok(finish(best, k))
            }
            (None, Some(allowed)) => self.knn_within_raw(query, k, allowed),
            (Some(ivf), _) => Ok(self.knn_ivf(ivf, query, k, allowed)),
        }
    }

    pub(crate) fn knn_within_raw(&self, query: &[f32], k: usize, allowed: &DocSet) -> Result<(Vec<RawHit>, CostCounters)> {
        self.check_query(query)?;
        if k == 0 {
            return Ok((vec![], CostCounters::default()));
        }
        let mut best = Best::new(self.docs.len());
        for &ord in allowed.members() {
            if let Some(span) = self.doc_rows.get(ord as usize) {
                for row in span.clone() {
                    best.offer(self, row, dot(query, self.row(row)));
                }
            }
        }
        Ok(finish(best, k))
    }

    fn knn_ivf(&self, ivf: &Ivf, query: &[f32], k: usize, allowed: Option<&DocSet>) -> (Vec<RawHit>, CostCounters) {
        let order = ivf.probe_order(query, self.dim);
        let mut best = Best::new(self.docs.len());
        let mut probed = 0;
        let probe = |best: &mut Best, cluster: usize| {
            for &row in &ivf.layout.lists[cluster] {
                if allowed.is_some_and(|a| !a.contains(self.row_doc[row as usize])) {
                    continue;
                }
                best.offer(self, row, dot(query, self.row(row)));
            }
        };
        while probed < order.len() && probed < ivf.n_probe {
            probe(&mut best, order[probed]);
            probed += 1;
        }
        if best.touched.len() < k {
            // Unrestricted queries widen one cluster at a time; restricted
            // ones fall back to every remaining cluster.
            while probed < order.len() && (allowed.is_some() || best.touched.len() < k) {
                probe(&mut best, order[probed]);
                probed += 1;
            }
        }
        finish(best, k)
    }

    pub(crate) fn materialize(&self, raw: &[RawHit]) -> Vec<ScoredHit> {
        raw.iter()
            .map(|h| ScoredHit {
                doc_id: self.docs.id(h.ord).to_owned(),
                score: h.score,
                chunk_index: h.chunk,
            })
            .collect()
    }
}

/// A hit before its ordinal is resolved to a doc id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RawHit {
    pub score: f64,
    pub ord: u32,
    pub chunk: u32,
}

fn finish(best: Best, k: usize) -> (Vec<RawHit>, CostCounters) {
    let counters = CostCounters {
        scored_vectors: best.scored,
        ..CostCounters::default()
    };
    let items: Vec<(f64, u32, u32)> = best
        .touched
        .iter()
        .map(|&ord| {
            let (score, chunk) = best.slots[ord as usize];
            (score, ord, chunk)
        })
        .collect();
    let hits = top_k(items, k)
        .into_iter()
        .map(|(score, ord, chunk)| RawHit { score, ord, chunk })
        .collect();
    (hits, counters)
}

/// Per-document best chunk score while scanning.
struct Best {
    slots: Vec<(f64, u32)>,
    touched: Vec<u32>,
    scored: u64,
}

impl Best {
    fn new(docs: usize) -> Self {
        Self {
            slots: vec![(f64::NEG_INFINITY, u32::MAX); docs],
            touched: Vec::new(),
            scored: 0,
        }
    }

    #[inline]
    fn offer(&mut self, index: &VectorIndex, row: u32, score: f64) {
        self.scored += 1;
        let ord = index.row_doc[row as usize];
        let chunk = index.row_chunk[row as usize];
        let slot = &mut self.slots[ord as usize];
        if slot.1 == u32::MAX {
            self.touched.push(ord);
            *slot = (score, chunk);
        } else if score > slot.0 || (score == slot.0 && chunk < slot.1) {
            *slot = (score, chunk);
        }
    }
}

impl Ivf {
    fn new(layout: IvfLayout, n_probe: usize, dim: usize) -> Self {
        let norms = layout.centroids.chunks_exact(dim.max(1)).map(|c| dot_f32(c, c)).collect();
        Self { layout, norms, n_probe }
    }

    /// Clusters ordered nearest-first in Euclidean distance.
    fn probe_order(&self, query: &[f32], dim: usize) -> Vec<usize> {
        let mut keyed: Vec<(f32, usize)> = self
            .layout
            .centroids
            .chunks_exact(dim)
            .zip(&self.norms)
            .enumerate()
            .map(|(i, (c, n))| (n - 2.0 * dot_f32(query, c), i))
            .collect();
        keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.into_iter().map(|(_, i)| i).collect()
    }
}

fn nearest(x: &[f32], centroids: &[f32], norms: &[f32], dim: usize) -> u32 {
    let mut best = (f32::INFINITY, 0u32);
    for (i, (c, n)) in centroids.chunks_exact(dim).zip(norms).enumerate() {
        let d = n - 2.0 * dot_f32(x, c);
        if d < best.0 {
            best = (d, i as u32);
        }
    }
    best.1
}

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by `iters` rounds of Lloyd's algorithm.
/// Deterministic for a given seed; empty clusters keep their centroid.
pub fn kmeans(data: &[f32], dim: usize, clusters: usize, iters: usize, seed: u64) -> IvfLayout {
    let n = data.len() / dim;
    let point = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = Vec::with_capacity(clusters * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<f32> = exec::map_range(n, |i| sq_dist(point(i), point(first)));
    for _ in 1..clusters {
        let total: f64 = d2.iter().map(|&d| f64::from(d)).sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += f64::from(d);
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = point(pick).to_vec();
        let updated = exec::map_range(n, |i| d2[i].min(sq_dist(point(i), &c)));
        d2 = updated;
        centroids.extend_from_slice(&c);
    }

    let mut assign = vec![u32::MAX; n];
    for _ in 0..iters {
        let norms: Vec<f32> = centroids.chunks_exact(dim).map(|c| dot_f32(c, c)).collect();
        let next = exec::map_range(n, |i| nearest(point(i), &centroids, &norms, dim));
        let changed = next != assign;
        assign = next;
        if !changed {
            break;
        }
        let mut sums = vec![0f64; clusters * dim];
        let mut counts = vec![0usize; clusters];
        for (i, &c) in assign.iter().enumerate() {
            counts[c as usize] += 1;
            let s = &mut sums[c as usize * dim..(c as usize + 1) * dim];
            for (acc, &x) in s.iter_mut().zip(point(i)) {
                *acc += f64::from(x);
            }
        }
        for c in 0..clusters {
            if counts[c] == 0 {
                continue;
            }
            for j in 0..dim {
                centroids[c * dim + j] = (sums[c * dim + j] / counts[c] as f64) as f32;
            }
        }
    }
    let norms: Vec<f32> = centroids.chunks_exact(dim).map(|c| dot_f32(c, c)).collect();
    let final_assign = exec::map_range(n, |i| nearest(point(i), &centroids, &norms, dim));
    let mut lists = vec![Vec::new(); clusters];
    for (row, c) in final_assign.into_iter().enumerate() {
        lists[c as usize].push(row as u32);
    }
    IvfLayout { centroids, lists }
}
