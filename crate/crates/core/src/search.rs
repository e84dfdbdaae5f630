//! Local and global counterfactual-evidence (CE) queries.
//!
//! A CE for a test node `v` is another test node with a different predicted
//! label, ranked by KS score. Every ranking in this module orders by KS
//! descending, then node id (or `(min, max)` pair) ascending.

use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::index::SphericalIndex;
use crate::ks::AggregatedTable;
use crate::model::{Label, PredictionTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    Indexed,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Exact => "exact",
            SearchMode::Indexed => "indexed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryStatus {
    Found,
    /// No candidate carries a different predicted label.
    NoCounterfactual,
    /// The query's indexed cluster holds no other node at all.
    EmptyCandidateCluster,
}

impl QueryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryStatus::Found => "found",
            QueryStatus::NoCounterfactual => "no-counterfactual",
            QueryStatus::EmptyCandidateCluster => "empty-candidate-cluster",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub node: NodeId,
    pub ks: f64,
}

impl Hit {
    #[inline]
    fn ranks_before(&self, other: &Hit) -> bool {
        self.ks > other.ks || (self.ks == other.ks && self.node < other.node)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeQueryResult {
    pub query: NodeId,
    pub mode: SearchMode,
    pub hits: Vec<Hit>,
    pub status: QueryStatus,
    /// Candidate nodes examined, whatever their label.
    pub candidates_scanned: usize,
}

/// Bounded list of the best `k` hits, kept sorted.
#[derive(Debug, Clone)]
pub struct TopKBucket {
    k: usize,
    items: Vec<Hit>,
}

impl TopKBucket {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k.min(1024) + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.k
    }

    pub fn items(&self) -> &[Hit] {
        &self.items
    }

    pub fn into_vec(self) -> Vec<Hit> {
        self.items
    }

    /// Inserts `hit` if the bucket has room or it outranks the last entry.
    /// Returns whether it was kept.
    pub fn insert(&mut self, hit: Hit) -> bool {
        if self.k == 0 {
            return false;
        }
        if self.is_full() && !hit.ranks_before(self.items.last().unwrap()) {
            return false;
        }
        let pos = self.items.partition_point(|h| h.ranks_before(&hit));
        self.items.insert(pos, hit);
        self.items.truncate(self.k);
        true
    }
}

pub fn topk_bucket_insert(bucket: &mut TopKBucket, candidate: Hit) -> bool {
    bucket.insert(candidate)
}

/// Unordered test-node pair stored as `(min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcePair {
    pub pair: (NodeId, NodeId),
    pub ks: f64,
}

impl GcePair {
    pub fn new(a: NodeId, b: NodeId, ks: f64) -> Self {
        Self {
            pair: (a.min(b), a.max(b)),
            ks,
        }
    }

    #[inline]
    fn ranks_before(&self, other: &GcePair) -> bool {
        self.ks > other.ks || (self.ks == other.ks && self.pair < other.pair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlobalStrategy {
    /// Best CE of every test node, deduplicated, then the top `k` of those.
    PerNodeTop1,
    /// Exact top `k` over every cross-label pair.
    FullPairwise,
}

impl fmt::Display for GlobalStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GlobalStrategy::PerNodeTop1 => "per-node-top1",
            GlobalStrategy::FullPairwise => "full-pairwise",
        })
    }
}

/// Test nodes grouped by predicted class, each group ascending.
#[derive(Debug, Clone)]
pub struct ClassPartition {
    groups: Vec<(Label, Vec<NodeId>)>,
}

impl ClassPartition {
    pub fn new(predictions: &PredictionTable, test_nodes: &[NodeId]) -> Result<Self> {
        let mut groups: Vec<(Label, Vec<NodeId>)> = Vec::new();
        let mut sorted = test_nodes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        for v in sorted {
            let label = predictions
                .predicted(v)
                .ok_or_else(|| Error::MissingNodes {
                    what: "predictions".into(),
                    nodes: vec![v],
                })?;
            match groups.binary_search_by_key(&label, |g| g.0) {
                Ok(i) => groups[i].1.push(v),
                Err(i) => groups.insert(i, (label, vec![v])),
            }
        }
        Ok(Self { groups })
    }

    pub fn num_classes(&self) -> usize {
        self.groups.len()
    }

    /// Groups of every class other than `label`.
    pub fn others(&self, label: Label) -> impl Iterator<Item = &[NodeId]> + '_ {
        self.groups
            .iter()
            .filter(move |g| g.0 != label)
            .map(|g| g.1.as_slice())
    }
}

/// Read-only query engine over precomputed aggregated vectors and labels.
pub struct CeSearcher<'a> {
    agg: &'a AggregatedTable,
    predictions: &'a PredictionTable,
    test_nodes: Vec<NodeId>,
    is_test: Vec<bool>,
    classes: ClassPartition,
}

impl<'a> CeSearcher<'a> {
    pub fn new(
        agg: &'a AggregatedTable,
        predictions: &'a PredictionTable,
        test_nodes: &[NodeId],
    ) -> Result<Self> {
        let mut nodes = test_nodes.to_vec();
        nodes.sort_unstable();
        nodes.dedup();
        let mut is_test = vec![false; agg.num_nodes()];
        for &v in &nodes {
            if v.index() >= agg.num_nodes() {
                return Err(Error::InvalidNode {
                    node: v,
                    num_nodes: agg.num_nodes(),
                });
            }
            is_test[v.index()] = true;
        }
        let classes = ClassPartition::new(predictions, &nodes)?;
        Ok(Self {
            agg,
            predictions,
            test_nodes: nodes,
            is_test,
            classes,
        })
    }

    pub fn test_nodes(&self) -> &[NodeId] {
        &self.test_nodes
    }

    pub fn aggregated(&self) -> &AggregatedTable {
        self.agg
    }

    pub fn predictions(&self) -> &PredictionTable {
        self.predictions
    }

    fn query_label(&self, v: NodeId) -> Result<Label> {
        if !self.is_test.get(v.index()).copied().unwrap_or(false) {
            return Err(Error::NotTestNode(v));
        }
        Ok(self
            .predictions
            .predicted(v)
            .expect("test nodes have predictions"))
    }

    fn check_k(k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        Ok(())
    }

    /// Linear scan over the test nodes of every other predicted class.
    pub fn local_ce_exact(&self, v: NodeId, k: usize) -> Result<CeQueryResult> {
        Self::check_k(k)?;
        let label = self.query_label(v)?;
        let mut bucket = TopKBucket::new(k);
        let mut scanned = 0;
        for group in self.classes.others(label) {
            scanned += group.len();
            for &u in group {
                bucket.insert(Hit {
                    node: u,
                    ks: self.agg.ks(v, u),
                });
            }
        }
        let status = if scanned == 0 {
            QueryStatus::NoCounterfactual
        } else {
            QueryStatus::Found
        };
        Ok(CeQueryResult {
            query: v,
            mode: SearchMode::Exact,
            hits: bucket.into_vec(),
            status,
            candidates_scanned: scanned,
        })
    }

    /// Same scan restricted to the query's indexed cluster.
    pub fn local_ce_indexed(
        &self,
        index: &SphericalIndex,
        v: NodeId,
        k: usize,
    ) -> Result<CeQueryResult> {
        Self::check_k(k)?;
        let label = self.query_label(v)?;
        let cluster = index.cluster_of(v)?;
        let mut bucket = TopKBucket::new(k);
        let mut scanned = 0;
        let mut cross = 0;
        for &u in cluster {
            if u == v {
                continue;
            }
            scanned += 1;
            if !self.is_test.get(u.index()).copied().unwrap_or(false) {
                continue;
            }
            if self.predictions.predicted(u) == Some(label) {
                continue;
            }
            cross += 1;
            bucket.insert(Hit {
                node: u,
                ks: self.agg.ks(v, u),
            });
        }
        let status = if scanned == 0 {
            QueryStatus::EmptyCandidateCluster
        } else if cross == 0 {
            QueryStatus::NoCounterfactual
        } else {
            QueryStatus::Found
        };
        Ok(CeQueryResult {
            query: v,
            mode: SearchMode::Indexed,
            hits: bucket.into_vec(),
            status,
            candidates_scanned: scanned,
        })
    }

    pub fn local_ce(
        &self,
        mode: SearchMode,
        index: Option<&SphericalIndex>,
        v: NodeId,
        k: usize,
    ) -> Result<CeQueryResult> {
        match (mode, index) {
            (SearchMode::Exact, _) => self.local_ce_exact(v, k),
            (SearchMode::Indexed, Some(index)) => self.local_ce_indexed(index, v, k),
            (SearchMode::Indexed, None) => {
                Err(Error::param("mode", "indexed search needs an index"))
            }
        }
    }

    /// Local top-`k` for every test node, in ascending node order.
    pub fn local_ce_all(
        &self,
        mode: SearchMode,
        index: Option<&SphericalIndex>,
        k: usize,
    ) -> Result<Vec<CeQueryResult>> {
        self.test_nodes
            .par_iter()
            .map(|&v| self.local_ce(mode, index, v, k))
            .collect()
    }

    /// Global top-`k` CE pairs.
    pub fn global_ce(
        &self,
        k: usize,
        mode: SearchMode,
        index: Option<&SphericalIndex>,
        strategy: GlobalStrategy,
    ) -> Result<Vec<GcePair>> {
        Self::check_k(k)?;
        match strategy {
            GlobalStrategy::PerNodeTop1 => {
                let best = self.local_ce_all(mode, index, 1)?;
                let mut seen = HashSet::new();
                let mut bucket = PairBucket::new(k);
                for r in best {
                    if let Some(h) = r.hits.first() {
                        let p = GcePair::new(r.query, h.node, h.ks);
                        if seen.insert(p.pair) {
                            bucket.insert(p);
                        }
                    }
                }
                Ok(bucket.items)
            }
            GlobalStrategy::FullPairwise => {
                if mode != SearchMode::Exact {
                    return Err(Error::param(
                        "strategy",
                        "full-pairwise search is exact only",
                    ));
                }
                let partial: Vec<PairBucket> = self
                    .test_nodes
                    .par_iter()
                    .map(|&v| {
                        let label = self.predictions.predicted(v).unwrap();
                        let mut bucket = PairBucket::new(k);
                        for group in self.classes.others(label) {
                            let start = group.partition_point(|&u| u <= v);
                            for &u in &group[start..] {
                                bucket.insert(GcePair::new(v, u, self.agg.ks(v, u)));
                            }
                        }
                        bucket
                    })
                    .collect();
                let mut merged = PairBucket::new(k);
                for b in partial {
                    for p in b.items {
                        merged.insert(p);
                    }
                }
                Ok(merged.items)
            }
        }
    }
}

struct PairBucket {
    k: usize,
    items: Vec<GcePair>,
}

impl PairBucket {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::new(),
        }
    }

    fn insert(&mut self, p: GcePair) {
        if self.items.len() >= self.k && !p.ranks_before(self.items.last().unwrap()) {
            return;
        }
        let pos = self.items.partition_point(|q| q.ranks_before(&p));
        self.items.insert(pos, p);
        self.items.truncate(self.k);
    }
}

// ---------------------------------------------------------------------------
// JSON-lines output

/// `{"query":v,"mode":"exact","status":"found","hits":[{"node":u,"ks":0.981200}]}`
pub fn result_json_line(r: &CeQueryResult) -> String {
    let hits = r
        .hits
        .iter()
        .map(|h| format!("{{\"node\":{},\"ks\":{:.6}}}", h.node, h.ks))
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "{{\"query\":{},\"mode\":\"{}\",\"status\":\"{}\",\"hits\":[{}]}}",
        r.query,
        r.mode,
        r.status.as_str(),
        hits
    )
}

/// `{"pair":[v,u],"ks":0.981200}`
pub fn pair_json_line(p: &GcePair) -> String {
    format!(
        "{{\"pair\":[{},{}],\"ks\":{:.6}}}",
        p.pair.0, p.pair.1, p.ks
    )
}

#[derive(Debug, Deserialize)]
struct ResultRecord {
    query: NodeId,
    mode: SearchMode,
    #[serde(default = "found")]
    status: QueryStatus,
    hits: Vec<Hit>,
}

fn found() -> QueryStatus {
    QueryStatus::Found
}

#[derive(Debug, Deserialize)]
struct PairRecord {
    pair: [NodeId; 2],
    ks: f64,
}

/// Parses local-result JSON lines. Scores carry the file's 6-decimal precision.
pub fn parse_result_lines(text: &str) -> Result<Vec<CeQueryResult>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let r: ResultRecord = serde_json::from_str(l)?;
            Ok(CeQueryResult {
                query: r.query,
                mode: r.mode,
                candidates_scanned: 0,
                status: r.status,
                hits: r.hits,
            })
        })
        .collect()
}

pub fn parse_pair_lines(text: &str) -> Result<Vec<GcePair>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let r: PairRecord = serde_json::from_str(l)?;
            Ok(GcePair::new(r.pair[0], r.pair[1], r.ks))
        })
        .collect()
}
