//! Metrics over CE query results: average similarity, discrimination scores,
//! accuracy within the global top-k, and validation-set export.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, NodeId};
use crate::model::PredictionTable;
use crate::search::{CeQueryResult, GcePair, Hit};

/// How short or empty hit lists enter the average similarity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AsOptions {
    /// Divide by the number of hits instead of `k`.
    pub effective_k: bool,
    /// Leave nodes without hits out of the mean instead of counting them as 0.
    pub exclude_empty: bool,
}

/// Mean over queries of `(1/k) * sum of hit scores`.
pub fn average_similarity(results: &[CeQueryResult], k: usize, opts: AsOptions) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if results.is_empty() {
        return Err(Error::Empty("no query results".into()));
    }
    let mut total = 0.0;
    let mut counted = 0usize;
    for r in results {
        let hits = &r.hits[..r.hits.len().min(k)];
        if hits.is_empty() {
            if !opts.exclude_empty {
                counted += 1;
            }
            continue;
        }
        let denom = if opts.effective_k { hits.len() } else { k };
        total += hits.iter().map(|h| h.ks).sum::<f64>() / denom as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Empty("every query result is empty".into()));
    }
    Ok(total / counted as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ValueMatcher {
    Exact {
        value: f64,
    },
    /// Half-open `[lo, hi)`.
    Range {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureValuePredicate {
    pub feature: usize,
    pub matcher: ValueMatcher,
}

impl FeatureValuePredicate {
    pub fn exact(feature: usize, value: f64) -> Self {
        Self {
            feature,
            matcher: ValueMatcher::Exact { value },
        }
    }

    pub fn range(feature: usize, lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::param(
                "predicate",
                format!("empty range [{lo}, {hi})"),
            ));
        }
        Ok(Self {
            feature,
            matcher: ValueMatcher::Range { lo, hi },
        })
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        if self.feature >= dim {
            return Err(Error::param(
                "predicate",
                format!("feature {} out of range for dimension {dim}", self.feature),
            ));
        }
        Ok(())
    }

    pub fn matches(&self, x: f64) -> bool {
        match self.matcher {
            ValueMatcher::Exact { value } => x == value,
            ValueMatcher::Range { lo, hi } => lo <= x && x < hi,
        }
    }

    pub fn holds_at(&self, features: &FeatureMatrix, v: NodeId) -> bool {
        self.matches(features.row(v)[self.feature])
    }
}

impl fmt::Display for FeatureValuePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.matcher {
            ValueMatcher::Exact { value } => write!(f, "f{}={}", self.feature, value),
            ValueMatcher::Range { lo, hi } => write!(f, "f{} in [{}, {})", self.feature, lo, hi),
        }
    }
}

impl std::str::FromStr for FeatureValuePredicate {
    type Err = Error;

    /// `3=1` (exact) or `3:0.5..1.5` (half-open range).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::param(
                "predicate",
                format!("expected `F=V` or `F:LO..HI`, got `{s}`"),
            )
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        if let Some((f, v)) = s.split_once('=') {
            let feature = f.trim().parse().map_err(|_| bad())?;
            return Ok(Self::exact(feature, num(v)?));
        }
        if let Some((f, r)) = s.split_once(':') {
            let feature = f.trim().parse().map_err(|_| bad())?;
            let (lo, hi) = r.split_once("..").ok_or_else(bad)?;
            return Self::range(feature, num(lo)?, num(hi)?);
        }
        Err(bad())
    }
}

/// Share of the top-`k` hits of `v` that do not satisfy the predicate.
/// Divides by `k` unless `effective_k`, in which case by the hit count.
pub fn discrimination_score(
    predicate: &FeatureValuePredicate,
    features: &FeatureMatrix,
    v: NodeId,
    hits: &[Hit],
    k: usize,
    effective_k: bool,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    predicate.check(features.dim())?;
    if !predicate.holds_at(features, v) {
        return Err(Error::PredicateFalse(v));
    }
    let hits = &hits[..hits.len().min(k)];
    if hits.is_empty() {
        return Ok(0.0);
    }
    let differing = hits
        .iter()
        .filter(|h| !predicate.holds_at(features, h.node))
        .count();
    let denom = if effective_k { hits.len() } else { k };
    Ok(differing as f64 / denom as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DsRow {
    pub predicate: String,
    pub mean_ds: f64,
    /// Query nodes where the predicate holds.
    pub support: usize,
}

/// Mean DS per predicate over the queries where it holds, highest first.
/// Predicates that hold at no query are dropped with a warning.
pub fn dataset_discrimination_table(
    predicates: &[FeatureValuePredicate],
    features: &FeatureMatrix,
    results: &[CeQueryResult],
    k: usize,
    effective_k: bool,
) -> Result<Vec<DsRow>> {
    if predicates.is_empty() {
        return Err(Error::Empty("no feature predicates".into()));
    }
    let mut rows = Vec::with_capacity(predicates.len());
    for p in predicates {
        p.check(features.dim())?;
        let mut sum = 0.0;
        let mut support = 0;
        for r in results.iter().filter(|r| p.holds_at(features, r.query)) {
            sum += discrimination_score(p, features, r.query, &r.hits, k, effective_k)?;
            support += 1;
        }
        if support == 0 {
            warn!("predicate {p} holds at no query node; skipped");
            continue;
        }
        rows.push(DsRow {
            predicate: p.to_string(),
            mean_ds: sum / support as f64,
            support,
        });
    }
    rows.sort_by(|a, b| b.mean_ds.total_cmp(&a.mean_ds));
    Ok(rows)
}

/// Distinct nodes of the first `k` pairs, in first-appearance order.
pub fn gce_nodes(pairs: &[GcePair], k: usize) -> Vec<NodeId> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in pairs.iter().take(k) {
        for v in [p.pair.0, p.pair.1] {
            if seen.insert(v) {
                out.push(v);
            }
        }
    }
    out
}

fn accuracy_over(nodes: &[NodeId], predictions: &PredictionTable) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Empty("no nodes to score".into()));
    }
    let mut correct = 0usize;
    for &v in nodes {
        let truth = predictions
            .true_label(v)
            .ok_or(Error::MissingTrueLabel(v))?;
        if predictions.predicted(v) == Some(truth) {
            correct += 1;
        }
    }
    Ok(correct as f64 / nodes.len() as f64)
}

/// Prediction accuracy over the distinct nodes of the top-`k` pairs.
pub fn accuracy_within_topk_gce(
    pairs: &[GcePair],
    predictions: &PredictionTable,
    k: usize,
) -> Result<f64> {
    accuracy_over(&gce_nodes(pairs, k), predictions)
}

pub fn global_accuracy(predictions: &PredictionTable, test_nodes: &[NodeId]) -> Result<f64> {
    accuracy_over(test_nodes, predictions)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurvePoint {
    pub k: usize,
    pub nodes: usize,
    pub accuracy_topk: f64,
    pub accuracy_global: f64,
}

/// Accuracy within the top-`k` pairs for each `k` in `grid`, next to the
/// accuracy over all test nodes. `pairs` must hold at least `max(grid)`
/// pairs for every point to be meaningful; shorter lists use what exists.
pub fn error_curve(
    pairs: &[GcePair],
    predictions: &PredictionTable,
    test_nodes: &[NodeId],
    grid: &[usize],
) -> Result<Vec<ErrorCurvePoint>> {
    let global = global_accuracy(predictions, test_nodes)?;
    grid.iter()
        .map(|&k| {
            Ok(ErrorCurvePoint {
                k,
                nodes: gce_nodes(pairs, k).len(),
                accuracy_topk: accuracy_within_topk_gce(pairs, predictions, k)?,
                accuracy_global: global,
            })
        })
        .collect()
}

pub fn write_error_curve_csv(points: &[ErrorCurvePoint], path: &Path) -> Result<()> {
    let mut out = String::from("k,nodes,accuracy_topk,accuracy_global\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            p.k, p.nodes, p.accuracy_topk, p.accuracy_global
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_ds_table_csv(rows: &[DsRow], path: &Path) -> Result<()> {
    let mut out = String::from("rank,predicate,mean_ds,support\n");
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{},\"{}\",{:.6},{}\n",
            i + 1,
            r.predicate,
            r.mean_ds,
            r.support
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Aligned plain-text ranking.
pub fn format_ds_table(rows: &[DsRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.predicate.len())
        .max()
        .unwrap_or(0)
        .max(9);
    let mut out = format!(
        "{:>4}  {:<width$}  {:>8}  {:>7}\n",
        "rank", "predicate", "DS", "support"
    );
    for (i, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{:>4}  {:<width$}  {:>8.6}  {:>7}\n",
            i + 1,
            r.predicate,
            r.mean_ds,
            r.support
        ));
    }
    out
}

/// Writes the distinct nodes of the top-`k` pairs as a one-column CSV.
/// Returns the number of rows.
pub fn export_validation_set(pairs: &[GcePair], k: usize, path: &Path) -> Result<usize> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let nodes = gce_nodes(pairs, k);
    let mut out = String::from("node_id\n");
    for v in &nodes {
        out.push_str(&format!("{v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(nodes.len())
}

/// Rounds to the 6 decimals used in every text output.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub k: usize,
    pub nodes: usize,
    pub params: BTreeMap<String, serde_json::Value>,
}

impl MetricReport {
    pub fn new(metric: &str, value: f64, k: usize, nodes: usize) -> Self {
        Self {
            metric: metric.into(),
            value: round6(value),
            k,
            nodes,
            params: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
