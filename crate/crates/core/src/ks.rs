//! Kernel-based similarity (KS) between L-hop anchored neighborhoods.
//!
//! Each iteration replaces a node's vector by `alpha` times itself plus
//! `(1 - alpha)` times the cosine-weighted mean of its neighbors' vectors.
//! The per-node sum over iterations `0..=L` is the aggregated vector, and the
//! KS score of two nodes is the cosine of their aggregated vectors.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph, NodeId};
use crate::matrix::DenseMatrix;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_HOPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsParams {
    pub alpha: f64,
    pub hops: usize,
}

impl Default for KsParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            hops: DEFAULT_HOPS,
        }
    }
}

impl KsParams {
    pub fn new(alpha: f64, hops: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", format!("{alpha} not in [0, 1]")));
        }
        Ok(Self { alpha, hops })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine from a precomputed dot product and norms. Zero norm gives 0.
#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

/// Cosine similarity, clamped to `[-1, 1]`; 0 if either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine".into(),
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(cosine_from_parts(dot(a, b), norm(a), norm(b)))
}

fn check_aligned(features: &FeatureMatrix, graph: &Graph) -> Result<()> {
    if features.num_nodes() != graph.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "feature rows vs graph nodes".into(),
            expected: graph.num_nodes(),
            actual: features.num_nodes(),
        });
    }
    Ok(())
}

/// One propagation step over all nodes.
fn propagate_step(current: &DenseMatrix, graph: &Graph, alpha: f64) -> DenseMatrix {
    let d = current.cols();
    let norms: Vec<f64> = current.iter_rows().map(norm).collect();
    let mut next = DenseMatrix::zeros(current.rows(), d);
    if d == 0 {
        return next;
    }
    next.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(v, out)| {
            let xv = current.row(v);
            let neighbors = graph.adjacent(v);
            if neighbors.is_empty() {
                for (o, &x) in out.iter_mut().zip(xv) {
                    *o = alpha * x;
                }
                return;
            }
            let mut acc = vec![0.0; d];
            for &u in neighbors {
                let xu = current.row(u.index());
                let w = cosine_from_parts(dot(xv, xu), norms[v], norms[u.index()]);
                for (a, &x) in acc.iter_mut().zip(xu) {
                    *a += w * x;
                }
            }
            let scale = (1.0 - alpha) / neighbors.len() as f64;
            for ((o, &x), &a) in out.iter_mut().zip(xv).zip(&acc) {
                *o = alpha * x + scale * a;
            }
        });
    next
}

/// Returns `[x^0, x^1, ..., x^L]`, with `x^0` the raw features.
pub fn ks_propagate(
    features: &FeatureMatrix,
    graph: &Graph,
    params: KsParams,
) -> Result<Vec<DenseMatrix>> {
    check_aligned(features, graph)?;
    let mut out = Vec::with_capacity(params.hops + 1);
    out.push(features.matrix().clone());
    for _ in 0..params.hops {
        let next = propagate_step(out.last().unwrap(), graph, params.alpha);
        out.push(next);
    }
    Ok(out)
}

/// Element-wise sum of the propagated matrices, accumulated in iteration order.
pub fn aggregate(propagated: &[DenseMatrix]) -> Result<AggregatedTable> {
    let (first, rest) = propagated
        .split_first()
        .ok_or_else(|| Error::Empty("no propagated matrices to aggregate".into()))?;
    let mut sum = first.clone();
    for m in rest {
        if m.rows() != sum.rows() || m.cols() != sum.cols() {
            return Err(Error::DimensionMismatch {
                context: "aggregate".into(),
                expected: sum.as_slice().len(),
                actual: m.as_slice().len(),
            });
        }
        for (s, &x) in sum.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *s += x;
        }
    }
    AggregatedTable::new(sum)
}

/// Aggregated vectors for every node without holding all iterations in memory.
/// Bit-identical to `aggregate(&ks_propagate(..)?)`.
pub fn aggregated_vectors(
    features: &FeatureMatrix,
    graph: &Graph,
    params: KsParams,
) -> Result<AggregatedTable> {
    check_aligned(features, graph)?;
    let mut current = features.matrix().clone();
    let mut sum = current.clone();
    for _ in 0..params.hops {
        current = propagate_step(&current, graph, params.alpha);
        for (s, &x) in sum.as_mut_slice().iter_mut().zip(current.as_slice()) {
            *s += x;
        }
    }
    AggregatedTable::new(sum)
}

/// Per-node aggregated vectors with cached Euclidean norms.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedTable {
    vectors: DenseMatrix,
    norms: Vec<f64>,
}

impl AggregatedTable {
    pub fn new(vectors: DenseMatrix) -> Result<Self> {
        if let Some(i) = vectors.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "aggregated vectors".into(),
                node: NodeId::from(i / vectors.cols().max(1)),
                column: i % vectors.cols().max(1),
            });
        }
        let norms = vectors.iter_rows().map(norm).collect();
        Ok(Self { vectors, norms })
    }

    pub fn num_nodes(&self) -> usize {
        self.vectors.rows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    #[inline]
    pub fn vector(&self, v: NodeId) -> &[f64] {
        self.vectors.row(v.index())
    }

    #[inline]
    pub fn norm(&self, v: NodeId) -> f64 {
        self.norms[v.index()]
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.vectors
    }

    /// KS score without bounds checks; panics on an out-of-range node.
    #[inline]
    pub fn ks(&self, v: NodeId, u: NodeId) -> f64 {
        if v == u && self.norm(v) > 0.0 {
            return 1.0;
        }
        cosine_from_parts(
            dot(self.vector(v), self.vector(u)),
            self.norm(v),
            self.norm(u),
        )
    }

    pub fn ks_score(&self, v: NodeId, u: NodeId) -> Result<f64> {
        for n in [v, u] {
            if n.index() >= self.num_nodes() {
                return Err(Error::InvalidNode {
                    node: n,
                    num_nodes: self.num_nodes(),
                });
            }
        }
        Ok(self.ks(v, u))
    }
}

/// Provenance recorded next to an aggregated-vector cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub format_version: u32,
    pub alpha: f64,
    pub hops: usize,
    pub num_nodes: usize,
    pub dim: usize,
    pub edges_sha256: String,
    pub features_sha256: String,
    /// Checksum of the binary table itself.
    pub cache_sha256: String,
}

/// Writes the binary table and its `.json` sidecar; returns the sidecar.
pub fn write_cache(
    path: &Path,
    table: &AggregatedTable,
    params: KsParams,
    edges_sha256: String,
    features_sha256: String,
) -> Result<CacheMeta> {
    let bytes = artifact::encode_table(table.matrix());
    artifact::write_bytes(path, &bytes)?;
    let meta = CacheMeta {
        format_version: artifact::TABLE_VERSION,
        alpha: params.alpha,
        hops: params.hops,
        num_nodes: table.num_nodes(),
        dim: table.dim(),
        edges_sha256,
        features_sha256,
        cache_sha256: artifact::sha256_hex(&bytes),
    };
    let side = artifact::sidecar_path(path);
    let text = serde_json::to_string_pretty(&meta)? + "\n";
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(meta)
}

/// Reads a cache and its sidecar, refusing a table whose checksum no longer
/// matches the sidecar.
pub fn read_cache(path: &Path) -> Result<(AggregatedTable, CacheMeta)> {
    let side = artifact::sidecar_path(path);
    let meta: CacheMeta = serde_json::from_str(&crate::graph::read_to_string(&side)?)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if artifact::sha256_hex(&bytes) != meta.cache_sha256 {
        return Err(Error::StaleArtifact {
            path: path.into(),
            message: "cache contents do not match sidecar checksum".into(),
        });
    }
    let table = AggregatedTable::new(artifact::decode_table(&bytes, path)?)?;
    if table.num_nodes() != meta.num_nodes || table.dim() != meta.dim {
        return Err(Error::BadArtifact {
            path: path.into(),
            message: "cache shape disagrees with sidecar".into(),
        });
    }
    Ok((table, meta))
}
