//! Per-node predicted labels: a built-in dense GCN forward pass, or ingestion
//! of labels produced by any external classifier.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, FeatureMatrix, Graph, IdMap, NodeId, SplitAssignment};
use crate::matrix::DenseMatrix;

pub type Label = u32;

/// `D^{-1/2} (A + I) D^{-1/2}` stored row-wise; degrees count the self-loop.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Nonzero entries of row `v` as `(column, value)`, columns ascending.
    pub fn row(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[v]..self.offsets[v + 1];
        self.cols[range.clone()]
            .iter()
            .zip(&self.values[range])
            .map(|(&c, &x)| (c as usize, x))
    }

    pub fn get(&self, v: usize, u: usize) -> f64 {
        let range = self.offsets[v]..self.offsets[v + 1];
        match self.cols[range.clone()].binary_search(&(u as u32)) {
            Ok(i) => self.values[range.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.num_nodes();
        let mut m = DenseMatrix::zeros(n, n);
        for v in 0..n {
            for (u, x) in self.row(v) {
                m.set(v, u, x);
            }
        }
        m
    }

    /// Sparse-times-dense product `self * h`.
    pub fn mul_dense(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        if h.rows() != self.num_nodes() {
            return Err(Error::DimensionMismatch {
                context: "adjacency product".into(),
                expected: self.num_nodes(),
                actual: h.rows(),
            });
        }
        let mut out = DenseMatrix::zeros(h.rows(), h.cols());
        for v in 0..self.num_nodes() {
            let mut acc = vec![0.0; h.cols()];
            for (u, a) in self.row(v) {
                for (o, &x) in acc.iter_mut().zip(h.row(u)) {
                    *o += a * x;
                }
            }
            out.row_mut(v).copy_from_slice(&acc);
        }
        Ok(out)
    }
}

pub fn normalize_adjacency(graph: &Graph) -> NormalizedAdjacency {
    let n = graph.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((graph.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(2 * graph.num_edges() + n);
    let mut values = Vec::with_capacity(cols.capacity());
    offsets.push(0);
    for v in 0..n {
        let mut self_done = false;
        for &u in graph.adjacent(v) {
            let u = u.index();
            if !self_done && u > v {
                cols.push(v as u32);
                values.push(inv_sqrt[v] * inv_sqrt[v]);
                self_done = true;
            }
            cols.push(u as u32);
            values.push(inv_sqrt[v] * inv_sqrt[u]);
        }
        if !self_done {
            cols.push(v as u32);
            values.push(inv_sqrt[v] * inv_sqrt[v]);
        }
        offsets.push(cols.len());
    }
    NormalizedAdjacency {
        offsets,
        cols,
        values,
    }
}

/// Layer weight matrices; layer `l` maps width `rows` to width `cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnWeights {
    pub layers: Vec<DenseMatrix>,
}

impl GcnWeights {
    pub fn new(layers: Vec<DenseMatrix>) -> Result<Self> {
        let w = Self { layers };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::param("weights", "at least one layer required"));
        }
        for (l, pair) in self.layers.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::DimensionMismatch {
                    context: format!("GCN layer {}", l + 1),
                    expected: pair[0].cols(),
                    actual: pair[1].rows(),
                });
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.as_slice().len() != layer.rows() * layer.cols() {
                return Err(Error::param(
                    "weights",
                    format!("layer {l} data length mismatch"),
                ));
            }
            if layer.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(Error::param(
                    "weights",
                    format!("layer {l} has non-finite entries"),
                ));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, DenseMatrix::cols)
    }

    /// Reads `{"layers": [{"rows": r, "cols": c, "data": [...]}, ...]}`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = graph::read_to_string(path)?;
        let w: GcnWeights = serde_json::from_str(&text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `H^{l+1} = σ(Â H^l W^l)` with ReLU on hidden layers and identity on the last.
pub fn gcn_forward(
    features: &FeatureMatrix,
    adj: &NormalizedAdjacency,
    weights: &GcnWeights,
) -> Result<DenseMatrix> {
    weights.validate()?;
    if adj.num_nodes() != features.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "adjacency vs feature rows".into(),
            expected: features.num_nodes(),
            actual: adj.num_nodes(),
        });
    }
    let mut h = features.matrix().clone();
    let last = weights.layers.len() - 1;
    for (l, w) in weights.layers.iter().enumerate() {
        if h.cols() != w.rows() {
            return Err(Error::DimensionMismatch {
                context: format!("GCN layer {l} input"),
                expected: w.rows(),
                actual: h.cols(),
            });
        }
        h = adj.mul_dense(&h.matmul(w)?)?;
        if l != last {
            for x in h.as_mut_slice() {
                *x = x.max(0.0);
            }
        }
    }
    Ok(h)
}

/// Predicted (and optionally true) label per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionTable {
    predicted: Vec<Option<Label>>,
    true_label: Vec<Option<Label>>,
    num_classes: u32,
}

impl PredictionTable {
    pub fn new(
        predicted: Vec<Option<Label>>,
        true_label: Vec<Option<Label>>,
        num_classes: u32,
    ) -> Result<Self> {
        if predicted.len() != true_label.len() {
            return Err(Error::DimensionMismatch {
                context: "true label column".into(),
                expected: predicted.len(),
                actual: true_label.len(),
            });
        }
        for (i, l) in predicted.iter().chain(&true_label).enumerate() {
            if let Some(l) = *l {
                if l >= num_classes {
                    return Err(Error::LabelOutOfRange {
                        node: NodeId::from(i % predicted.len()),
                        label: l,
                        num_classes,
                    });
                }
            }
        }
        Ok(Self {
            predicted,
            true_label,
            num_classes,
        })
    }

    /// Table where every node has a predicted label and no true label.
    pub fn from_labels(predicted: Vec<Label>, num_classes: u32) -> Result<Self> {
        let n = predicted.len();
        Self::new(
            predicted.into_iter().map(Some).collect(),
            vec![None; n],
            num_classes,
        )
    }

    pub fn with_true_labels(mut self, true_label: Vec<Option<Label>>) -> Result<Self> {
        self.true_label = true_label;
        Self::new(self.predicted, self.true_label, self.num_classes)
    }

    pub fn num_nodes(&self) -> usize {
        self.predicted.len()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    #[inline]
    pub fn predicted(&self, v: NodeId) -> Option<Label> {
        self.predicted.get(v.index()).copied().flatten()
    }

    #[inline]
    pub fn true_label(&self, v: NodeId) -> Option<Label> {
        self.true_label.get(v.index()).copied().flatten()
    }

    /// Errors naming the first test node without a prediction.
    pub fn check_covers(&self, splits: &SplitAssignment) -> Result<()> {
        let missing: Vec<NodeId> = splits
            .test_nodes()
            .iter()
            .copied()
            .filter(|&v| self.predicted(v).is_none())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingNodes {
                what: "predictions".into(),
                nodes: missing,
            })
        }
    }

    /// Writes `node_id,predicted_label[,true_label]` for nodes with a prediction.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let with_truth = self.true_label.iter().any(Option::is_some);
        let mut out = String::from(if with_truth {
            "node_id,predicted_label,true_label\n"
        } else {
            "node_id,predicted_label\n"
        });
        for (i, p) in self.predicted.iter().enumerate() {
            let Some(p) = p else { continue };
            match (with_truth, self.true_label[i]) {
                (true, Some(t)) => out.push_str(&format!("{i},{p},{t}\n")),
                _ => out.push_str(&format!("{i},{p}\n")),
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Row-wise argmax; ties go to the smallest label id.
pub fn predict_labels(logits: &DenseMatrix) -> Result<PredictionTable> {
    if logits.cols() == 0 {
        return Err(Error::Empty("logit rows have no columns".into()));
    }
    let labels = logits
        .iter_rows()
        .map(|row| {
            let mut best = 0;
            for (j, &x) in row.iter().enumerate().skip(1) {
                if x > row[best] {
                    best = j;
                }
            }
            best as Label
        })
        .collect();
    PredictionTable::from_labels(labels, logits.cols() as u32)
}

/// Loads `node_id,predicted_label[,true_label]` CSV (header optional).
///
/// With `num_classes = None` the class count is `1 + max label seen`.
pub fn load_predictions(
    path: &Path,
    splits: &SplitAssignment,
    num_classes: Option<u32>,
    ids: Option<&IdMap>,
) -> Result<PredictionTable> {
    let text = graph::read_to_string(path)?;
    let n = splits.num_nodes();
    let mut predicted = vec![None; n];
    let mut truth = vec![None; n];
    let mut rows = Vec::new();
    for (lineno, line) in graph::data_lines(&text) {
        let fields = graph::split_fields(line);
        if fields.first().map(|f| f.trim()) == Some("node_id") {
            continue;
        }
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(
                path,
                lineno,
                "expected node_id,predicted_label[,true_label]",
            ));
        }
        let node = graph::resolve_node(path, lineno, fields[0], n, ids)?;
        let label = |f: &str| -> Result<Label> {
            let v = graph::parse_u64(path, lineno, f)?;
            u32::try_from(v).map_err(|_| Error::parse(path, lineno, "label too large"))
        };
        let p = label(fields[1])?;
        let t = match fields.get(2) {
            Some(f) if !f.is_empty() => Some(label(f)?),
            _ => None,
        };
        rows.push((lineno, node, p, t));
    }
    let classes = match num_classes {
        Some(c) => c,
        None => rows
            .iter()
            .flat_map(|r| std::iter::once(r.2).chain(r.3))
            .max()
            .map_or(0, |m| m + 1),
    };
    for (lineno, node, p, t) in rows {
        for l in std::iter::once(p).chain(t) {
            if l >= classes {
                return Err(Error::LabelOutOfRange {
                    node,
                    label: l,
                    num_classes: classes,
                });
            }
        }
        if predicted[node.index()].replace(p).is_some() {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate row for node {node}"),
            ));
        }
        truth[node.index()] = t;
    }
    let table = PredictionTable::new(predicted, truth, classes)?;
    table.check_covers(splits)?;
    Ok(table)
}
