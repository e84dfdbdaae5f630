//! Graph, feature, and split ingestion.
//!
//! The graph is held in CSR form: `offsets[v]..offsets[v + 1]` indexes the
//! sorted, duplicate-free neighbor list of `v` inside `targets`. Node ids are
//! dense `u32`s; edge lists with sparse external ids go through [`IdMap`].

use std::collections::hash_map::Entry;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(u32::try_from(v).expect("node index exceeds u32"))
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Largest usable dense id; `u32::MAX` itself is kept free so counts fit.
const MAX_NODE_ID: u64 = u32::MAX as u64 - 1;

/// Undirected simple graph in CSR layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

impl Graph {
    /// Builds a graph from an edge iterator. Duplicate edges (in either
    /// orientation) collapse; self-loops and out-of-range endpoints are errors.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut pairs = Vec::new();
        for (u, v) in edges {
            for n in [u, v] {
                if n.index() >= num_nodes {
                    return Err(Error::InvalidNode { node: n, num_nodes });
                }
            }
            if u == v {
                return Err(Error::param("edges", format!("self-loop on node {u}")));
            }
            pairs.push((u, v));
            pairs.push((v, u));
        }
        Ok(Self::from_directed_pairs(num_nodes, pairs))
    }

    fn from_directed_pairs(num_nodes: usize, mut pairs: Vec<(NodeId, NodeId)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, _) in &pairs {
            offsets[u.index() + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.into_iter().map(|(_, v)| v).collect();
        Self { offsets, targets }
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.num_nodes()
    }

    pub fn check_node(&self, v: NodeId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node: v,
                num_nodes: self.num_nodes(),
            })
        }
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: NodeId) -> Result<&[NodeId]> {
        self.check_node(v)?;
        Ok(self.adjacent(v.index()))
    }

    /// Unchecked variant of [`Graph::neighbors`] for hot loops; panics on a bad index.
    #[inline]
    pub fn adjacent(&self, v: usize) -> &[NodeId] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.contains(u) && self.contains(v) && self.adjacent(u.index()).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(min, max)`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            let uid = NodeId::from(u);
            self.adjacent(u)
                .iter()
                .copied()
                .filter(move |&v| uid < v)
                .map(move |v| (uid, v))
        })
    }

    /// Writes the graph as a comma-separated edge list with a `#nodes=` header,
    /// readable by [`load_graph`].
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            writeln!(w, "#nodes={}", self.num_nodes())?;
            for (u, v) in self.edges() {
                writeln!(w, "{u},{v}")?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    /// Breadth-first extraction of the subgraph induced by all nodes within
    /// `hops` of `anchor`.
    pub fn extract_l_hop(&self, anchor: NodeId, hops: usize) -> Result<AnchoredSubgraph> {
        self.check_node(anchor)?;
        let mut depth: HashMap<NodeId, usize> = HashMap::new();
        depth.insert(anchor, 0);
        let mut queue = VecDeque::from([anchor]);
        while let Some(u) = queue.pop_front() {
            let du = depth[&u];
            if du == hops {
                continue;
            }
            for &w in self.adjacent(u.index()) {
                if let Entry::Vacant(e) = depth.entry(w) {
                    e.insert(du + 1);
                    queue.push_back(w);
                }
            }
        }
        let nodes: BTreeSet<NodeId> = depth.keys().copied().collect();
        let mut edges = Vec::new();
        for &u in &nodes {
            for &w in self.adjacent(u.index()) {
                if u < w && nodes.contains(&w) {
                    edges.push((u, w));
                }
            }
        }
        Ok(AnchoredSubgraph {
            anchor,
            nodes: nodes.into_iter().collect(),
            edges,
            hops,
        })
    }
}

/// Subgraph induced by the L-hop neighborhood of an anchor node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchoredSubgraph {
    pub anchor: NodeId,
    /// Sorted ascending; always contains `anchor`.
    pub nodes: Vec<NodeId>,
    /// Induced edges as `(min, max)`, ascending.
    pub edges: Vec<(NodeId, NodeId)>,
    pub hops: usize,
}

/// Mapping between external (file) ids and dense internal ids.
///
/// Internal ids are assigned in ascending order of external id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    external: Vec<u64>,
    internal: HashMap<u64, NodeId>,
}

impl IdMap {
    pub fn from_external(mut ids: Vec<u64>) -> Result<Self> {
        ids.sort_unstable();
        ids.dedup();
        if ids.len() as u64 > MAX_NODE_ID + 1 {
            return Err(Error::param("id map", "too many distinct ids"));
        }
        let internal = ids
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, NodeId::from(i)))
            .collect();
        Ok(Self {
            external: ids,
            internal,
        })
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn to_internal(&self, external: u64) -> Option<NodeId> {
        self.internal.get(&external).copied()
    }

    pub fn to_external(&self, node: NodeId) -> Option<u64> {
        self.external.get(node.index()).copied()
    }

    /// Writes `external_id,internal_id` CSV with header.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from("external_id,internal_id\n");
        for (i, e) in self.external.iter().enumerate() {
            out.push_str(&format!("{e},{i}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut pairs = Vec::new();
        for (lineno, line) in data_lines(&text) {
            if line.starts_with("external_id") {
                continue;
            }
            let fields = split_fields(line);
            if fields.len() != 2 {
                return Err(Error::parse(
                    path,
                    lineno,
                    "expected external_id,internal_id",
                ));
            }
            let ext = parse_u64(path, lineno, fields[0])?;
            let int = parse_u64(path, lineno, fields[1])?;
            pairs.push((int, ext));
        }
        pairs.sort_unstable();
        for (expected, &(int, _)) in pairs.iter().enumerate() {
            if int != expected as u64 {
                return Err(Error::parse(path, 0, "internal ids must be dense 0..n"));
            }
        }
        let map = Self::from_external(pairs.iter().map(|&(_, e)| e).collect())?;
        if map.len() != pairs.len() || pairs.iter().any(|&(i, e)| map.internal[&e].0 as u64 != i) {
            return Err(Error::parse(
                path,
                0,
                "id map must assign internal ids in ascending external order",
            ));
        }
        Ok(map)
    }
}

/// Loads a dense-id edge list. Fields are separated by a tab or a comma;
/// `#` lines are comments, except `#nodes=N` which fixes the node count.
pub fn load_graph(path: &Path) -> Result<Graph> {
    let text = read_to_string(path)?;
    let mut declared: Option<u64> = None;
    let mut max_id: Option<u64> = None;
    let mut pairs = Vec::new();
    for (lineno, line) in all_lines(&text) {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(n) = rest.trim().strip_prefix("nodes=") {
                let n = parse_u64(path, lineno, n)?;
                if n > MAX_NODE_ID + 1 {
                    return Err(Error::IdOverflow {
                        path: path.into(),
                        line: lineno,
                        id: n,
                        limit: MAX_NODE_ID + 1,
                    });
                }
                declared = Some(n);
            }
            continue;
        }
        let (u, v) = parse_edge(path, lineno, line)?;
        for id in [u, v] {
            let limit = declared.unwrap_or(MAX_NODE_ID + 1);
            if id >= limit {
                return Err(Error::IdOverflow {
                    path: path.into(),
                    line: lineno,
                    id,
                    limit,
                });
            }
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        pairs.push((NodeId(u as u32), NodeId(v as u32)));
        pairs.push((NodeId(v as u32), NodeId(u as u32)));
    }
    let num_nodes = match declared {
        Some(n) => n as usize,
        None => max_id.map_or(0, |m| m as usize + 1),
    };
    Ok(Graph::from_directed_pairs(num_nodes, pairs))
}

/// Loads an edge list with arbitrary non-negative integer ids, remapping them
/// to dense ids. A `#nodes=` header is ignored here.
pub fn load_graph_remapped(path: &Path) -> Result<(Graph, IdMap)> {
    let text = read_to_string(path)?;
    let mut raw = Vec::new();
    for (lineno, line) in data_lines(&text) {
        raw.push(parse_edge(path, lineno, line)?);
    }
    let map = IdMap::from_external(raw.iter().flat_map(|&(u, v)| [u, v]).collect())?;
    let mut pairs = Vec::with_capacity(raw.len() * 2);
    for (u, v) in raw {
        let (u, v) = (map.internal[&u], map.internal[&v]);
        pairs.push((u, v));
        pairs.push((v, u));
    }
    Ok((Graph::from_directed_pairs(map.len(), pairs), map))
}

fn parse_edge(path: &Path, lineno: usize, line: &str) -> Result<(u64, u64)> {
    let fields = split_fields(line);
    if fields.len() != 2 {
        return Err(Error::parse(
            path,
            lineno,
            format!("expected two node ids, found {} fields", fields.len()),
        ));
    }
    let u = parse_u64(path, lineno, fields[0])?;
    let v = parse_u64(path, lineno, fields[1])?;
    if u == v {
        return Err(Error::SelfLoop {
            path: path.into(),
            line: lineno,
            node: u,
        });
    }
    Ok((u, v))
}

/// Per-node feature vectors, one finite row of width `d >= 1` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    matrix: DenseMatrix,
}

impl FeatureMatrix {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if matrix.cols() == 0 {
            return Err(Error::param(
                "features",
                "feature dimension must be at least 1",
            ));
        }
        for (i, row) in matrix.iter_rows().enumerate() {
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "features".into(),
                    node: NodeId::from(i),
                    column: j,
                });
            }
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(DenseMatrix::from_rows(rows)?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub fn row(&self, v: NodeId) -> &[f64] {
        self.matrix.row(v.index())
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.matrix
    }

    /// Writes `node_id,f0,...` CSV (full `f64` precision).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("node_id");
        for j in 0..self.dim() {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for (i, row) in self.matrix.iter_rows().enumerate() {
            out.push_str(&i.to_string());
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Loads `node_id,f0,...,f{d-1}` CSV aligned to the graph's node order.
pub fn load_features(path: &Path, graph: &Graph, ids: Option<&IdMap>) -> Result<FeatureMatrix> {
    let text = read_to_string(path)?;
    let mut lines = data_lines(&text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let header = split_fields(header);
    if header.first().map(|h| h.trim()) != Some("node_id") || header.len() < 2 {
        return Err(Error::parse(
            path,
            hline,
            "header must be node_id,f0,...,f{d-1} with at least one feature",
        ));
    }
    let dim = header.len() - 1;
    let n = graph.num_nodes();
    let mut matrix = DenseMatrix::zeros(n, dim);
    let mut seen = vec![false; n];
    for (lineno, line) in lines {
        let fields = split_fields(line);
        if fields.len() != dim + 1 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} columns, found {}", dim + 1, fields.len()),
            ));
        }
        let node = resolve_node(path, lineno, fields[0], n, ids)?;
        if std::mem::replace(&mut seen[node.index()], true) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate row for node {node}"),
            ));
        }
        let row = matrix.row_mut(node.index());
        for (j, field) in fields[1..].iter().enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad number {field:?}")))?;
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("{}:{lineno}", path.display()),
                    node,
                    column: j,
                });
            }
            row[j] = x;
        }
    }
    let missing: Vec<NodeId> = seen
        .iter()
        .enumerate()
        .filter(|(_, &s)| !s)
        .map(|(i, _)| NodeId::from(i))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingNodes {
            what: path.display().to_string(),
            nodes: missing,
        });
    }
    FeatureMatrix::new(matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "valid" | "val" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

/// Train/valid/test tag for every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    splits: Vec<Split>,
    test: Vec<NodeId>,
}

impl SplitAssignment {
    pub fn new(splits: Vec<Split>) -> Result<Self> {
        let test: Vec<NodeId> = splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == Split::Test)
            .map(|(i, _)| NodeId::from(i))
            .collect();
        if test.is_empty() {
            return Err(Error::Empty("split assignment has no test nodes".into()));
        }
        Ok(Self { splits, test })
    }

    /// Every node in the test split.
    pub fn all_test(num_nodes: usize) -> Result<Self> {
        Self::new(vec![Split::Test; num_nodes])
    }

    pub fn split(&self, v: NodeId) -> Option<Split> {
        self.splits.get(v.index()).copied()
    }

    pub fn is_test(&self, v: NodeId) -> bool {
        self.split(v) == Some(Split::Test)
    }

    /// Test nodes in ascending id order.
    pub fn test_nodes(&self) -> &[NodeId] {
        &self.test
    }

    pub fn num_nodes(&self) -> usize {
        self.splits.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("node_id,split\n");
        for (i, s) in self.splits.iter().enumerate() {
            out.push_str(&format!("{i},{s}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Loads `node_id,split` CSV (header optional). Every node must be listed.
pub fn load_splits(path: &Path, num_nodes: usize, ids: Option<&IdMap>) -> Result<SplitAssignment> {
    let text = read_to_string(path)?;
    let mut splits: Vec<Option<Split>> = vec![None; num_nodes];
    for (lineno, line) in data_lines(&text) {
        let fields = split_fields(line);
        if fields.first().map(|f| f.trim()) == Some("node_id") {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::parse(path, lineno, "expected node_id,split"));
        }
        let node = resolve_node(path, lineno, fields[0], num_nodes, ids)?;
        let split: Split = fields[1]
            .parse()
            .map_err(|m: String| Error::parse(path, lineno, m))?;
        if splits[node.index()].replace(split).is_some() {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate row for node {node}"),
            ));
        }
    }
    let missing: Vec<NodeId> = splits
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_none())
        .map(|(i, _)| NodeId::from(i))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingNodes {
            what: path.display().to_string(),
            nodes: missing,
        });
    }
    SplitAssignment::new(splits.into_iter().map(Option::unwrap).collect())
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with 1-based line numbers.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    all_lines(text).filter(|(_, l)| !l.starts_with('#'))
}

fn all_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub(crate) fn split_fields(line: &str) -> Vec<&str> {
    line.split(['\t', ',']).map(str::trim).collect()
}

pub(crate) fn parse_u64(path: &Path, lineno: usize, field: &str) -> Result<u64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, lineno, format!("bad integer {field:?}")))
}

pub(crate) fn resolve_node(
    path: &Path,
    lineno: usize,
    field: &str,
    num_nodes: usize,
    ids: Option<&IdMap>,
) -> Result<NodeId> {
    let raw = parse_u64(path, lineno, field)?;
    let node = match ids {
        Some(map) => map
            .to_internal(raw)
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown external id {raw}")))?,
        None => {
            if raw >= num_nodes as u64 {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("node id {raw} out of range for {num_nodes} nodes"),
                ));
            }
            NodeId(raw as u32)
        }
    };
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn n(v: u32) -> NodeId {
        NodeId(v)
    }

    fn path_graph(len: usize) -> Graph {
        Graph::from_edges(
            len,
            (1..len).map(|i| (NodeId::from(i - 1), NodeId::from(i))),
        )
        .unwrap()
    }

    #[test]
    fn load_simple_edge_list() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_graph(&write_tmp(&dir, "e.csv", "0,1\n1,2")).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(
            g.edges().collect::<Vec<_>>(),
            vec![(n(0), n(1)), (n(1), n(2))]
        );
    }

    #[test]
    fn reversed_duplicate_collapses() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_graph(&write_tmp(&dir, "e.csv", "0,1\n1,0")).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn self_loop_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_graph(&write_tmp(&dir, "e.csv", "5,5")).unwrap_err();
        assert!(
            matches!(
                err,
                Error::SelfLoop {
                    node: 5,
                    line: 1,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_graph(&write_tmp(&dir, "e.csv", "# hi\n0\t1\n1;2\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn nodes_header_and_overflow() {
        let dir = tempfile::tempdir().unwrap();
        let g = load_graph(&write_tmp(&dir, "e.csv", "#nodes=5\n0\t1\n")).unwrap();
        assert_eq!(g.num_nodes(), 5);
        assert!(g.neighbors(n(4)).unwrap().is_empty());

        let err = load_graph(&write_tmp(&dir, "f.csv", "#nodes=2\n0,2\n")).unwrap_err();
        assert!(matches!(err, Error::IdOverflow { id: 2, .. }));
        let err = load_graph(&write_tmp(&dir, "g.csv", "0,99999999999\n")).unwrap_err();
        assert!(matches!(err, Error::IdOverflow { .. }));
    }

    #[test]
    fn neighbor_lists() {
        let g = path_graph(3);
        assert_eq!(g.neighbors(n(1)).unwrap(), &[n(0), n(2)]);
        let star = Graph::from_edges(5, [(n(0), n(1)), (n(0), n(2)), (n(0), n(3))]).unwrap();
        assert_eq!(star.neighbors(n(0)).unwrap().len(), 3);
        assert!(star.neighbors(n(4)).unwrap().is_empty());
        assert!(matches!(
            star.neighbors(n(5)),
            Err(Error::InvalidNode { .. })
        ));
    }

    #[test]
    fn l_hop_extraction() {
        let g = path_graph(4);
        let sub = g.extract_l_hop(n(0), 1).unwrap();
        assert_eq!(sub.nodes, vec![n(0), n(1)]);
        assert_eq!(sub.edges, vec![(n(0), n(1))]);

        let sub = g.extract_l_hop(n(0), 0).unwrap();
        assert_eq!(sub.nodes, vec![n(0)]);
        assert!(sub.edges.is_empty());

        let k4 = Graph::from_edges(
            4,
            (0..4u32).flat_map(|i| (i + 1..4).map(move |j| (n(i), n(j)))),
        )
        .unwrap();
        let sub = k4.extract_l_hop(n(2), 1).unwrap();
        assert_eq!(sub.nodes.len(), 4);
        assert_eq!(sub.edges.len(), 6);
        assert!(g.extract_l_hop(n(9), 1).is_err());
    }

    #[test]
    fn remapped_ids_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (g, map) = load_graph_remapped(&write_tmp(&dir, "e.tsv", "100\t7\n7\t3000\n")).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(map.to_internal(7), Some(n(0)));
        assert_eq!(map.to_internal(3000), Some(n(2)));
        assert!(g.has_edge(n(0), n(1)));
        let p = dir.path().join("ids.csv");
        map.write(&p).unwrap();
        assert_eq!(IdMap::read(&p).unwrap(), map);

        let feats = write_tmp(&dir, "f.csv", "node_id,f0\n7,1\n100,2\n3000,3\n");
        let fm = load_features(&feats, &g, Some(&map)).unwrap();
        assert_eq!(fm.row(n(1)), &[2.0]);
    }

    #[test]
    fn features_load_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let g = path_graph(2);
        let fm = load_features(
            &write_tmp(&dir, "a.csv", "node_id,f0,f1\n0,1.0,0.0\n1,0.0,1.0\n"),
            &g,
            None,
        )
        .unwrap();
        assert_eq!(fm.dim(), 2);
        assert_eq!(fm.row(n(1)), &[0.0, 1.0]);

        let err = load_features(
            &write_tmp(&dir, "b.csv", "node_id,f0,f1\n0,1.0,0.0\n"),
            &g,
            None,
        )
        .unwrap_err();
        match err {
            Error::MissingNodes { nodes, .. } => assert_eq!(nodes, vec![n(1)]),
            other => panic!("{other}"),
        }

        let err = load_features(
            &write_tmp(&dir, "c.csv", "node_id,f0\n0,NaN\n1,1\n"),
            &g,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");

        let err = load_features(
            &write_tmp(&dir, "d.csv", "node_id,f0,f1\n0,1\n1,1,1\n"),
            &g,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn splits_load() {
        let dir = tempfile::tempdir().unwrap();
        let s = load_splits(
            &write_tmp(&dir, "s.csv", "node_id,split\n0,train\n1,test\n2,valid\n"),
            3,
            None,
        )
        .unwrap();
        assert_eq!(s.test_nodes(), &[n(1)]);
        assert!(load_splits(&write_tmp(&dir, "t.csv", "0,train\n1,train\n"), 2, None).is_err());
        assert!(matches!(
            load_splits(&write_tmp(&dir, "u.csv", "0,test\n"), 2, None),
            Err(Error::MissingNodes { .. })
        ));
    }
}
