//! Cosine-similarity index built from weighted spherical k-means partitions.
//!
//! Partition 1 is plain spherical k-means. Every later partition reruns
//! k-means with each node weighted by how close it sat to its cluster
//! boundary in the previous partition, so boundary nodes become central
//! somewhere. A node's weight is `1 - IA / SF`: one minus the fraction of its
//! similarity cap (half-angle `theta`) that overlaps its centroid's cap. Each
//! node is finally indexed under the partition where its weight is smallest.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::artifact;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::ks::{dot, norm, AggregatedTable};
use crate::matrix::DenseMatrix;

pub const DEFAULT_PARTITIONS: usize = 50;
pub const DEFAULT_CLUSTERS: usize = 10;
pub const DEFAULT_THETA: f64 = std::f64::consts::FRAC_PI_3;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub partitions: usize,
    pub clusters: usize,
    pub theta: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Feed each partition's node weights into the next one. With `false`
    /// every partition uses uniform weights and differs only by its seed.
    pub chain_weights: bool,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            partitions: DEFAULT_PARTITIONS,
            clusters: DEFAULT_CLUSTERS,
            theta: DEFAULT_THETA,
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            chain_weights: true,
        }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<()> {
        if self.partitions == 0 {
            return Err(Error::param("partitions", "must be at least 1"));
        }
        if self.clusters == 0 {
            return Err(Error::param("clusters", "must be at least 1"));
        }
        check_theta(self.theta)?;
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::param("tol", "must be non-negative"));
        }
        Ok(())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::param("theta", format!("{theta} not in (0, pi/2]")));
    }
    Ok(())
}

/// Scales `v` to unit length. A zero vector maps to the first basis direction.
pub fn unit_normalize(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        log::warn!("zero vector normalized to the first basis direction");
        let mut e = vec![0.0; v.len()];
        if let Some(first) = e.first_mut() {
            *first = 1.0;
        }
        return e;
    }
    v.iter().map(|x| x / n).collect()
}

// ---------------------------------------------------------------------------
// Cap geometry

fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut x = [0.0; GL_ORDER];
        let mut w = [0.0; GL_ORDER];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp;
            loop {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
                }
                dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / dp;
                if (z - z1).abs() < 1e-15 {
                    break;
                }
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
            w[n - 1 - i] = w[i];
        }
        (x, w)
    })
}

const GL_ORDER: usize = 16;
const GL_PANELS: usize = 8;

/// Composite Gauss-Legendre over `[a, b]`.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (x, w) = gauss_legendre();
    let h = (b - a) / GL_PANELS as f64;
    let mut total = 0.0;
    for p in 0..GL_PANELS {
        let mid = a + h * (p as f64 + 0.5);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            s += wi * f(mid + 0.5 * h * xi);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Fraction of the unit `(d-2)`-sphere whose first coordinate is at least `s0`.
fn slice_fraction(s0: f64, d: usize) -> f64 {
    if s0 <= -1.0 {
        return 1.0;
    }
    if s0 >= 1.0 {
        return 0.0;
    }
    let half = 0.5 * beta_reg((d as f64 - 2.0) / 2.0, 0.5, 1.0 - s0 * s0);
    if s0 >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

fn cap_ratio_unchecked(phi: f64, theta: f64, d: usize) -> f64 {
    if phi <= 0.0 {
        return 1.0;
    }
    if phi >= 2.0 * theta {
        return 0.0;
    }
    if d == 2 {
        return (2.0 * theta - phi) / (2.0 * theta);
    }
    // Polar angle t from the first axis has density sin^{d-2}(t). Weights are
    // taken relative to sin(theta) in log space so large d cannot underflow.
    let power = (d - 2) as f64;
    let ln_sin_theta = theta.sin().ln();
    let density = |t: f64| (power * (t.sin().ln() - ln_sin_theta)).exp();
    let (cos_theta, cos_phi, sin_phi) = (theta.cos(), phi.cos(), phi.sin());

    let similar_field = integrate(density, 0.0, theta);
    let inner = integrate(density, 0.0, theta - phi);
    // Partial slices start where the slice first touches the second cap. The
    // substitution t = a + (b - a) u^2 removes the square-root edge there.
    let a = (theta - phi).abs();
    let span = theta - a;
    let partial = integrate(
        |u| {
            let t = a + span * u * u;
            let s0 = (cos_theta - t.cos() * cos_phi) / (t.sin() * sin_phi);
            density(t) * slice_fraction(s0, d) * 2.0 * span * u
        },
        0.0,
        1.0,
    );
    ((inner + partial) / similar_field).clamp(0.0, 1.0)
}

/// Area of the intersection of two caps of half-angle `theta` whose axes are
/// `phi` apart on the unit sphere in `R^d`, relative to one cap's area.
pub fn cap_overlap_ratio(phi: f64, theta: f64, d: usize) -> Result<f64> {
    if !(0.0..=std::f64::consts::PI).contains(&phi) {
        return Err(Error::param("phi", format!("{phi} not in [0, pi]")));
    }
    check_theta(theta)?;
    if d < 2 {
        return Err(Error::param("d", "dimension must be at least 2"));
    }
    Ok(cap_ratio_unchecked(phi, theta, d))
}

#[inline]
fn angle_between_unit(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

/// `1 - IA/SF` for a unit vector against a unit centroid.
pub fn node_weight(agg_unit: &[f64], centroid: &[f64], theta: f64, d: usize) -> Result<f64> {
    if agg_unit.len() != centroid.len() {
        return Err(Error::DimensionMismatch {
            context: "node weight".into(),
            expected: agg_unit.len(),
            actual: centroid.len(),
        });
    }
    Ok(1.0 - cap_overlap_ratio(angle_between_unit(agg_unit, centroid), theta, d)?)
}

/// Overlap ratio tabulated on a uniform angle grid over `[0, 2 theta]` and
/// linearly interpolated. Endpoints are exact and the interpolant stays
/// strictly inside `(0, 1)` wherever the exact ratio does.
#[derive(Debug, Clone)]
pub struct CapOverlapTable {
    theta: f64,
    d: usize,
    step: f64,
    values: Vec<f64>,
}

impl CapOverlapTable {
    pub fn new(theta: f64, d: usize) -> Result<Self> {
        check_theta(theta)?;
        if d < 2 {
            return Err(Error::param("d", "dimension must be at least 2"));
        }
        // Caps get thinner relative to their separation as d grows.
        let intervals = (4096 * d.div_ceil(64)).min(1 << 17);
        let step = 2.0 * theta / intervals as f64;
        let values = (0..=intervals)
            .into_par_iter()
            .map(|i| cap_ratio_unchecked(i as f64 * step, theta, d))
            .collect();
        Ok(Self {
            theta,
            d,
            step,
            values,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn ratio(&self, phi: f64) -> f64 {
        if phi <= 0.0 {
            return 1.0;
        }
        if phi >= 2.0 * self.theta {
            return 0.0;
        }
        if self.d == 2 {
            return cap_ratio_unchecked(phi, self.theta, 2);
        }
        let pos = phi / self.step;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let frac = pos - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Node weight from the angle between a unit vector and its centroid.
    pub fn weight(&self, agg_unit: &[f64], centroid: &[f64]) -> f64 {
        1.0 - self.ratio(angle_between_unit(agg_unit, centroid))
    }
}

// ---------------------------------------------------------------------------
// Weighted spherical k-means

/// Result of one weighted k-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansOutcome {
    /// `m x d`, unit rows.
    pub centroids: DenseMatrix,
    pub assignment: Vec<u32>,
    /// Weighted cosine objective after seeding and after every iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn assign_all(points: &DenseMatrix, centroids: &DenseMatrix) -> Vec<u32> {
    (0..points.rows())
        .into_par_iter()
        .map(|i| nearest_centroid(points.row(i), centroids).0)
        .collect()
}

/// Centroid of maximum cosine; ties go to the lowest cluster id.
fn nearest_centroid(x: &[f64], centroids: &DenseMatrix) -> (u32, f64) {
    let mut best = (0u32, f64::NEG_INFINITY);
    for (c, mu) in centroids.iter_rows().enumerate() {
        let s = dot(x, mu);
        if s > best.1 {
            best = (c as u32, s);
        }
    }
    best
}

fn objective(
    points: &DenseMatrix,
    weights: &[f64],
    centroids: &DenseMatrix,
    assignment: &[u32],
) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| weights[i] * dot(points.row(i), centroids.row(c as usize)))
        .sum()
}

/// Weighted farthest-first seeding: the first seed is drawn with probability
/// proportional to weight, each later seed maximizes weight times angular
/// distance to the nearest chosen seed.
fn seed_centroids(
    points: &DenseMatrix,
    weights: &[f64],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> DenseMatrix {
    let n = points.rows();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut first = n - 1;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 && target < w {
            first = i;
            break;
        }
        target -= w;
    }
    if weights[first] <= 0.0 {
        first = weights.iter().position(|&w| w > 0.0).unwrap_or(0);
    }
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| angle_between_unit(points.row(i), points.row(first)))
        .collect();
    while chosen.len() < m {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            let score = weights[i] * nearest[i];
            if score > best.1 {
                best = (i, score);
            }
        }
        let next = best.0;
        chosen.push(next);
        for (i, a) in nearest.iter_mut().enumerate() {
            *a = a.min(angle_between_unit(points.row(i), points.row(next)));
        }
    }
    let mut centroids = DenseMatrix::zeros(m, points.cols());
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).copy_from_slice(points.row(i));
    }
    centroids
}

/// Maximizes `sum_i sum_{v in c_i} w_v cos(x_v, mu_i)` over unit-row `points`
/// by alternating nearest-centroid assignment with the weighted-mean centroid
/// update (normalized back to unit length).
pub fn weighted_kmeans(
    points: &DenseMatrix,
    weights: &[f64],
    m: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    weighted_kmeans_with_rng(points, weights, m, &mut rng, max_iters, tol)
}

fn weighted_kmeans_with_rng(
    points: &DenseMatrix,
    weights: &[f64],
    m: usize,
    rng: &mut ChaCha8Rng,
    max_iters: usize,
    tol: f64,
) -> Result<KMeansOutcome> {
    let n = points.rows();
    if m == 0 {
        return Err(Error::param("clusters", "must be at least 1"));
    }
    if n < m {
        return Err(Error::TooFewPoints {
            needed: m,
            available: n,
        });
    }
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            context: "k-means weights".into(),
            expected: n,
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::param("weights", "must be finite and non-negative"));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::param("weights", "all weights are zero"));
    }

    let d = points.cols();
    let mut centroids = seed_centroids(points, weights, m, rng);
    let mut assignment = assign_all(points, &centroids);
    let mut history = vec![objective(points, weights, &centroids, &assignment)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;

        let mut sums = DenseMatrix::zeros(m, d);
        for (i, &c) in assignment.iter().enumerate() {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            for (s, &x) in sums.row_mut(c as usize).iter_mut().zip(points.row(i)) {
                *s += w * x;
            }
        }
        for c in 0..m {
            let s = sums.row(c);
            let len = norm(s);
            // An all-zero weighted sum keeps the previous direction.
            if len > 0.0 {
                let unit: Vec<f64> = s.iter().map(|x| x / len).collect();
                centroids.row_mut(c).copy_from_slice(&unit);
            }
        }

        assignment = assign_all(points, &centroids);
        reseed_empty(points, weights, &mut centroids, &mut assignment);

        let obj = objective(points, weights, &centroids, &assignment);
        let gain = obj - history.last().unwrap();
        history.push(obj);
        if gain < tol {
            converged = true;
            break;
        }
    }

    Ok(KMeansOutcome {
        centroids,
        assignment,
        objective_history: history,
        iterations,
        converged,
    })
}

/// Moves into each empty cluster the point with the lowest weighted
/// similarity to its current centroid, taken from a cluster of size >= 2.
fn reseed_empty(
    points: &DenseMatrix,
    weights: &[f64],
    centroids: &mut DenseMatrix,
    assignment: &mut [u32],
) {
    let m = centroids.rows();
    let mut sizes = vec![0usize; m];
    for &c in assignment.iter() {
        sizes[c as usize] += 1;
    }
    for empty in 0..m {
        if sizes[empty] > 0 {
            continue;
        }
        let mut pick: Option<(usize, f64)> = None;
        for (i, &c) in assignment.iter().enumerate() {
            if sizes[c as usize] < 2 {
                continue;
            }
            let score = weights[i] * dot(points.row(i), centroids.row(c as usize));
            if pick.is_none_or(|(_, s)| score < s) {
                pick = Some((i, score));
            }
        }
        let Some((i, _)) = pick else { return };
        sizes[assignment[i] as usize] -= 1;
        sizes[empty] = 1;
        assignment[i] = empty as u32;
        let row = points.row(i).to_vec();
        centroids.row_mut(empty).copy_from_slice(&row);
    }
}

// ---------------------------------------------------------------------------
// Index

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub centroids: DenseMatrix,
    /// Cluster per test node, in the index's test-node order.
    pub assignment: Vec<u32>,
    /// `1 - IA/SF` per test node against its assigned centroid.
    pub weights: Vec<f64>,
    /// Test nodes per cluster, ascending.
    pub members: Vec<Vec<NodeId>>,
    pub iterations: usize,
    pub converged: bool,
}

impl Partition {
    fn new(outcome: KMeansOutcome, weights: Vec<f64>, test_nodes: &[NodeId]) -> Self {
        let mut members = vec![Vec::new(); outcome.centroids.rows()];
        for (pos, &c) in outcome.assignment.iter().enumerate() {
            members[c as usize].push(test_nodes[pos]);
        }
        Self {
            centroids: outcome.centroids,
            assignment: outcome.assignment,
            weights,
            members,
            iterations: outcome.iterations,
            converged: outcome.converged,
        }
    }
}

/// Where a test node is looked up: its least-boundary partition and its
/// cluster in that partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub partition: u32,
    pub cluster: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphericalIndex {
    params: IndexParams,
    dim: usize,
    test_nodes: Vec<NodeId>,
    /// Position of a node in `test_nodes`, by node index.
    position: Vec<Option<u32>>,
    partitions: Vec<Partition>,
    entry: Vec<IndexEntry>,
}

/// Unit-normalized aggregated vectors of the given nodes, one row each.
pub fn unit_rows(agg: &AggregatedTable, nodes: &[NodeId]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(nodes.len(), agg.dim());
    for (i, &v) in nodes.iter().enumerate() {
        let u = unit_normalize(agg.vector(v));
        out.row_mut(i).copy_from_slice(&u);
    }
    out
}

pub fn build_index(
    agg: &AggregatedTable,
    test_nodes: &[NodeId],
    params: IndexParams,
) -> Result<SphericalIndex> {
    params.validate()?;
    let mut nodes = test_nodes.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    for &v in &nodes {
        if v.index() >= agg.num_nodes() {
            return Err(Error::InvalidNode {
                node: v,
                num_nodes: agg.num_nodes(),
            });
        }
    }
    if nodes.len() < params.clusters {
        return Err(Error::TooFewPoints {
            needed: params.clusters,
            available: nodes.len(),
        });
    }
    let d = agg.dim();
    let points = unit_rows(agg, &nodes);
    let caps = CapOverlapTable::new(params.theta, d.max(2))?;

    let mut partitions = Vec::with_capacity(params.partitions);
    let mut weights = vec![1.0; nodes.len()];
    for p in 0..params.partitions {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(p as u64);
        let outcome = weighted_kmeans_with_rng(
            &points,
            &weights,
            params.clusters,
            &mut rng,
            params.max_iters,
            params.tol,
        )?;
        if !outcome.converged {
            log::warn!(
                "partition {p}: k-means stopped at max_iters={} before converging",
                params.max_iters
            );
        }
        let node_weights: Vec<f64> = (0..nodes.len())
            .into_par_iter()
            .map(|i| {
                caps.weight(
                    points.row(i),
                    outcome.centroids.row(outcome.assignment[i] as usize),
                )
            })
            .collect();
        if params.chain_weights {
            if node_weights.iter().all(|&w| w == 0.0) {
                log::warn!("partition {p}: every node sits on its centroid; next partition uses uniform weights");
                weights.fill(1.0);
            } else {
                weights.clone_from(&node_weights);
            }
        }
        partitions.push(Partition::new(outcome, node_weights, &nodes));
    }

    let entry = (0..nodes.len())
        .map(|i| {
            let mut best = 0;
            for p in 1..partitions.len() {
                if partitions[p].weights[i] < partitions[best].weights[i] {
                    best = p;
                }
            }
            IndexEntry {
                partition: best as u32,
                cluster: partitions[best].assignment[i],
            }
        })
        .collect();

    let position = positions(agg.num_nodes(), &nodes);
    Ok(SphericalIndex {
        params,
        dim: d,
        test_nodes: nodes,
        position,
        partitions,
        entry,
    })
}

fn positions(num_nodes: usize, nodes: &[NodeId]) -> Vec<Option<u32>> {
    let mut position = vec![None; num_nodes];
    for (i, &v) in nodes.iter().enumerate() {
        position[v.index()] = Some(i as u32);
    }
    position
}

impl SphericalIndex {
    pub fn params(&self) -> &IndexParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn test_nodes(&self) -> &[NodeId] {
        &self.test_nodes
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    fn position_of(&self, v: NodeId) -> Result<usize> {
        self.position
            .get(v.index())
            .copied()
            .flatten()
            .map(|p| p as usize)
            .ok_or(Error::NotIndexed(v))
    }

    pub fn entry(&self, v: NodeId) -> Result<IndexEntry> {
        Ok(self.entry[self.position_of(v)?])
    }

    /// Chosen weight of `v`, i.e. its minimum over partitions.
    pub fn chosen_weight(&self, v: NodeId) -> Result<f64> {
        let pos = self.position_of(v)?;
        let e = self.entry[pos];
        Ok(self.partitions[e.partition as usize].weights[pos])
    }

    /// Members of the cluster `v` is indexed under, including `v` itself.
    pub fn cluster_of(&self, v: NodeId) -> Result<&[NodeId]> {
        let e = self.entry(v)?;
        Ok(&self.partitions[e.partition as usize].members[e.cluster as usize])
    }

    /// Candidate list for a query: the indexed cluster minus the query node.
    pub fn lookup(&self, v: NodeId) -> Result<Vec<NodeId>> {
        Ok(self
            .cluster_of(v)?
            .iter()
            .copied()
            .filter(|&u| u != v)
            .collect())
    }

    /// Total membership entries across all partitions.
    pub fn storage_entries(&self) -> usize {
        self.partitions
            .iter()
            .flat_map(|p| &p.members)
            .map(Vec::len)
            .sum()
    }

    /// Histogram of chosen weights over `[0, 1]` in `bins` equal bins.
    pub fn weight_histogram(&self, bins: usize) -> Vec<usize> {
        let bins = bins.max(1);
        let mut hist = vec![0; bins];
        for (pos, e) in self.entry.iter().enumerate() {
            let w = self.partitions[e.partition as usize].weights[pos];
            hist[((w * bins as f64) as usize).min(bins - 1)] += 1;
        }
        hist
    }

    /// Writes the JSON envelope to `path` and the centroid table next to it
    /// (`<path>.centroids.bin`).
    pub fn save(&self, path: &Path, provenance: &IndexProvenance) -> Result<()> {
        let m = self.params.clusters;
        let mut all = DenseMatrix::zeros(self.partitions.len() * m, self.dim);
        for (p, part) in self.partitions.iter().enumerate() {
            for c in 0..m {
                all.row_mut(p * m + c)
                    .copy_from_slice(part.centroids.row(c));
            }
        }
        let table = artifact::encode_table(&all);
        let centroids_path = centroids_path(path);
        artifact::write_bytes(&centroids_path, &table)?;

        let file = IndexFile {
            version: INDEX_FORMAT_VERSION,
            params: IndexFileParams {
                partitions: self.params.partitions,
                clusters: self.params.clusters,
                theta: self.params.theta,
                seed: self.params.seed,
                max_iters: self.params.max_iters,
                tol: self.params.tol,
                chain_weights: self.params.chain_weights,
                alpha: provenance.alpha,
                hops: provenance.hops,
                checksums: Checksums {
                    aggregate_sha256: provenance.aggregate_sha256.clone(),
                    centroids_sha256: artifact::sha256_hex(&table),
                },
            },
            dim: self.dim,
            centroids_file: centroids_path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            test_nodes: self.test_nodes.clone(),
            partitions: self
                .partitions
                .iter()
                .enumerate()
                .map(|(p, part)| PartitionRecord {
                    centroid_rows: [p * m, (p + 1) * m],
                    assignment: part.assignment.clone(),
                    weights: part.weights.clone(),
                    iterations: part.iterations,
                    converged: part.converged,
                })
                .collect(),
            entry: self
                .entry
                .iter()
                .map(|e| [e.partition, e.cluster])
                .collect(),
        };
        let text = serde_json::to_string(&file)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads an index written by [`SphericalIndex::save`]. `num_nodes` sizes
    /// the node lookup table.
    pub fn load(path: &Path, num_nodes: usize) -> Result<(Self, IndexProvenance)> {
        let bad = |message: String| Error::BadArtifact {
            path: path.into(),
            message,
        };
        let file: IndexFile = serde_json::from_str(&crate::graph::read_to_string(path)?)?;
        if file.version != INDEX_FORMAT_VERSION {
            return Err(bad(format!("unsupported index version {}", file.version)));
        }
        let cpath = path.with_file_name(&file.centroids_file);
        let bytes = fs::read(&cpath).map_err(|e| Error::io(&cpath, e))?;
        if artifact::sha256_hex(&bytes) != file.params.checksums.centroids_sha256 {
            return Err(Error::StaleArtifact {
                path: cpath,
                message: "centroid table does not match index checksum".into(),
            });
        }
        let all = artifact::decode_table(&bytes, &cpath)?;
        let fp = &file.params;
        let params = IndexParams {
            partitions: fp.partitions,
            clusters: fp.clusters,
            theta: fp.theta,
            seed: fp.seed,
            max_iters: fp.max_iters,
            tol: fp.tol,
            chain_weights: fp.chain_weights,
        };
        params.validate()?;
        let n = file.test_nodes.len();
        if file.partitions.len() != params.partitions || file.entry.len() != n {
            return Err(bad("partition or entry count disagrees with params".into()));
        }
        if file.test_nodes.iter().any(|v| v.index() >= num_nodes) {
            return Err(bad("test node outside the graph".into()));
        }
        let m = params.clusters;
        let mut partitions = Vec::with_capacity(params.partitions);
        for rec in file.partitions {
            let [start, end] = rec.centroid_rows;
            if end != start + m || end > all.rows() || all.cols() != file.dim {
                return Err(bad("centroid rows out of range".into()));
            }
            if rec.assignment.len() != n
                || rec.weights.len() != n
                || rec.assignment.iter().any(|&c| c as usize >= m)
            {
                return Err(bad("partition record has the wrong length".into()));
            }
            let mut centroids = DenseMatrix::zeros(m, file.dim);
            for c in 0..m {
                centroids.row_mut(c).copy_from_slice(all.row(start + c));
            }
            let outcome = KMeansOutcome {
                centroids,
                assignment: rec.assignment,
                objective_history: Vec::new(),
                iterations: rec.iterations,
                converged: rec.converged,
            };
            partitions.push(Partition::new(outcome, rec.weights, &file.test_nodes));
        }
        let entry: Vec<IndexEntry> = file
            .entry
            .iter()
            .map(|&[partition, cluster]| IndexEntry { partition, cluster })
            .collect();
        for (pos, e) in entry.iter().enumerate() {
            let part = partitions
                .get(e.partition as usize)
                .ok_or_else(|| bad("entry points past the last partition".into()))?;
            if part.assignment[pos] != e.cluster {
                return Err(bad(
                    "entry cluster disagrees with partition assignment".into()
                ));
            }
        }
        let provenance = IndexProvenance {
            alpha: fp.alpha,
            hops: fp.hops,
            aggregate_sha256: fp.checksums.aggregate_sha256.clone(),
        };
        let position = positions(num_nodes, &file.test_nodes);
        Ok((
            Self {
                params,
                dim: file.dim,
                test_nodes: file.test_nodes,
                position,
                partitions,
                entry,
            },
            provenance,
        ))
    }
}

pub fn centroids_path(index_path: &Path) -> std::path::PathBuf {
    let mut s = index_path.as_os_str().to_owned();
    s.push(".centroids.bin");
    s.into()
}

/// Inputs an index was built from, recorded in its file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexProvenance {
    pub alpha: f64,
    pub hops: usize,
    pub aggregate_sha256: String,
}

#[derive(Serialize, Deserialize)]
struct Checksums {
    aggregate_sha256: String,
    centroids_sha256: String,
}

#[derive(Serialize, Deserialize)]
struct IndexFileParams {
    partitions: usize,
    clusters: usize,
    theta: f64,
    seed: u64,
    max_iters: usize,
    tol: f64,
    chain_weights: bool,
    alpha: f64,
    hops: usize,
    checksums: Checksums,
}

#[derive(Serialize, Deserialize)]
struct PartitionRecord {
    centroid_rows: [usize; 2],
    assignment: Vec<u32>,
    weights: Vec<f64>,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    version: u32,
    params: IndexFileParams,
    dim: usize,
    centroids_file: String,
    test_nodes: Vec<NodeId>,
    partitions: Vec<PartitionRecord>,
    entry: Vec<[u32; 2]>,
}
