//! Seeded synthetic datasets for demos, benchmarks and the test suites.
//!
//! Three families:
//! * `random`: uniform non-negative features, random edges, random labels.
//! * `bundles`: features drawn around planted unit directions, edges mostly
//!   inside a bundle, predicted labels independent of the bundle.
//! * `boundary`: two overlapping Gaussian clouds; the true label is the cloud
//!   and predictions come from a one-layer GCN thresholding the first feature.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, Graph, NodeId, Split, SplitAssignment};
use crate::matrix::DenseMatrix;
use crate::model::{gcn_forward, normalize_adjacency, predict_labels, GcnWeights, PredictionTable};

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub splits: SplitAssignment,
    pub predictions: PredictionTable,
    /// Planted group per node (bundle or cloud); empty for `random`.
    pub groups: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub graph: PathBuf,
    pub features: PathBuf,
    pub splits: PathBuf,
    pub predictions: PathBuf,
}

impl SynthDataset {
    /// Writes `graph.csv`, `features.csv`, `splits.csv` and `predictions.csv`
    /// into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<SynthPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths {
            graph: dir.join("graph.csv"),
            features: dir.join("features.csv"),
            splits: dir.join("splits.csv"),
            predictions: dir.join("predictions.csv"),
        };
        self.graph.write_edge_list(&paths.graph)?;
        self.features.write_csv(&paths.features)?;
        self.splits.write_csv(&paths.splits)?;
        self.predictions.write_csv(&paths.predictions)?;
        Ok(paths)
    }
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// About `n * avg_degree / 2` edges; `pick(u, rng)` proposes the other end.
fn sample_edges<F>(n: usize, avg_degree: f64, rng: &mut ChaCha8Rng, mut pick: F) -> Result<Graph>
where
    F: FnMut(usize, &mut ChaCha8Rng) -> usize,
{
    let target = ((n as f64 * avg_degree) / 2.0).round() as usize;
    let mut edges = Vec::with_capacity(target);
    if n >= 2 {
        for _ in 0..target {
            let u = rng.random_range(0..n);
            let v = pick(u, rng);
            if u != v {
                edges.push((NodeId::from(u), NodeId::from(v)));
            }
        }
    }
    Graph::from_edges(n, edges)
}

fn test_split(n: usize, test: usize, rng: &mut ChaCha8Rng) -> Result<SplitAssignment> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut splits = vec![Split::Train; n];
    for &i in &order[..test.min(n)] {
        splits[i] = Split::Test;
    }
    for (j, &i) in order[test.min(n)..].iter().enumerate() {
        if j % 2 == 1 {
            splits[i] = Split::Valid;
        }
    }
    SplitAssignment::new(splits)
}

#[derive(Debug, Clone, Copy)]
pub struct RandomConfig {
    pub test_nodes: usize,
    /// Non-test nodes added on top of the test nodes.
    pub extra_nodes: usize,
    pub dim: usize,
    pub classes: u32,
    pub avg_degree: f64,
    pub seed: u64,
}

/// Uniform `[0, 1)` features, uniform random edges and labels.
pub fn random_dataset(cfg: RandomConfig) -> Result<SynthDataset> {
    if cfg.dim == 0 || cfg.classes == 0 || cfg.test_nodes == 0 {
        return Err(Error::param(
            "synth",
            "dim, classes and test nodes must be positive",
        ));
    }
    let mut rng = rng_for(cfg.seed);
    let n = cfg.test_nodes + cfg.extra_nodes;
    let data = (0..n * cfg.dim).map(|_| rng.random::<f64>()).collect();
    let features = FeatureMatrix::new(DenseMatrix::from_vec(n, cfg.dim, data)?)?;
    let graph = sample_edges(n, cfg.avg_degree, &mut rng, |_, r| r.random_range(0..n))?;
    let labels = (0..n).map(|_| rng.random_range(0..cfg.classes)).collect();
    let predictions = PredictionTable::from_labels(labels, cfg.classes)?;
    let splits = test_split(n, cfg.test_nodes, &mut rng)?;
    Ok(SynthDataset {
        graph,
        features,
        splits,
        predictions,
        groups: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BundleConfig {
    pub nodes: usize,
    pub dim: usize,
    pub bundles: usize,
    /// Per-coordinate noise scale, relative to a unit direction.
    pub noise: f64,
    pub classes: u32,
    pub avg_degree: f64,
    /// Share of edges that stay inside a bundle.
    pub homophily: f64,
    pub seed: u64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            nodes: 2000,
            dim: 16,
            bundles: 10,
            noise: 0.5,
            classes: 4,
            avg_degree: 4.0,
            homophily: 0.9,
            seed: 0,
        }
    }
}

/// Nodes scattered around planted directions; every node is a test node.
pub fn bundle_dataset(cfg: BundleConfig) -> Result<SynthDataset> {
    if cfg.bundles == 0 || cfg.dim == 0 || cfg.nodes < cfg.bundles || cfg.classes == 0 {
        return Err(Error::param(
            "synth",
            "need dim, classes > 0 and nodes >= bundles > 0",
        ));
    }
    let mut rng = rng_for(cfg.seed);
    let centers: Vec<Vec<f64>> = (0..cfg.bundles)
        .map(|_| random_unit(&mut rng, cfg.dim))
        .collect();
    let groups: Vec<u32> = (0..cfg.nodes).map(|i| (i % cfg.bundles) as u32).collect();
    let mut data = Vec::with_capacity(cfg.nodes * cfg.dim);
    for &g in &groups {
        for &c in &centers[g as usize] {
            data.push(c + cfg.noise * gaussian(&mut rng));
        }
    }
    let features = FeatureMatrix::new(DenseMatrix::from_vec(cfg.nodes, cfg.dim, data)?)?;
    let b = cfg.bundles;
    let n = cfg.nodes;
    let graph = sample_edges(n, cfg.avg_degree, &mut rng, |u, r| {
        if r.random::<f64>() < cfg.homophily {
            // same residue class mod b means same bundle
            let slots = (n - 1 - u % b) / b + 1;
            u % b + b * r.random_range(0..slots)
        } else {
            r.random_range(0..n)
        }
    })?;
    let labels = (0..n).map(|_| rng.random_range(0..cfg.classes)).collect();
    let predictions = PredictionTable::from_labels(labels, cfg.classes)?;
    Ok(SynthDataset {
        graph,
        features,
        splits: SplitAssignment::all_test(n)?,
        predictions,
        groups,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryConfig {
    pub nodes: usize,
    pub dim: usize,
    /// Cloud centres sit at `+-separation` on the first axis.
    pub separation: f64,
    pub noise: f64,
    pub avg_degree: f64,
    pub homophily: f64,
    pub seed: u64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            nodes: 600,
            dim: 3,
            separation: 1.5,
            noise: 1.0,
            avg_degree: 4.0,
            homophily: 0.8,
            seed: 0,
        }
    }
}

/// Two overlapping clouds. True label = cloud; predicted label from a
/// one-layer GCN whose weights read the sign of the smoothed first feature.
pub fn boundary_dataset(cfg: BoundaryConfig) -> Result<SynthDataset> {
    if cfg.dim == 0 || cfg.nodes < 2 {
        return Err(Error::param("synth", "need dim > 0 and at least two nodes"));
    }
    let mut rng = rng_for(cfg.seed);
    let n = cfg.nodes;
    let groups: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let mut data = Vec::with_capacity(n * cfg.dim);
    for &g in &groups {
        let sign = if g == 0 { 1.0 } else { -1.0 };
        for j in 0..cfg.dim {
            let centre = if j == 0 { sign * cfg.separation } else { 0.0 };
            data.push(centre + cfg.noise * gaussian(&mut rng));
        }
    }
    let features = FeatureMatrix::new(DenseMatrix::from_vec(n, cfg.dim, data)?)?;
    let graph = sample_edges(n, cfg.avg_degree, &mut rng, |u, r| {
        if r.random::<f64>() < cfg.homophily {
            let slots = (n - 1 - u % 2) / 2 + 1;
            u % 2 + 2 * r.random_range(0..slots)
        } else {
            r.random_range(0..n)
        }
    })?;
    let mut w = DenseMatrix::zeros(cfg.dim, 2);
    w.set(0, 0, 1.0);
    w.set(0, 1, -1.0);
    let weights = GcnWeights::new(vec![w])?;
    let logits = gcn_forward(&features, &normalize_adjacency(&graph), &weights)?;
    let predictions =
        predict_labels(&logits)?.with_true_labels(groups.iter().map(|&g| Some(g)).collect())?;
    Ok(SynthDataset {
        graph,
        features,
        splits: SplitAssignment::all_test(n)?,
        predictions,
        groups,
    })
}
