//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; exits non-zero if any criterion fails.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use ce_forge::analysis::{
    accuracy_within_topk_gce, average_similarity, discrimination_score, global_accuracy, AsOptions,
    FeatureValuePredicate,
};
use ce_forge::index::{cap_overlap_ratio, weighted_kmeans};
use ce_forge::matrix::DenseMatrix;
use ce_forge::synth::{self, BoundaryConfig, BundleConfig, RandomConfig};
use ce_forge::CeSearcher;
use ce_forge::{
    aggregated_vectors, build_index, AggregatedTable, FeatureMatrix, GlobalStrategy, Graph,
    IndexParams, KsParams, NodeId, PredictionTable, SearchMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and sizes.
const KS_SYMMETRY_TOL: f64 = 1e-12;
const KS_IDENTITY_TOL: f64 = 1e-12;
const KS_CASES: usize = 1000;
const CAP_MC_SAMPLES: usize = 1_000_000;
const CAP_MC_TOL: f64 = 5e-3;
const CAP_CLOSED_FORM_TOL: f64 = 1e-9;
/// Relative slack for float rounding when comparing consecutive objectives.
const KMEANS_MONOTONE_REL_TOL: f64 = 1e-12;
const KMEANS_RUNS: u64 = 50;
const KMEANS_MAX_ITERS: usize = 100;
const ABLATION_SEEDS: u64 = 20;
const ABLATION_K: usize = 10;
const ABLATION_RATIO_FLOOR: f64 = 0.90;
/// Bundle noise for the ablation suite: bundles overlap enough that the
/// choice of candidate cluster matters.
const ABLATION_NOISE: f64 = 0.5;
const SPEEDUP_TEST_NODES: usize = 5000;
const SPEEDUP_QUERIES: usize = 400;
const METRIC_TOL: f64 = 1e-12;
const METRIC_INSTANCES: u64 = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("exact search matches brute-force oracle", exact_oracle),
        ("KS invariant suite", ks_invariants),
        ("cap overlap vs Monte Carlo", cap_geometry),
        ("weighted k-means monotone and convergent", kmeans_monotone),
        ("ablation ordering of average similarity", ablation),
        (
            "indexed search scans fewer candidates and runs faster",
            speedup,
        ),
        ("index storage is p * |V_test|", storage),
        ("metrics match direct recomputation", metrics),
        ("pipeline output is byte-deterministic", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "[{tag}] {}. {name} ({:.1}s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Independent reference implementations

fn naive_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Direct transcription of the propagation and sum, one node at a time.
fn naive_aggregate(
    features: &[Vec<f64>],
    adj: &[Vec<usize>],
    alpha: f64,
    hops: usize,
) -> Vec<Vec<f64>> {
    let mut x = features.to_vec();
    let mut agg = x.clone();
    for _ in 0..hops {
        let mut next = Vec::with_capacity(x.len());
        for v in 0..x.len() {
            let mut out: Vec<f64> = x[v].iter().map(|a| alpha * a).collect();
            if !adj[v].is_empty() {
                let scale = (1.0 - alpha) / adj[v].len() as f64;
                for &u in &adj[v] {
                    let c = naive_cos(&x[v], &x[u]);
                    for (o, xu) in out.iter_mut().zip(&x[u]) {
                        *o += scale * c * xu;
                    }
                }
            }
            next.push(out);
        }
        x = next;
        for (a, row) in agg.iter_mut().zip(&x) {
            for (s, y) in a.iter_mut().zip(row) {
                *s += y;
            }
        }
    }
    agg
}

fn adjacency(graph: &Graph) -> Vec<Vec<usize>> {
    (0..graph.num_nodes())
        .map(|v| graph.adjacent(v).iter().map(|u| u.index()).collect())
        .collect()
}

fn rows(f: &FeatureMatrix) -> Vec<Vec<f64>> {
    f.matrix().iter_rows().map(|r| r.to_vec()).collect()
}

/// Top-k cross-label test nodes by a plain double loop and full sort.
fn oracle_topk(
    agg: &AggregatedTable,
    preds: &PredictionTable,
    test: &[NodeId],
    v: NodeId,
    k: usize,
) -> Vec<(NodeId, f64)> {
    let mut all: Vec<(NodeId, f64)> = Vec::new();
    for &u in test {
        if preds.predicted(u) != preds.predicted(v) {
            all.push((u, agg.ks(v, u)));
        }
    }
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

// ---------------------------------------------------------------------------
// 1

fn exact_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut agg_err: f64 = 0.0;
    let mut queries = 0;
    let start = Instant::now();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let cfg = RandomConfig {
            test_nodes: rng.random_range(50..=300),
            extra_nodes: rng.random_range(0..100),
            dim: [4, 16, 64][rng.random_range(0..3)],
            classes: rng.random_range(2..=4),
            avg_degree: 4.0,
            seed,
        };
        let ds = synth::random_dataset(cfg).unwrap();
        let params = KsParams::new(0.5, 2).unwrap();
        let agg = aggregated_vectors(&ds.features, &ds.graph, params).unwrap();
        let naive = naive_aggregate(&rows(&ds.features), &adjacency(&ds.graph), 0.5, 2);
        for (i, row) in naive.iter().enumerate() {
            for (a, b) in row.iter().zip(agg.vector(NodeId::from(i))) {
                agg_err = agg_err.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        let test = ds.splits.test_nodes();
        let searcher = CeSearcher::new(&agg, &ds.predictions, test).unwrap();
        for k in [1, 5, 10] {
            for &v in test {
                queries += 1;
                let got: Vec<(NodeId, f64)> = searcher
                    .local_ce_exact(v, k)
                    .unwrap()
                    .hits
                    .iter()
                    .map(|h| (h.node, h.ks))
                    .collect();
                if got != oracle_topk(&agg, &ds.predictions, test, v, k) {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && agg_err < 1e-12 && secs < 60.0,
        format!("{queries} queries, {mismatches} mismatches, aggregate max rel err {agg_err:.1e}, {secs:.1}s"),
    )
}

// ---------------------------------------------------------------------------
// 2

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn build(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::from_edges(
        n,
        edges
            .iter()
            .map(|&(u, v)| (NodeId::from(u), NodeId::from(v))),
    )
    .unwrap()
}

fn ks_invariants() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..KS_CASES {
        let n = rng.random_range(2..25);
        let d = rng.random_range(1..8);
        let alpha = if case % 10 == 0 {
            1.0
        } else {
            rng.random::<f64>()
        };
        let hops = rng.random_range(0..4);
        let edges = random_graph(n, rng.random_range(0.05..0.5), &mut rng);
        let raw: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        let params = KsParams::new(alpha, hops).unwrap();
        let graph = build(n, &edges);
        let feats = FeatureMatrix::from_rows(&raw).unwrap();
        let agg = aggregated_vectors(&feats, &graph, params).unwrap();
        let mut fail = |what: &str| failures.push(format!("case {case}: {what}"));

        for v in 0..n {
            let v = NodeId::from(v);
            if agg.ks(v, v) != 1.0 {
                fail("self-similarity");
            }
            for u in 0..n {
                let u = NodeId::from(u);
                let s = agg.ks(v, u);
                if (s - agg.ks(u, v)).abs() > KS_SYMMETRY_TOL {
                    fail("symmetry");
                }
                if !(0.0..=1.0).contains(&s) {
                    fail("range");
                }
                if alpha == 1.0
                    && (s - naive_cos(&raw[v.index()], &raw[u.index()])).abs() > KS_IDENTITY_TOL
                {
                    fail("alpha=1 reduction");
                }
            }
        }

        // relabel nodes
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let p_edges: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let mut p_raw = vec![Vec::new(); n];
        for (i, r) in raw.iter().enumerate() {
            p_raw[perm[i]] = r.clone();
        }
        let p_agg = aggregated_vectors(
            &FeatureMatrix::from_rows(&p_raw).unwrap(),
            &build(n, &p_edges),
            params,
        )
        .unwrap();
        for v in 0..n {
            for u in 0..n {
                let a = agg.ks(NodeId::from(v), NodeId::from(u));
                let b = p_agg.ks(NodeId::from(perm[v]), NodeId::from(perm[u]));
                if (a - b).abs() > KS_IDENTITY_TOL {
                    fail("permutation invariance");
                }
            }
        }

        // two disjoint copies: each node matches its twin exactly
        let mut twin_edges = edges.clone();
        twin_edges.extend(edges.iter().map(|&(a, b)| (a + n, b + n)));
        let twin_raw: Vec<Vec<f64>> = raw.iter().chain(raw.iter()).cloned().collect();
        let t_agg = aggregated_vectors(
            &FeatureMatrix::from_rows(&twin_raw).unwrap(),
            &build(2 * n, &twin_edges),
            params,
        )
        .unwrap();
        for v in 0..n {
            if (t_agg.ks(NodeId::from(v), NodeId::from(v + n)) - 1.0).abs() > KS_IDENTITY_TOL {
                fail("isomorphic neighbourhood");
            }
        }
    }
    let detail = match failures.first() {
        None => format!("{KS_CASES} cases, 0 failures"),
        Some(f) => format!("{KS_CASES} cases, {} failures, first: {f}", failures.len()),
    };
    outcome(failures.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 3

/// Samples uniform points of the cap of half-angle `theta` around `e1` on
/// S^{d-1}, stored as `(cos t, sin t * u)` where `u` is the second
/// coordinate of a uniform direction orthogonal to `e1`.
fn cap_samples(d: usize, theta: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let exponent = (d - 2) as i32;
    let peak = theta.sin().powi(exponent);
    let mut out = Vec::with_capacity(CAP_MC_SAMPLES);
    while out.len() < CAP_MC_SAMPLES {
        let t = rng.random::<f64>() * theta;
        if rng.random::<f64>() * peak > t.sin().powi(exponent) {
            continue;
        }
        let u = if d == 2 {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        } else {
            let g: Vec<f64> = (0..d - 1)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            g[0] / g.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        out.push((t.cos(), t.sin() * u));
    }
    out
}

fn cap_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_mc: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    let mut errors = 0;
    for d in [2usize, 3, 5, 10] {
        for theta in [PI / 6.0, PI / 3.0] {
            let samples = cap_samples(d, theta, &mut rng);
            for i in 0..=10 {
                let phi = PI * i as f64 / 10.0;
                let Ok(ratio) = cap_overlap_ratio(phi, theta, d) else {
                    errors += 1;
                    continue;
                };
                let (c, s) = (phi.cos(), phi.sin());
                let inside = samples
                    .iter()
                    .filter(|&&(a, b)| a * c + b * s >= theta.cos())
                    .count();
                let mc = inside as f64 / samples.len() as f64;
                worst_mc = worst_mc.max((ratio - mc).abs());
                if d == 2 {
                    let closed = ((2.0 * theta - phi) / (2.0 * theta)).max(0.0);
                    worst_closed = worst_closed.max((ratio - closed).abs());
                }
            }
        }
    }
    outcome(
        errors == 0 && worst_mc <= CAP_MC_TOL && worst_closed <= CAP_CLOSED_FORM_TOL,
        format!("max |ratio - MC| {worst_mc:.2e} (tol {CAP_MC_TOL:.0e}), max |ratio - closed form| {worst_closed:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 4

fn kmeans_monotone() -> Outcome {
    let mut decreases = 0;
    let mut unconverged = 0;
    let mut max_iters_seen = 0;
    for run in 0..KMEANS_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + run);
        let n = rng.random_range(100..600);
        let d = [3usize, 8, 32][run as usize % 3];
        let centers: Vec<Vec<f64>> = (0..6)
            .map(|_| {
                (0..d)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            let row: Vec<f64> = centers[i % 6]
                .iter()
                .map(|c| c + 0.7 * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let len = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            data.extend(row.iter().map(|x| x / len));
        }
        let points = DenseMatrix::from_vec(n, d, data).unwrap();
        let weights: Vec<f64> = (0..n)
            .map(|_| {
                if run % 2 == 0 {
                    1.0
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        let out = weighted_kmeans(&points, &weights, 10, run, KMEANS_MAX_ITERS, 1e-6).unwrap();
        for w in out.objective_history.windows(2) {
            if w[1] < w[0] - KMEANS_MONOTONE_REL_TOL * w[0].abs() {
                decreases += 1;
            }
        }
        if !out.converged || out.iterations > KMEANS_MAX_ITERS {
            unconverged += 1;
        }
        max_iters_seen = max_iters_seen.max(out.iterations);
    }
    outcome(
        decreases == 0 && unconverged == 0,
        format!("{KMEANS_RUNS} runs, {decreases} objective decreases, {unconverged} unconverged, max {max_iters_seen} iterations"),
    )
}

// ---------------------------------------------------------------------------
// 5 and 6

struct Prepared {
    agg: AggregatedTable,
    predictions: PredictionTable,
    test: Vec<NodeId>,
}

fn bundles(seed: u64, nodes: usize, dim: usize) -> Prepared {
    let ds = synth::bundle_dataset(BundleConfig {
        nodes,
        dim,
        noise: ABLATION_NOISE,
        seed,
        ..Default::default()
    })
    .unwrap();
    let agg = aggregated_vectors(&ds.features, &ds.graph, KsParams::new(0.5, 2).unwrap()).unwrap();
    Prepared {
        agg,
        predictions: ds.predictions,
        test: ds.splits.test_nodes().to_vec(),
    }
}

fn index_params(seed: u64, partitions: usize, chain_weights: bool) -> IndexParams {
    IndexParams {
        partitions,
        seed,
        chain_weights,
        ..Default::default()
    }
}

fn ablation() -> Outcome {
    let opts = AsOptions::default();
    let mut sums = [0.0f64; 4];
    let mut scanned = 0.0;
    let mut scanned_queries = 0usize;
    for seed in 0..ABLATION_SEEDS {
        let p = bundles(seed, 2000, 16);
        let s = CeSearcher::new(&p.agg, &p.predictions, &p.test).unwrap();
        let exact = s.local_ce_all(SearchMode::Exact, None, ABLATION_K).unwrap();
        sums[0] += average_similarity(&exact, ABLATION_K, opts).unwrap();
        let variants = [
            index_params(seed, 50, true),
            index_params(seed, 50, false),
            index_params(seed, 1, true),
        ];
        for (j, params) in variants.into_iter().enumerate() {
            let index = build_index(&p.agg, &p.test, params).unwrap();
            let res = s
                .local_ce_all(SearchMode::Indexed, Some(&index), ABLATION_K)
                .unwrap();
            sums[j + 1] += average_similarity(&res, ABLATION_K, opts).unwrap();
            if j == 0 {
                scanned += res.iter().map(|r| r.candidates_scanned).sum::<usize>() as f64;
                scanned_queries += res.len();
            }
        }
    }
    let [exact, full, no_wc, no_sp] = sums.map(|x| x / ABLATION_SEEDS as f64);
    SCANNED.with(|c| c.set(scanned / scanned_queries as f64));
    let ratio = full / exact;
    outcome(
        exact >= full && full >= no_wc.max(no_sp) && ratio >= ABLATION_RATIO_FLOOR,
        format!(
            "AS exact {exact:.4}, full {full:.4}, w/o weighted clustering {no_wc:.4}, w/o supplementary partitions {no_sp:.4}, full/exact {ratio:.4}"
        ),
    )
}

thread_local! {
    static SCANNED: std::cell::Cell<f64> = const { std::cell::Cell::new(f64::NAN) };
}

fn speedup() -> Outcome {
    // candidates scanned on the 2000-node suite of criterion 5
    let mut mean_scanned = SCANNED.with(|c| c.get());
    if mean_scanned.is_nan() {
        let p = bundles(0, 2000, 16);
        let s = CeSearcher::new(&p.agg, &p.predictions, &p.test).unwrap();
        let index = build_index(&p.agg, &p.test, index_params(0, 50, true)).unwrap();
        let res = s
            .local_ce_all(SearchMode::Indexed, Some(&index), ABLATION_K)
            .unwrap();
        mean_scanned =
            res.iter().map(|r| r.candidates_scanned).sum::<usize>() as f64 / res.len() as f64;
    }
    let bound = 2.0 * 2000.0 / IndexParams::default().clusters as f64;

    let p = bundles(99, SPEEDUP_TEST_NODES, 64);
    let s = CeSearcher::new(&p.agg, &p.predictions, &p.test).unwrap();
    let index = build_index(&p.agg, &p.test, index_params(99, 50, true)).unwrap();
    let queries: Vec<NodeId> = p
        .test
        .iter()
        .step_by(p.test.len() / SPEEDUP_QUERIES)
        .copied()
        .collect();
    let time = |mode: SearchMode| {
        let start = Instant::now();
        for &v in &queries {
            std::hint::black_box(s.local_ce(mode, Some(&index), v, ABLATION_K).unwrap());
        }
        start.elapsed().as_secs_f64() / queries.len() as f64
    };
    time(SearchMode::Exact);
    let exact = time(SearchMode::Exact);
    let indexed = time(SearchMode::Indexed);
    outcome(
        mean_scanned <= bound && indexed < exact,
        format!(
            "mean scanned {mean_scanned:.1} (bound {bound:.0}); per query at |V_test|={SPEEDUP_TEST_NODES}: exact {:.1}us, indexed {:.1}us",
            exact * 1e6,
            indexed * 1e6
        ),
    )
}

// ---------------------------------------------------------------------------
// 7

fn storage() -> Outcome {
    let mut bad = Vec::new();
    let mut checked = 0;
    for (seed, (nodes, partitions, clusters)) in
        [(300, 50, 10), (500, 7, 3), (120, 1, 1), (64, 12, 64)]
            .into_iter()
            .enumerate()
    {
        let p = bundles(seed as u64, nodes, 8);
        let params = IndexParams {
            partitions,
            clusters,
            seed: seed as u64,
            ..Default::default()
        };
        let index = build_index(&p.agg, &p.test, params).unwrap();
        checked += 1;
        let expected = partitions * p.test.len();
        let mut ok = index.storage_entries() == expected;
        for part in index.partitions() {
            let mut seen: Vec<NodeId> = part.members.iter().flatten().copied().collect();
            seen.sort_unstable();
            ok &= seen == p.test;
        }
        if !ok {
            bad.push(format!(
                "p={partitions} |V_test|={}: {} entries",
                p.test.len(),
                index.storage_entries()
            ));
        }
    }
    outcome(
        bad.is_empty(),
        format!("{checked} indexes checked; mismatches: {bad:?}"),
    )
}

// ---------------------------------------------------------------------------
// 8

fn metrics() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for seed in 0..METRIC_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + seed);
        let ds = synth::random_dataset(RandomConfig {
            test_nodes: rng.random_range(30..150),
            extra_nodes: 20,
            dim: 6,
            classes: rng.random_range(2..=4),
            avg_degree: 3.0,
            seed,
        })
        .unwrap();
        let n = ds.features.num_nodes();
        let truth: Vec<Option<u32>> = (0..n)
            .map(|_| Some(rng.random_range(0..ds.predictions.num_classes())))
            .collect();
        let preds = ds
            .predictions
            .clone()
            .with_true_labels(truth.clone())
            .unwrap();
        let agg =
            aggregated_vectors(&ds.features, &ds.graph, KsParams::new(0.5, 2).unwrap()).unwrap();
        let test = ds.splits.test_nodes();
        let s = CeSearcher::new(&agg, &preds, test).unwrap();
        let k = rng.random_range(1..=10);
        let results = s.local_ce_all(SearchMode::Exact, None, k).unwrap();

        let direct_as = results
            .iter()
            .map(|r| r.hits.iter().map(|h| h.ks).sum::<f64>() / k as f64)
            .sum::<f64>()
            / results.len() as f64;
        worst = worst.max(
            (average_similarity(&results, k, AsOptions::default()).unwrap() - direct_as).abs(),
        );

        let pred = FeatureValuePredicate::range(0, 0.5, 1.0).unwrap();
        for r in &results {
            let fv = ds.features.row(r.query)[0];
            if !(0.5..1.0).contains(&fv) {
                continue;
            }
            let differ = r
                .hits
                .iter()
                .filter(|h| !(0.5..1.0).contains(&ds.features.row(h.node)[0]))
                .count();
            let got =
                discrimination_score(&pred, &ds.features, r.query, &r.hits, k, false).unwrap();
            worst = worst.max((got - differ as f64 / k as f64).abs());
        }

        let pairs = s
            .global_ce(k, SearchMode::Exact, None, GlobalStrategy::PerNodeTop1)
            .unwrap();
        if !pairs.is_empty() {
            let mut nodes = HashSet::new();
            for p in &pairs {
                nodes.insert(p.pair.0);
                nodes.insert(p.pair.1);
            }
            let correct = nodes
                .iter()
                .filter(|v| preds.predicted(**v) == truth[v.index()])
                .count();
            let direct = correct as f64 / nodes.len() as f64;
            worst =
                worst.max((accuracy_within_topk_gce(&pairs, &preds, k).unwrap() - direct).abs());
        }
    }
    let recompute_ok = worst <= METRIC_TOL;
    notes.push(format!(
        "max deviation {worst:.1e} over {METRIC_INSTANCES} instances"
    ));

    let (ds_one, ds_zero) = ds_endpoints();
    notes.push(format!("DS endpoints {ds_one}/{ds_zero}"));

    let mut below = 0;
    let mut curve = Vec::new();
    for seed in 0..5 {
        let ds = synth::boundary_dataset(BoundaryConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let agg =
            aggregated_vectors(&ds.features, &ds.graph, KsParams::new(0.5, 2).unwrap()).unwrap();
        let test = ds.splits.test_nodes();
        let s = CeSearcher::new(&agg, &ds.predictions, test).unwrap();
        let pairs = s
            .global_ce(10, SearchMode::Exact, None, GlobalStrategy::PerNodeTop1)
            .unwrap();
        let topk = accuracy_within_topk_gce(&pairs, &ds.predictions, 10).unwrap();
        let global = global_accuracy(&ds.predictions, test).unwrap();
        if topk < global {
            below += 1;
        }
        curve.push(format!("{topk:.2}<{global:.2}"));
    }
    notes.push(format!(
        "boundary top-10 vs global accuracy: {}",
        curve.join(" ")
    ));
    outcome(
        recompute_ok && ds_one == 1.0 && ds_zero == 0.0 && below == 5,
        notes.join("; "),
    )
}

/// Mean DS of a feature equal to the predicted label (expected 1) and of a
/// constant feature (expected 0).
fn ds_endpoints() -> (f64, f64) {
    let ds = synth::random_dataset(RandomConfig {
        test_nodes: 80,
        extra_nodes: 0,
        dim: 4,
        classes: 2,
        avg_degree: 3.0,
        seed: 81,
    })
    .unwrap();
    let n = ds.features.num_nodes();
    let mut raw = rows(&ds.features);
    for (v, r) in raw.iter_mut().enumerate() {
        r[0] = ds.predictions.predicted(NodeId::from(v)).unwrap() as f64;
        r[1] = 1.0;
    }
    let features = FeatureMatrix::from_rows(&raw).unwrap();
    let agg = aggregated_vectors(&features, &ds.graph, KsParams::default()).unwrap();
    let test: Vec<NodeId> = (0..n).map(NodeId::from).collect();
    let s = CeSearcher::new(&agg, &ds.predictions, &test).unwrap();
    let results = s.local_ce_all(SearchMode::Exact, None, 10).unwrap();
    let table = ce_forge::analysis::dataset_discrimination_table(
        &[
            FeatureValuePredicate::exact(0, 1.0),
            FeatureValuePredicate::exact(1, 1.0),
        ],
        &features,
        &results,
        10,
        false,
    )
    .unwrap();
    (table[0].mean_ds, table[1].mean_ds)
}

// ---------------------------------------------------------------------------
// 9

/// Runs the built binary in a fresh process; stdout and stderr are discarded.
fn run_cli(args: &[&str]) -> bool {
    std::process::Command::new(env!("CARGO_BIN_EXE_ce-forge"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn pipeline(dir: &Path) -> Result<(), String> {
    let d = |f: &str| dir.join(f).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "synth",
            "--kind",
            "boundary",
            "--nodes",
            "400",
            "--seed",
            "5",
            "--out",
            &d("data"),
        ],
        vec![
            "aggregate",
            "--graph",
            &d("data/graph.csv"),
            "--features",
            &d("data/features.csv"),
            "--out",
            &d("agg.bin"),
        ],
        vec![
            "build-index",
            "--cache",
            &d("agg.bin"),
            "--splits",
            &d("data/splits.csv"),
            "--out",
            &d("index.json"),
            "--partitions",
            "20",
            "--seed",
            "11",
        ],
        vec![
            "query",
            "--cache",
            &d("agg.bin"),
            "--splits",
            &d("data/splits.csv"),
            "--predictions",
            &d("data/predictions.csv"),
            "--index",
            &d("index.json"),
            "--all-test",
            "--mode",
            "indexed",
            "--k",
            "10",
            "--out",
            &d("local.jsonl"),
            "--summary",
            &d("local.summary.json"),
        ],
        vec![
            "query",
            "--cache",
            &d("agg.bin"),
            "--splits",
            &d("data/splits.csv"),
            "--predictions",
            &d("data/predictions.csv"),
            "--global",
            "--k",
            "50",
            "--out",
            &d("global.jsonl"),
            "--summary",
            &d("global.summary.json"),
        ],
        vec![
            "analyze",
            "as",
            "--results",
            &d("local.jsonl"),
            "--k",
            "10",
            "--out",
            &d("as.json"),
        ],
        vec![
            "analyze",
            "ds",
            "--results",
            &d("local.jsonl"),
            "--graph",
            &d("data/graph.csv"),
            "--features",
            &d("data/features.csv"),
            "--predicate",
            "0:0..100",
            "--predicate",
            "1:0..100",
            "--out",
            &d("ds.csv"),
        ],
        vec![
            "analyze",
            "error-curve",
            "--pairs",
            &d("global.jsonl"),
            "--predictions",
            &d("data/predictions.csv"),
            "--splits",
            &d("data/splits.csv"),
            "--out",
            &d("curve.csv"),
        ],
        vec![
            "analyze",
            "export-ce",
            "--pairs",
            &d("global.jsonl"),
            "--k",
            "20",
            "--out",
            &d("ce.csv"),
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        if !run_cli(&args) {
            return Err(format!("`{}` failed", args.join(" ")));
        }
    }
    Ok(())
}

const PIPELINE_OUTPUTS: &[&str] = &[
    "data/graph.csv",
    "data/features.csv",
    "data/splits.csv",
    "data/predictions.csv",
    "agg.bin",
    "agg.bin.json",
    "index.json",
    "index.json.centroids.bin",
    "local.jsonl",
    "local.summary.json",
    "global.jsonl",
    "global.summary.json",
    "as.json",
    "ds.csv",
    "curve.csv",
    "ce.csv",
];

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        if let Err(e) = pipeline(dir) {
            return outcome(false, e);
        }
    }
    let mut differing = Vec::new();
    for f in PIPELINE_OUTPUTS {
        let x = std::fs::read(a.path().join(f));
        let y = std::fs::read(b.path().join(f));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y && !x.is_empty() => {}
            _ => differing.push(*f),
        }
    }
    outcome(
        differing.is_empty(),
        format!(
            "{} files compared, differing or missing: {differing:?}",
            PIPELINE_OUTPUTS.len()
        ),
    )
}
