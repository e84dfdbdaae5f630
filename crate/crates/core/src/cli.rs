//! Command-line front end. `main.rs` only forwards to [`run`], so the test
//! suites drive the exact same code path in-process.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::parser::ValueSource;
use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::warn;
use serde_json::json;

use crate::analysis::{self, round6, AsOptions, FeatureValuePredicate, MetricReport};
use crate::artifact::file_sha256;
use crate::error::Error;
use crate::graph::{load_features, load_graph, load_splits, NodeId};
use crate::index::{self, build_index, IndexParams, IndexProvenance, SphericalIndex};
use crate::ks::{self, aggregated_vectors, read_cache, write_cache, CacheMeta, KsParams};
use crate::model::{
    gcn_forward, load_predictions, normalize_adjacency, predict_labels, GcnWeights,
};
use crate::search::{
    self, pair_json_line, parse_pair_lines, parse_result_lines, result_json_line, CeSearcher,
    GlobalStrategy, QueryStatus, SearchMode,
};
use crate::synth;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "CE_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "ce-forge",
    version,
    about = "Counterfactual evidence search for graph node classifiers"
)]
pub struct Cli {
    /// File of `key = value` lines used for any flag not given on the command line.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Precompute the aggregated KS vectors of every node.
    Aggregate(AggregateArgs),
    /// Run GCN inference and write predicted labels.
    Predict(PredictArgs),
    /// Build the spherical index over the test nodes.
    BuildIndex(BuildIndexArgs),
    /// Local or global counterfactual-evidence queries.
    Query(QueryArgs),
    /// Metrics over query outputs.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Random,
    Bundles,
    Boundary,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    classes: Option<u32>,
}

#[derive(Debug, Args)]
struct InputChecks {
    /// Edge list the cache must have been built from.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Feature file the cache must have been built from.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Expected KS damping; refused if the cache used another.
    #[arg(long)]
    alpha: Option<f64>,
    /// Expected KS hop count; refused if the cache used another.
    #[arg(long)]
    hops: Option<usize>,
    /// Use artifacts even when checksums or parameters disagree.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = ks::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = ks::DEFAULT_HOPS)]
    hops: usize,
    /// Cache file; its metadata goes to `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// GCN weights as JSON `{"layers":[{"rows","cols","data"}, ...]}`.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    /// Optional `node_id,label` ground truth, copied into the output.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    /// Index file; centroids go to `<out>.centroids.bin`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = index::DEFAULT_PARTITIONS)]
    partitions: usize,
    #[arg(long, default_value_t = index::DEFAULT_CLUSTERS)]
    clusters: usize,
    /// Cap half-angle in radians.
    #[arg(long, default_value_t = index::DEFAULT_THETA)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = index::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = index::DEFAULT_TOL)]
    tol: f64,
    /// Cluster every partition with uniform weights.
    #[arg(long)]
    no_weight_chain: bool,
    #[command(flatten)]
    checks: InputChecks,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("target").required(true).args(["node", "all_test", "global"])))]
struct QueryArgs {
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Query node ids (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    node: Vec<u32>,
    /// Query every test node.
    #[arg(long)]
    all_test: bool,
    /// Global top-k pairs instead of per-node results.
    #[arg(long)]
    global: bool,
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = StrategyArg::PerNodeTop1)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// JSON-lines output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON; stderr when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Add wall-clock timings to the summary (makes it run-dependent).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    checks: InputChecks,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Indexed,
}

impl From<ModeArg> for SearchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => SearchMode::Exact,
            ModeArg::Indexed => SearchMode::Indexed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    PerNodeTop1,
    FullPairwise,
}

impl From<StrategyArg> for GlobalStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::PerNodeTop1 => GlobalStrategy::PerNodeTop1,
            StrategyArg::FullPairwise => GlobalStrategy::FullPairwise,
        }
    }
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Average similarity of local results.
    As(AsArgs),
    /// Discrimination-score ranking of feature values.
    Ds(DsArgs),
    /// Accuracy within the top-k global pairs over a grid of k.
    ErrorCurve(ErrorCurveArgs),
    /// Distinct nodes of the top-k global pairs as a validation set.
    ExportCe(ExportArgs),
}

#[derive(Debug, Args)]
struct AsArgs {
    /// Local results written by `query`.
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Divide by the hit count rather than k.
    #[arg(long)]
    effective_k: bool,
    /// Leave nodes without hits out of the mean.
    #[arg(long)]
    exclude_empty: bool,
    /// Report JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DsArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// `F=V` exact match or `F:LO..HI` half-open range (repeatable).
    #[arg(long, required = true)]
    predicate: Vec<String>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    effective_k: bool,
    /// Ranking CSV; the aligned table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ErrorCurveArgs {
    /// Global pairs written by `query --global`.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50,100")]
    grid: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = 1200)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn configure_threads() {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        _ => warn!("ignoring {THREADS_ENV}={raw:?}: expected a positive integer"),
    }
}

fn read_config(path: &Path) -> anyhow::Result<Vec<(String, String)>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), i + 1);
        };
        let v = v.trim().trim_matches('"');
        out.push((k.trim().replace('_', "-"), v.to_string()));
    }
    Ok(out)
}

/// Appends `--key value` for every config entry whose flag exists on the
/// chosen subcommand and was not given explicitly.
fn merge_config(mut args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let probe = Cli::command().ignore_errors(true);
    let Ok(top) = probe.clone().try_get_matches_from(&args) else {
        return Ok(args);
    };
    let mut leaf_cmd = probe;
    let mut leaf = &top;
    while let Some((name, sub)) = leaf.subcommand() {
        let Some(next) = leaf_cmd.find_subcommand(name) else {
            break;
        };
        leaf_cmd = next.clone();
        leaf = sub;
    }
    let config = leaf
        .get_one::<PathBuf>("config")
        .or_else(|| top.get_one::<PathBuf>("config"))
        .cloned();
    let Some(config) = config else {
        return Ok(args);
    };
    for (key, value) in read_config(&config)? {
        if key == "config" {
            continue;
        }
        let Some(arg) = leaf_cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
        else {
            warn!("config key `{key}` does not apply to this command");
            continue;
        };
        if leaf.value_source(arg.get_id().as_str()) == Some(ValueSource::CommandLine) {
            continue;
        }
        if arg.get_action().takes_values() {
            args.push(format!("--{key}").into());
            args.push(value.into());
        } else if matches!(value.as_str(), "true" | "1" | "yes") {
            args.push(format!("--{key}").into());
        }
    }
    Ok(args)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::BuildIndex(a) => cmd_build_index(a),
        Command::Query(a) => cmd_query(a),
        Command::Analyze(AnalyzeCommand::As(a)) => cmd_as(a),
        Command::Analyze(AnalyzeCommand::Ds(a)) => cmd_ds(a),
        Command::Analyze(AnalyzeCommand::ErrorCurve(a)) => cmd_error_curve(a),
        Command::Analyze(AnalyzeCommand::ExportCe(a)) => cmd_export(a),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<()> {
    let ds = match a.kind {
        SynthKind::Random => synth::random_dataset(synth::RandomConfig {
            test_nodes: a.nodes.unwrap_or(300),
            extra_nodes: a.nodes.unwrap_or(300) / 2,
            dim: a.dim.unwrap_or(16),
            classes: a.classes.unwrap_or(3),
            avg_degree: 4.0,
            seed: a.seed,
        })?,
        SynthKind::Bundles => {
            let d = synth::BundleConfig::default();
            synth::bundle_dataset(synth::BundleConfig {
                nodes: a.nodes.unwrap_or(d.nodes),
                dim: a.dim.unwrap_or(d.dim),
                classes: a.classes.unwrap_or(d.classes),
                seed: a.seed,
                ..d
            })?
        }
        SynthKind::Boundary => {
            if a.classes.is_some_and(|c| c != 2) {
                bail!("the boundary dataset always has two classes");
            }
            let d = synth::BoundaryConfig::default();
            synth::boundary_dataset(synth::BoundaryConfig {
                nodes: a.nodes.unwrap_or(d.nodes),
                dim: a.dim.unwrap_or(d.dim),
                seed: a.seed,
                ..d
            })?
        }
    };
    let paths = ds.write(&a.out)?;
    println!(
        "{}",
        json!({
            "graph": paths.graph,
            "features": paths.features,
            "splits": paths.splits,
            "predictions": paths.predictions,
            "nodes": ds.features.num_nodes(),
            "edges": ds.graph.num_edges(),
            "test_nodes": ds.splits.test_nodes().len(),
        })
    );
    Ok(())
}

fn cmd_aggregate(a: AggregateArgs) -> anyhow::Result<()> {
    let params = KsParams::new(a.alpha, a.hops)?;
    let graph = load_graph(&a.graph)?;
    let features = load_features(&a.features, &graph, None)?;
    let start = Instant::now();
    let table = aggregated_vectors(&features, &graph, params)?;
    let meta = write_cache(
        &a.out,
        &table,
        params,
        file_sha256(&a.graph)?,
        file_sha256(&a.features)?,
    )?;
    eprintln!(
        "aggregate: {} nodes in {:.3}s",
        meta.num_nodes,
        start.elapsed().as_secs_f64()
    );
    println!("{}", serde_json::to_string(&meta)?);
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> anyhow::Result<()> {
    let graph = load_graph(&a.graph)?;
    let features = load_features(&a.features, &graph, None)?;
    let splits = load_splits(&a.splits, graph.num_nodes(), None)?;
    let weights = GcnWeights::load(&a.weights)?;
    let logits = gcn_forward(&features, &normalize_adjacency(&graph), &weights)?;
    let mut table = predict_labels(&logits)?;
    if let Some(truth) = &a.truth {
        let t = load_predictions(truth, &splits, Some(table.num_classes()), None)?;
        let labels = (0..graph.num_nodes())
            .map(|i| t.predicted(NodeId::from(i)))
            .collect();
        table = table.with_true_labels(labels)?;
    }
    table.write_csv(&a.out)?;
    Ok(())
}

fn stale(force: bool, path: &Path, message: String) -> anyhow::Result<()> {
    if force {
        warn!(
            "{}: {message} (continuing because of --force)",
            path.display()
        );
        Ok(())
    } else {
        Err(Error::StaleArtifact {
            path: path.into(),
            message: format!("{message}; rerun the producing command or pass --force"),
        }
        .into())
    }
}

fn check_cache(meta: &CacheMeta, cache: &Path, c: &InputChecks) -> anyhow::Result<()> {
    if let Some(g) = &c.graph {
        if file_sha256(g)? != meta.edges_sha256 {
            stale(
                c.force,
                cache,
                format!("built from a different graph than {}", g.display()),
            )?;
        }
    }
    if let Some(f) = &c.features {
        if file_sha256(f)? != meta.features_sha256 {
            stale(
                c.force,
                cache,
                format!("built from different features than {}", f.display()),
            )?;
        }
    }
    if let Some(alpha) = c.alpha {
        if alpha != meta.alpha {
            stale(
                c.force,
                cache,
                format!("built with alpha {} not {alpha}", meta.alpha),
            )?;
        }
    }
    if let Some(hops) = c.hops {
        if hops != meta.hops {
            stale(
                c.force,
                cache,
                format!("built with {} hops not {hops}", meta.hops),
            )?;
        }
    }
    Ok(())
}

fn cmd_build_index(a: BuildIndexArgs) -> anyhow::Result<()> {
    let (table, meta) = read_cache(&a.cache)?;
    check_cache(&meta, &a.cache, &a.checks)?;
    let splits = load_splits(&a.splits, table.num_nodes(), None)?;
    let params = IndexParams {
        partitions: a.partitions,
        clusters: a.clusters,
        theta: a.theta,
        seed: a.seed,
        max_iters: a.max_iters,
        tol: a.tol,
        chain_weights: !a.no_weight_chain,
    };
    let start = Instant::now();
    let index = build_index(&table, splits.test_nodes(), params)?;
    let provenance = IndexProvenance {
        alpha: meta.alpha,
        hops: meta.hops,
        aggregate_sha256: meta.cache_sha256.clone(),
    };
    index.save(&a.out, &provenance)?;
    eprintln!(
        "build-index: {} test nodes, {} partitions in {:.3}s",
        index.test_nodes().len(),
        index.partitions().len(),
        start.elapsed().as_secs_f64()
    );
    println!(
        "{}",
        json!({
            "partitions": params.partitions,
            "clusters": params.clusters,
            "theta": round6(params.theta),
            "seed": params.seed,
            "chain_weights": params.chain_weights,
            "test_nodes": index.test_nodes().len(),
            "storage_entries": index.storage_entries(),
            "unconverged_partitions": index.partitions().iter().filter(|p| !p.converged).count(),
            "chosen_weight_histogram": index.weight_histogram(10),
        })
    );
    Ok(())
}

fn cmd_query(a: QueryArgs) -> anyhow::Result<()> {
    let (table, meta) = read_cache(&a.cache)?;
    check_cache(&meta, &a.cache, &a.checks)?;
    let splits = load_splits(&a.splits, table.num_nodes(), None)?;
    let predictions = load_predictions(&a.predictions, &splits, None, None)?;
    let mode = SearchMode::from(a.mode);
    let index = match (&a.index, mode) {
        (Some(path), _) => {
            let (index, prov) = SphericalIndex::load(path, table.num_nodes())?;
            if prov.aggregate_sha256 != meta.cache_sha256 {
                stale(
                    a.checks.force,
                    path,
                    format!("built from a different cache than {}", a.cache.display()),
                )?;
            }
            if index.test_nodes() != splits.test_nodes() {
                stale(
                    a.checks.force,
                    path,
                    "indexed test nodes differ from the split file".into(),
                )?;
            }
            Some(index)
        }
        (None, SearchMode::Indexed) => bail!("--mode indexed needs --index"),
        (None, SearchMode::Exact) => None,
    };
    let searcher = CeSearcher::new(&table, &predictions, splits.test_nodes())?;
    let start = Instant::now();

    let mut lines = String::new();
    let mut summary = serde_json::Map::new();
    summary.insert("mode".into(), json!(mode));
    summary.insert("k".into(), json!(a.k));
    let queries;
    if a.global {
        let strategy = GlobalStrategy::from(a.strategy);
        let pairs = searcher.global_ce(a.k, mode, index.as_ref(), strategy)?;
        for p in &pairs {
            lines.push_str(&pair_json_line(p));
            lines.push('\n');
        }
        let mean = if pairs.is_empty() {
            0.0
        } else {
            pairs.iter().map(|p| p.ks).sum::<f64>() / pairs.len() as f64
        };
        queries = 1;
        summary.insert("strategy".into(), json!(strategy.to_string()));
        summary.insert("pairs".into(), json!(pairs.len()));
        summary.insert("mean_ks".into(), json!(round6(mean)));
    } else {
        let results = if a.all_test {
            searcher.local_ce_all(mode, index.as_ref(), a.k)?
        } else {
            let mut bad = Vec::new();
            let mut out = Vec::new();
            for &v in &a.node {
                match searcher.local_ce(mode, index.as_ref(), NodeId(v), a.k) {
                    Ok(r) => out.push(r),
                    Err(Error::NotTestNode(_) | Error::NotIndexed(_)) => bad.push(v),
                    Err(e) => return Err(e.into()),
                }
            }
            if !bad.is_empty() {
                bail!("not test nodes: {bad:?}");
            }
            out
        };
        for r in &results {
            lines.push_str(&result_json_line(r));
            lines.push('\n');
        }
        queries = results.len();
        let count = |s: QueryStatus| results.iter().filter(|r| r.status == s).count();
        let scanned = results.iter().map(|r| r.candidates_scanned).sum::<usize>() as f64;
        summary.insert("queries".into(), json!(queries));
        summary.insert("found".into(), json!(count(QueryStatus::Found)));
        summary.insert(
            "no_counterfactual".into(),
            json!(count(QueryStatus::NoCounterfactual)),
        );
        summary.insert(
            "empty_candidate_cluster".into(),
            json!(count(QueryStatus::EmptyCandidateCluster)),
        );
        if !results.is_empty() {
            let avg = analysis::average_similarity(&results, a.k, AsOptions::default())?;
            summary.insert("average_similarity".into(), json!(round6(avg)));
            summary.insert(
                "mean_candidates_scanned".into(),
                json!(round6(scanned / queries as f64)),
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    eprintln!("query: {queries} queries in {elapsed:.3}s");
    if a.timing {
        summary.insert("elapsed_seconds".into(), json!(round6(elapsed)));
        summary.insert(
            "seconds_per_query".into(),
            json!(elapsed / queries.max(1) as f64),
        );
    }
    write_text(a.out.as_deref(), &lines)?;
    let summary = serde_json::to_string_pretty(&summary)? + "\n";
    match &a.summary {
        Some(p) => fs::write(p, summary).map_err(|e| Error::io(p, e))?,
        None => eprint!("{summary}"),
    }
    Ok(())
}

fn read_results(path: &Path) -> anyhow::Result<Vec<search::CeQueryResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_result_lines(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_pairs(path: &Path) -> anyhow::Result<Vec<search::GcePair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pair_lines(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_as(a: AsArgs) -> anyhow::Result<()> {
    let results = read_results(&a.results)?;
    let opts = AsOptions {
        effective_k: a.effective_k,
        exclude_empty: a.exclude_empty,
    };
    let value = analysis::average_similarity(&results, a.k, opts)?;
    let report = MetricReport::new("average_similarity", value, a.k, results.len())
        .param("effective_k", a.effective_k)
        .param("exclude_empty", a.exclude_empty);
    write_text(a.out.as_deref(), &(report.to_json() + "\n"))
}

fn cmd_ds(a: DsArgs) -> anyhow::Result<()> {
    let results = read_results(&a.results)?;
    let graph = load_graph(&a.graph)?;
    let features = load_features(&a.features, &graph, None)?;
    let predicates = a
        .predicate
        .iter()
        .map(|s| s.parse::<FeatureValuePredicate>())
        .collect::<Result<Vec<_>, _>>()?;
    let rows = analysis::dataset_discrimination_table(
        &predicates,
        &features,
        &results,
        a.k,
        a.effective_k,
    )?;
    if let Some(out) = &a.out {
        analysis::write_ds_table_csv(&rows, out)?;
    }
    print!("{}", analysis::format_ds_table(&rows));
    Ok(())
}

fn cmd_error_curve(a: ErrorCurveArgs) -> anyhow::Result<()> {
    let pairs = read_pairs(&a.pairs)?;
    let splits = load_splits(&a.splits, count_nodes(&a.splits)?, None)?;
    let predictions = load_predictions(&a.predictions, &splits, None, None)?;
    let points = analysis::error_curve(&pairs, &predictions, splits.test_nodes(), &a.grid)?;
    analysis::write_error_curve_csv(&points, &a.out)?;
    Ok(())
}

/// Node count implied by a split file that lists every node once.
fn count_nodes(splits: &Path) -> anyhow::Result<usize> {
    let text = fs::read_to_string(splits).map_err(|e| Error::io(splits, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with("node_id"))
        .count())
}

fn cmd_export(a: ExportArgs) -> anyhow::Result<()> {
    let pairs = read_pairs(&a.pairs)?;
    let rows = analysis::export_validation_set(&pairs, a.k, &a.out)?;
    if pairs.len() < a.k {
        warn!("only {} pairs available for k = {}", pairs.len(), a.k);
    }
    eprintln!("export-ce: {rows} nodes");
    Ok(())
}
