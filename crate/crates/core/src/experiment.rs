//! End-to-end runs shared by the command-line tool and the test suites:
//! encoding precomputation, a training run with its artifacts, and the two
//! ablations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ConfigError, RunConfig, RESOLVED_FILE};
use crate::graph::{split_nodes, GraphError, MultiRelGraph, SplitAssignment};
use crate::model::{save_model, Architecture, MandateModel, ModelError, ModelInputs, ThetaMode};
use crate::train::{evaluate, train, MetricsReport, TrainError, TrainHistory};
use crate::walk::{default_anchors, pe_rows, read_pe_cache, read_pe_cache_header, write_pe_cache, PeTable, WalkError, WalkOperator};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const SPLIT_FILE: &str = "split.json";
pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("encoding cache {path} does not match the run: {detail}")]
    CacheMismatch { path: String, detail: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn cache_path(dir: &Path, relation: usize) -> PathBuf {
    dir.join(format!("pe_rel{relation}.bin"))
}

/// Anchor set for a graph of `n` nodes, with a notice when the request
/// exceeds `n` and had to be clamped.
pub fn resolve_anchors(n: usize, requested: usize, seed: u64) -> (Vec<usize>, Option<String>) {
    let notice = (requested > n).then(|| format!("anchors clamped from {requested} to {n} (graph has {n} nodes)"));
    (default_anchors(n, requested, seed), notice)
}

/// Walk encodings of every node, one table per relation.
pub fn compute_tables(graph: &MultiRelGraph, hops: usize, anchors: &[usize]) -> Result<Vec<PeTable>, ExperimentError> {
    let all: Vec<usize> = (0..graph.num_nodes()).collect();
    (0..graph.num_relations())
        .map(|r| {
            let w = WalkOperator::new(graph.adjacency(r)?)?;
            Ok(pe_rows(&w, &all, hops, anchors)?)
        })
        .collect()
}

/// Read cached tables from `dir`, refusing caches built from another
/// graph or with another depth or anchor set.
pub fn load_tables(
    graph: &MultiRelGraph,
    dir: &Path,
    hops: usize,
    anchors: &[usize],
) -> Result<Vec<PeTable>, ExperimentError> {
    (0..graph.num_relations())
        .map(|r| {
            let path = cache_path(dir, r);
            let (header, table) = read_pe_cache(&path, Some(&graph.relation_hash(r)?))?;
            let mismatch = |detail: String| ExperimentError::CacheMismatch { path: path.display().to_string(), detail };
            if header.hops != hops {
                return Err(mismatch(format!("cache has K={}, run needs K={hops}", header.hops)));
            }
            if table.anchors() != anchors {
                return Err(mismatch(format!(
                    "cache has {} anchors, run needs {}",
                    table.anchors().len(),
                    anchors.len()
                )));
            }
            Ok(table)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PrecomputeSummary {
    pub files: Vec<PathBuf>,
    pub num_anchors: usize,
    pub notice: Option<String>,
}

/// Write one cache file per relation into `out`. Existing caches from a
/// different graph are refused unless `force` is set.
pub fn precompute_pe(
    graph: &MultiRelGraph,
    hops: usize,
    requested_anchors: usize,
    seed: u64,
    out: &Path,
    force: bool,
) -> Result<PrecomputeSummary, ExperimentError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    if !force {
        for r in 0..graph.num_relations() {
            let path = cache_path(out, r);
            if path.exists() {
                let header = read_pe_cache_header(&path)?;
                let expected = graph.relation_hash(r)?;
                if header.graph_hash != expected {
                    // Surface the same error a reader would get.
                    read_pe_cache(&path, Some(&expected))?;
                }
            }
        }
    }
    let (anchors, notice) = resolve_anchors(graph.num_nodes(), requested_anchors, seed);
    let tables = compute_tables(graph, hops, &anchors)?;
    let mut files = Vec::new();
    for (r, table) in tables.iter().enumerate() {
        let path = cache_path(out, r);
        write_pe_cache(&path, table, &graph.relation_hash(r)?)?;
        files.push(path);
    }
    Ok(PrecomputeSummary { files, num_anchors: anchors.len(), notice })
}

/// Inputs for a run: cached encodings when `pe_dir` is given, fresh ones
/// otherwise.
pub fn build_inputs(
    graph: &MultiRelGraph,
    cfg: &RunConfig,
    pe_dir: Option<&Path>,
) -> Result<(ModelInputs, Vec<usize>), ExperimentError> {
    let (anchors, _) = resolve_anchors(graph.num_nodes(), cfg.anchors, cfg.seed);
    let tables = match pe_dir {
        Some(dir) => load_tables(graph, dir, cfg.model.hops, &anchors)?,
        None => compute_tables(graph, cfg.model.hops, &anchors)?,
    };
    Ok((ModelInputs::new(graph, tables)?, anchors))
}

/// Inputs matching a trained model's depth and anchors.
pub fn inputs_for_model(graph: &MultiRelGraph, arch: &Architecture) -> Result<ModelInputs, ExperimentError> {
    let mismatch = |what, expected, found| ModelError::DimensionMismatch { what, expected, found };
    if arch.feature_dim != graph.feature_dim() {
        return Err(mismatch("feature dimension", arch.feature_dim, graph.feature_dim()).into());
    }
    if arch.num_relations != graph.num_relations() {
        return Err(mismatch("relation count", arch.num_relations, graph.num_relations()).into());
    }
    if let Some(&a) = arch.anchors.iter().find(|&&a| a >= graph.num_nodes()) {
        return Err(GraphError::NodeOutOfRange { index: a, num_nodes: graph.num_nodes() }.into());
    }
    let tables = compute_tables(graph, arch.config.hops, &arch.anchors)?;
    Ok(ModelInputs::new(graph, tables)?)
}

pub struct RunResult {
    pub model: MandateModel,
    pub history: TrainHistory,
    pub split: SplitAssignment,
    pub val: MetricsReport,
    pub test: MetricsReport,
}

/// Train on `graph` under `cfg` and score the best checkpoint.
pub fn run(graph: &MultiRelGraph, cfg: &RunConfig, pe_dir: Option<&Path>) -> Result<RunResult, ExperimentError> {
    cfg.validate()?;
    let split = split_nodes(graph, cfg.split, cfg.seed)?;
    let (inputs, anchors) = build_inputs(graph, cfg, pe_dir)?;
    let arch = Architecture::new(cfg.model.clone(), graph.feature_dim(), graph.num_relations(), anchors, cfg.seed)?;
    let outcome = train(MandateModel::new(arch)?, &inputs, &split, &cfg.train_config())?;
    let val = evaluate(&outcome.model, &inputs, &split.val, "val")?;
    let test = evaluate(&outcome.model, &inputs, &split.test, "test")?;
    Ok(RunResult { model: outcome.model, history: outcome.history, split, val, test })
}

/// Checkpoint, history, split, resolved config and test metrics under `out`.
pub fn write_run(out: &Path, cfg: &RunConfig, result: &RunResult) -> Result<(), ExperimentError> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let ckpt = out.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt).map_err(|e| io_err(&ckpt, e))?;
    save_model(&result.model, &ckpt)?;
    write_file(&out.join(HISTORY_FILE), &result.history.to_csv())?;
    write_file(&out.join(RESOLVED_FILE), &cfg.to_resolved())?;
    let split = serde_json::to_string(&result.split).map_err(|e| io_err(&out.join(SPLIT_FILE), e))?;
    write_file(&out.join(SPLIT_FILE), &(split + "\n"))?;
    write_file(&out.join(METRICS_FILE), &result.test.to_json())
}

/// One named variant of an ablation and its test metrics.
#[derive(Debug, Clone)]
pub struct AblationResult {
    pub variant: String,
    pub test: MetricsReport,
}

/// Multi-scale learnable θ versus a single hop versus frozen PageRank θ.
/// All variants share the split, anchors and seeds.
pub fn ablate_pe(graph: &MultiRelGraph, cfg: &RunConfig) -> Result<Vec<AblationResult>, ExperimentError> {
    let mut single = cfg.clone();
    single.model.hops = 1;
    let mut ppr = cfg.clone();
    ppr.model.theta = ThetaMode::Ppr { alpha: cfg.ppr_alpha };
    [("multi_scale", cfg.clone()), ("single_hop", single), ("frozen_ppr", ppr)]
        .into_iter()
        .map(|(name, c)| Ok(AblationResult { variant: name.into(), test: run(graph, &c, None)?.test }))
        .collect()
}

/// Each relation on its own versus all relations fused. The split is
/// drawn once from the full graph's labels, which every variant shares.
pub fn ablate_fusion(graph: &MultiRelGraph, cfg: &RunConfig) -> Result<Vec<AblationResult>, ExperimentError> {
    let mut out = Vec::new();
    for r in 0..graph.num_relations() {
        let single = graph.select_relations(&[r])?;
        out.push(AblationResult { variant: format!("rel-{r}"), test: run(&single, cfg, None)?.test });
    }
    out.push(AblationResult { variant: "fused".into(), test: run(graph, cfg, None)?.test });
    Ok(out)
}

/// `variant,metric,value`, one row per variant and metric.
pub fn ablation_csv(results: &[AblationResult]) -> String {
    let mut s = String::from("variant,metric,value\n");
    for r in results {
        for (metric, v) in [("auc", r.test.auc), ("f1_macro", r.test.f1_macro), ("gmean", r.test.gmean)] {
            let _ = writeln!(s, "{},{metric},{v}", r.variant);
        }
    }
    s
}
