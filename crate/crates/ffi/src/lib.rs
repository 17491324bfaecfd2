//! C interface to mandate-core.
//!
//! Graphs and models cross the boundary as opaque pointers created by the
//! `*_load`/`*_synthetic` functions and released by the matching `*_free`.
//! Every fallible call returns a [`MandateStatus`]; on failure the message
//! is kept per thread and read back with [`mandate_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mandate_core::config::RunConfig;
use mandate_core::experiment::{inputs_for_model, run, write_run, ExperimentError};
use mandate_core::graph::{homophily_ratio, load_dataset, save_dataset, synth_generate, GraphError, MultiRelGraph, SynthConfig};
use mandate_core::model::{load_model, MandateModel as CoreModel, ModelError};
use mandate_core::train::{auc, TrainError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MandateStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    IoError = 3,
    DataError = 4,
    NumericError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A loaded multi-relation graph.
pub struct MandateGraph {
    inner: MultiRelGraph,
}

/// A trained model.
pub struct MandateModel {
    inner: CoreModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(MandateStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(MandateStatus::NullArgument, format!("{what} is null"))
    }
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(MandateStatus::InvalidArgument, msg.into())
    }
}

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        let status = match e {
            GraphError::Io { .. } | GraphError::MissingFile(_) => MandateStatus::IoError,
            GraphError::InvalidSynthConfig(_) => MandateStatus::InvalidArgument,
            _ => MandateStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let status = match e {
            ModelError::Autodiff(_) => MandateStatus::NumericError,
            ModelError::Checkpoint { .. } => MandateStatus::IoError,
            ModelError::InvalidConfig(_) => MandateStatus::InvalidArgument,
            _ => MandateStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Graph(g) => g.into(),
            ExperimentError::Model(m) => m.into(),
            ExperimentError::Config(c) => Failure::invalid(c.to_string()),
            ExperimentError::Io { .. } => Failure(MandateStatus::IoError, e.to_string()),
            ExperimentError::Train(TrainError::Diverged { .. }) => Failure(MandateStatus::NumericError, e.to_string()),
            other => Failure(MandateStatus::DataError, other.to_string()),
        }
    }
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MandateStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MandateStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MandateStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn graph_ref<'a>(g: *const MandateGraph) -> Result<&'a MultiRelGraph, Failure> {
    g.as_ref().map(|g| &g.inner).ok_or_else(|| Failure::null("graph"))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

/// Copy the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// excluding the terminator, so a return value ≥ `len` means truncation.
#[no_mangle]
pub unsafe extern "C" fn mandate_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mandate_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a dataset directory.
#[no_mangle]
pub unsafe extern "C" fn mandate_graph_load(path: *const c_char, out: *mut *mut MandateGraph) -> MandateStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let graph = load_dataset(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MandateGraph { inner: graph }));
        Ok(())
    })
}

/// Generate a synthetic graph with `relations` relations; `homophily`
/// points to `relations` values. Degree 10 per relation, 16 features,
/// feature signal 1.
#[no_mangle]
pub unsafe extern "C" fn mandate_graph_synthetic(
    nodes: usize,
    relations: usize,
    homophily: *const f64,
    fraud_rate: f64,
    seed: u64,
    out: *mut *mut MandateGraph,
) -> MandateStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if homophily.is_null() {
            return Err(Failure::null("homophily"));
        }
        let mut cfg = SynthConfig::complementary(nodes, seed);
        cfg.num_relations = relations;
        cfg.homophily = std::slice::from_raw_parts(homophily, relations).to_vec();
        cfg.mean_degree = vec![cfg.mean_degree[0]; relations];
        cfg.fraud_rate = fraud_rate;
        let graph = synth_generate(&cfg)?;
        *out = Box::into_raw(Box::new(MandateGraph { inner: graph }));
        Ok(())
    })
}

/// Write a graph in the on-disk dataset format.
#[no_mangle]
pub unsafe extern "C" fn mandate_graph_save(graph: *const MandateGraph, path: *const c_char) -> MandateStatus {
    guard(|| Ok(save_dataset(graph_ref(graph)?, path_arg(path, "path")?)?))
}

#[no_mangle]
pub unsafe extern "C" fn mandate_graph_num_nodes(graph: *const MandateGraph, out: *mut usize) -> MandateStatus {
    guard(|| {
        *out_ptr(out, "out")? = graph_ref(graph)?.num_nodes();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mandate_graph_num_relations(graph: *const MandateGraph, out: *mut usize) -> MandateStatus {
    guard(|| {
        *out_ptr(out, "out")? = graph_ref(graph)?.num_relations();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mandate_graph_feature_dim(graph: *const MandateGraph, out: *mut usize) -> MandateStatus {
    guard(|| {
        *out_ptr(out, "out")? = graph_ref(graph)?.feature_dim();
        Ok(())
    })
}

/// Edge homophily of one relation over edges with both ends labeled.
#[no_mangle]
pub unsafe extern "C" fn mandate_graph_homophily(
    graph: *const MandateGraph,
    relation: usize,
    out: *mut f64,
) -> MandateStatus {
    guard(|| {
        *out_ptr(out, "out")? = homophily_ratio(graph_ref(graph)?, relation)?;
        Ok(())
    })
}

/// Release a graph. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mandate_graph_free(graph: *mut MandateGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Load a checkpoint directory written by training.
#[no_mangle]
pub unsafe extern "C" fn mandate_model_load(path: *const c_char, out: *mut *mut MandateModel) -> MandateStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = load_model(path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(MandateModel { inner: model }));
        Ok(())
    })
}

/// Train on `graph` with a flat `key = value` config (may be null for
/// defaults), write run artifacts under `out_dir` and return the best
/// model.
#[no_mangle]
pub unsafe extern "C" fn mandate_train(
    graph: *const MandateGraph,
    config: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut MandateModel,
) -> MandateStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let graph = graph_ref(graph)?;
        let dir = path_arg(out_dir, "out_dir")?;
        let mut cfg = RunConfig::default();
        if !config.is_null() {
            let text = CStr::from_ptr(config).to_str().map_err(|_| Failure::invalid("config is not valid UTF-8"))?;
            cfg.merge_text(text).map_err(|e| Failure::invalid(e.to_string()))?;
        }
        let result = run(graph, &cfg, None)?;
        write_run(&dir, &cfg, &result)?;
        *out = Box::into_raw(Box::new(MandateModel { inner: result.model }));
        Ok(())
    })
}

/// Fraud probability of every node of `graph`, written to `probs`
/// (`len` must be at least the node count).
#[no_mangle]
pub unsafe extern "C" fn mandate_model_predict(
    model: *const MandateModel,
    graph: *const MandateGraph,
    probs: *mut f64,
    len: usize,
) -> MandateStatus {
    guard(|| {
        let model = model.as_ref().map(|m| &m.inner).ok_or_else(|| Failure::null("model"))?;
        let graph = graph_ref(graph)?;
        if probs.is_null() {
            return Err(Failure::null("probs"));
        }
        if len < graph.num_nodes() {
            return Err(Failure(
                MandateStatus::BufferTooSmall,
                format!("buffer holds {len} values, graph has {} nodes", graph.num_nodes()),
            ));
        }
        let inputs = inputs_for_model(graph, &model.arch)?;
        let scores = model.predict_all(&inputs)?;
        std::slice::from_raw_parts_mut(probs, scores.len()).copy_from_slice(&scores);
        Ok(())
    })
}

/// Release a model. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mandate_model_free(model: *mut MandateModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// ROC AUC of `scores` against 0/1 `labels` (nonzero means fraud).
#[no_mangle]
pub unsafe extern "C" fn mandate_auc(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    out: *mut f64,
) -> MandateStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if scores.is_null() || labels.is_null() {
            return Err(Failure::null("scores or labels"));
        }
        let s = std::slice::from_raw_parts(scores, len);
        let l: Vec<bool> = std::slice::from_raw_parts(labels, len).iter().map(|&b| b != 0).collect();
        *out = auc(s, &l).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}
