//! C ABI over the `hsed` toolkit.
//!
//! Every fallible function returns an [`HsedStatus`]. On failure the message
//! is kept per thread and can be read with [`hsed_last_error`]. Objects are
//! handed out as opaque pointers and must be released with the matching
//! `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use hsed::cli;
use hsed::config::RunConfig;
use hsed::ingest::MessageGraph;
use hsed::manifold::{ManifoldKind, ManifoldSpec};
use hsed::metrics::EvalReport;
use hsed::synth::{synthetic_tree, SyntheticTreeSpec};
use hsed::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsedStatus {
    Ok = 0,
    InvalidArgument = 1,
    Domain = 2,
    NonFinite = 3,
    Parse = 4,
    DuplicateId = 5,
    Io = 6,
    Json = 7,
    NullPointer = 8,
    Utf8 = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsedManifold {
    Poincare = 0,
    Hyperboloid = 1,
    Euclidean = 2,
}

/// Evaluation metrics, mirrored field for field.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsedReport {
    pub acc: f64,
    pub nmi: f64,
    pub ami: f64,
    pub ari: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub wall_seconds: f64,
}

impl From<EvalReport> for HsedReport {
    fn from(r: EvalReport) -> Self {
        HsedReport {
            acc: r.acc,
            nmi: r.nmi,
            ami: r.ami,
            ari: r.ari,
            micro_f1: r.micro_f1,
            macro_f1: r.macro_f1,
            wall_seconds: r.wall_seconds,
        }
    }
}

/// Opaque message graph.
pub struct HsedGraph(MessageGraph);

/// Opaque run configuration.
pub struct HsedConfig(RunConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn root(e: &Error) -> &Error {
    match e {
        Error::File { source, .. } => root(source),
        other => other,
    }
}

fn status_of(e: &Error) -> HsedStatus {
    match root(e) {
        Error::InvalidArgument(_) => HsedStatus::InvalidArgument,
        Error::Domain(_) => HsedStatus::Domain,
        Error::NonFinite { .. } => HsedStatus::NonFinite,
        Error::Parse { .. } => HsedStatus::Parse,
        Error::DuplicateId(_) => HsedStatus::DuplicateId,
        Error::Io(_) => HsedStatus::Io,
        Error::Json(_) => HsedStatus::Json,
        Error::File { .. } => HsedStatus::Io,
    }
}

struct Fail(HsedStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HsedStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HsedStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HsedStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(HsedStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(HsedStatus::Utf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn spec_of(kind: HsedManifold, curvature: f64) -> Result<ManifoldSpec, Fail> {
    let kind = match kind {
        HsedManifold::Poincare => ManifoldKind::PoincareBall,
        HsedManifold::Hyperboloid => ManifoldKind::Hyperboloid,
        HsedManifold::Euclidean => ManifoldKind::Euclidean,
    };
    Ok(ManifoldSpec::new(kind, curvature)?)
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hsed_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hsed_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a graph file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsed_graph_read(path: *const c_char, out: *mut *mut HsedGraph) -> HsedStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = MessageGraph::read(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(HsedGraph(g)));
        Ok(())
    })
}

/// Generates a labelled synthetic tree.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsed_graph_synth_tree(
    branching: usize,
    depth: usize,
    feature_noise: f64,
    feature_dim: usize,
    seed: u64,
    out: *mut *mut HsedGraph,
) -> HsedStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = SyntheticTreeSpec { branching, depth, feature_noise, feature_dim, seed, ..Default::default() };
        *out = Box::into_raw(Box::new(HsedGraph(synthetic_tree(&spec)?)));
        Ok(())
    })
}

/// Writes a graph file.
///
/// # Safety
/// `graph` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn hsed_graph_write(graph: *const HsedGraph, path: *const c_char) -> HsedStatus {
    guard(|| {
        let g = ref_arg(graph, "graph")?;
        g.0.write(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Releases a graph. NULL is ignored.
///
/// # Safety
/// `graph` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hsed_graph_free(graph: *mut HsedGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node, edge, feature and class counts. Any output pointer may be NULL.
///
/// # Safety
/// `graph` must come from this library; non-NULL outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsed_graph_shape(
    graph: *const HsedGraph,
    num_nodes: *mut usize,
    num_edges: *mut usize,
    feature_dim: *mut usize,
    num_classes: *mut usize,
) -> HsedStatus {
    guard(|| {
        let g = &ref_arg(graph, "graph")?.0;
        for (p, v) in [
            (num_nodes, g.num_nodes()),
            (num_edges, g.edges.len()),
            (feature_dim, g.feature_dim()),
            (num_classes, g.num_classes()),
        ] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// The default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsed_config_default(out: *mut *mut HsedConfig) -> HsedStatus {
    guard(|| {
        *out_arg(out, "out")? = Box::into_raw(Box::new(HsedConfig(RunConfig::default())));
        Ok(())
    })
}

/// Parses `key = value` configuration text.
///
/// # Safety
/// `text` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hsed_config_parse(text: *const c_char, out: *mut *mut HsedConfig) -> HsedStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let c = RunConfig::parse(str_arg(text, "text")?)?;
        *out = Box::into_raw(Box::new(HsedConfig(c)));
        Ok(())
    })
}

/// Releases a configuration. NULL is ignored.
///
/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hsed_config_free(config: *mut HsedConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Trains the configured pipeline on `graph` and fills `report` with the
/// test-split metrics. The graph must be labelled.
///
/// # Safety
/// Handles must come from this library; `report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsed_train(
    graph: *const HsedGraph,
    config: *const HsedConfig,
    report: *mut HsedReport,
) -> HsedStatus {
    guard(|| {
        let g = &ref_arg(graph, "graph")?.0;
        let c = &ref_arg(config, "config")?.0;
        let out = out_arg(report, "report")?;
        if g.labels.is_none() {
            return Err(Error::InvalidArgument("training through this interface needs a labeled graph".into()).into());
        }
        let r = cli::run_pipeline(g, c)?.report.expect("labeled graph yields a report");
        *out = r.into();
        Ok(())
    })
}

/// Metrics for two labelings of length `n`.
///
/// # Safety
/// `truth` and `predicted` must point to `n` values; `report` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsed_metrics(
    truth: *const usize,
    predicted: *const usize,
    n: usize,
    report: *mut HsedReport,
) -> HsedStatus {
    guard(|| {
        let t = slice_arg(truth, n, "truth")?;
        let p = slice_arg(predicted, n, "predicted")?;
        *out_arg(report, "report")? = EvalReport::compute(t, p)?.into();
        Ok(())
    })
}

/// Geodesic distance between two points of length `len` (ambient
/// coordinates, so `d+1` on the hyperboloid).
///
/// # Safety
/// `a` and `b` must point to `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hsed_distance(
    manifold: HsedManifold,
    curvature: f64,
    a: *const f64,
    b: *const f64,
    len: usize,
    out: *mut f64,
) -> HsedStatus {
    guard(|| {
        let spec = spec_of(manifold, curvature)?;
        let a = slice_arg(a, len, "a")?;
        let b = slice_arg(b, len, "b")?;
        *out_arg(out, "out")? = spec.distance(a, b)?;
        Ok(())
    })
}

/// Exponential map at the origin. `v` has `len` entries; `out` must hold
/// `len` entries (`len` ambient entries on the hyperboloid, with `v[0] = 0`).
///
/// # Safety
/// `v` and `out` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn hsed_exp_map_origin(
    manifold: HsedManifold,
    curvature: f64,
    v: *const f64,
    len: usize,
    out: *mut f64,
) -> HsedStatus {
    guard(|| {
        let spec = spec_of(manifold, curvature)?;
        let v = slice_arg(v, len, "v")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = spec.exp_map_origin(v)?;
        if x.len() != len {
            return Err(Error::InvalidArgument(format!("result has {} entries, buffer has {len}", x.len())).into());
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&x);
        Ok(())
    })
}
