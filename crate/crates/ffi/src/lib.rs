//! C ABI over `primgraph`.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible call returns a [`PgStatus`]; on failure the
//! message is available from [`pg_last_error_message`] on the same thread.
//! Strings returned through out-parameters are released with [`pg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use primgraph::benchmarks::{suite_by_name, BenchmarkSuite};
use primgraph::dynamics::State;
use primgraph::graph::MotionPrimitiveGraph;
use primgraph::oracle::safety_oracle;
use primgraph::planner::plan_path;
use primgraph::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    UnknownPrimitive = 4,
    Unreachable = 5,
    Numerical = 6,
    Panic = 7,
}

/// A benchmark suite: model plus primitive library.
pub struct PgSuite {
    inner: BenchmarkSuite,
}

/// A built or loaded motion primitive graph.
pub struct PgGraph {
    inner: MotionPrimitiveGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> PgStatus {
    match e {
        Error::UnknownPrimitive(_) => PgStatus::UnknownPrimitive,
        Error::Unreachable { .. } => PgStatus::Unreachable,
        Error::IntegrationFailure { .. } | Error::ModelEvaluation { .. } => PgStatus::Numerical,
        _ => PgStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), PgStatus>) -> PgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            PgStatus::Panic
        }
    }
}

fn fail(e: Error) -> PgStatus {
    set_error(e.to_string());
    status_of(&e)
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, PgStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(PgStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        PgStatus::InvalidUtf8
    })
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), PgStatus> {
    let c = CString::new(s).map_err(|_| {
        set_error("output contains a NUL byte");
        PgStatus::InvalidArgument
    })?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), PgStatus> {
    if out.is_null() {
        set_error("null output pointer");
        return Err(PgStatus::NullPointer);
    }
    Ok(())
}

unsafe fn suite_ref<'a>(s: *const PgSuite) -> Result<&'a BenchmarkSuite, PgStatus> {
    s.as_ref().map(|s| &s.inner).ok_or_else(|| {
        set_error("null suite handle");
        PgStatus::NullPointer
    })
}

unsafe fn graph_ref<'a>(g: *const PgGraph) -> Result<&'a MotionPrimitiveGraph, PgStatus> {
    g.as_ref().map(|g| &g.inner).ok_or_else(|| {
        set_error("null graph handle");
        PgStatus::NullPointer
    })
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a built-in suite by name (`pendulum`, `quadruped-analog`, ...).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pg_suite_new(name: *const c_char, out: *mut *mut PgSuite) -> PgStatus {
    guard(|| {
        check_out(out)?;
        let name = text(name)?;
        let inner = suite_by_name(name).map_err(fail)?;
        *out = Box::into_raw(Box::new(PgSuite { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle from [`pg_suite_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pg_suite_free(s: *mut PgSuite) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live suite handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pg_suite_primitive_count(s: *const PgSuite, out: *mut usize) -> PgStatus {
    guard(|| {
        check_out(out)?;
        *out = suite_ref(s)?.primitives.len();
        Ok(())
    })
}

/// Runs the full transition sweep for the suite.
///
/// # Safety
/// `s` must be a live suite handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pg_graph_build(s: *const PgSuite, out: *mut *mut PgGraph) -> PgStatus {
    guard(|| {
        check_out(out)?;
        let inner = suite_ref(s)?.build_graph().map_err(fail)?;
        *out = Box::into_raw(Box::new(PgGraph { inner }));
        Ok(())
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pg_graph_from_json(json: *const c_char, out: *mut *mut PgGraph) -> PgStatus {
    guard(|| {
        check_out(out)?;
        let inner = MotionPrimitiveGraph::from_json(text(json)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(PgGraph { inner }));
        Ok(())
    })
}

/// # Safety
/// `g` must be NULL or a graph handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pg_graph_free(g: *mut PgGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// # Safety
/// `g` must be a live graph handle; `nodes` and `edges` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pg_graph_counts(g: *const PgGraph, nodes: *mut usize, edges: *mut usize) -> PgStatus {
    guard(|| {
        check_out(nodes)?;
        check_out(edges)?;
        let g = graph_ref(g)?;
        *nodes = g.nodes.len();
        *edges = g.edges.len();
        Ok(())
    })
}

/// Canonical JSON. Free the result with [`pg_string_free`].
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pg_graph_to_json(g: *const PgGraph, out: *mut *mut c_char) -> PgStatus {
    guard(|| {
        check_out(out)?;
        let s = graph_ref(g)?.to_json().map_err(fail)?;
        put_string(out, s)
    })
}

/// Graphviz DOT. Free the result with [`pg_string_free`].
///
/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pg_graph_to_dot(g: *const PgGraph, out: *mut *mut c_char) -> PgStatus {
    guard(|| {
        check_out(out)?;
        put_string(out, graph_ref(g)?.to_dot())
    })
}

/// Depth-first path as a JSON object `{"nodes": [...], "hops": [...]}`.
///
/// # Safety
/// `g` must be a live graph handle; `start` and `goal` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pg_plan_path(
    g: *const PgGraph,
    start: *const c_char,
    goal: *const c_char,
    out: *mut *mut c_char,
) -> PgStatus {
    guard(|| {
        check_out(out)?;
        let path = plan_path(graph_ref(g)?, text(start)?, text(goal)?).map_err(fail)?;
        let s = serde_json::to_string(&path).map_err(|e| fail(e.into()))?;
        put_string(out, s)
    })
}

/// One safety-oracle call from `state[0..len]` at entry time `tb`. A
/// non-positive `horizon` uses the suite default.
///
/// # Safety
/// `s` must be a live suite handle; `primitive` NUL-terminated; `state` must point
/// to `len` doubles; `accepted` and `event_time` writable.
#[no_mangle]
pub unsafe extern "C" fn pg_oracle(
    s: *const PgSuite,
    primitive: *const c_char,
    state: *const f64,
    len: usize,
    tb: f64,
    horizon: f64,
    accepted: *mut bool,
    event_time: *mut f64,
) -> PgStatus {
    guard(|| {
        check_out(accepted)?;
        check_out(event_time)?;
        if state.is_null() {
            set_error("null state");
            return Err(PgStatus::NullPointer);
        }
        let suite = suite_ref(s)?;
        let name = text(primitive)?;
        let b = suite
            .primitive(name)
            .ok_or_else(|| fail(Error::UnknownPrimitive(name.to_string())))?;
        let x = State::from_column_slice(std::slice::from_raw_parts(state, len));
        let mut cfg = suite.oracle;
        if horizon > 0.0 {
            cfg.horizon = horizon;
        }
        let v = safety_oracle(b, &x, tb, &cfg).map_err(fail)?;
        *accepted = v.accepted;
        *event_time = v.event_time;
        Ok(())
    })
}
