//! C ABI over the thz-jcs topology generator, exact oracle, greedy
//! baseline and GNN decision pipeline.
//!
//! Every function returns a [`ThzStatus`]. On failure the message is kept
//! per thread and read with [`thz_last_error_message`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function; strings returned by the library are released with
//! [`thz_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use serde::{Deserialize, Serialize};
use thz_jcs::assign::{self, SolveResult};
use thz_jcs::gnn::GnnModel;
use thz_jcs::hetgraph::GraphOptions;
use thz_jcs::jcs::SystemParams;
use thz_jcs::scenario::{generate_topology, GeneratorSpec, Topology, VehicleCounts};
use thz_jcs::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThzStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed UTF-8 or JSON, or an out-of-range argument.
    InvalidArgument = 2,
    Domain = 3,
    InvalidAssignment = 4,
    BudgetExceeded = 5,
    Shape = 6,
    Contract = 7,
    Io = 8,
    Config = 9,
    Divergence = 10,
    Generation = 11,
    Ingest = 12,
    /// A Rust panic was caught at the boundary.
    Panic = 13,
}

/// A vehicle snapshot.
pub struct ThzTopology(Topology);

/// Physical parameters plus graph construction options.
pub struct ThzParams(Params);

/// A trained GNN checkpoint.
pub struct ThzModel(GnnModel);

/// The output of a solver.
pub struct ThzSolveResult(SolveResult);

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct Params {
    system: SystemParams,
    graph: GraphOptions,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> ThzStatus {
    match e {
        Error::Domain(_) => ThzStatus::Domain,
        Error::InvalidAssignment(_) => ThzStatus::InvalidAssignment,
        Error::Generation(_) => ThzStatus::Generation,
        Error::Ingest(_) => ThzStatus::Ingest,
        Error::Shape(_) => ThzStatus::Shape,
        Error::Contract(_) => ThzStatus::Contract,
        Error::BudgetExceeded { .. } => ThzStatus::BudgetExceeded,
        Error::Divergence { .. } => ThzStatus::Divergence,
        Error::Config(_) => ThzStatus::Config,
        Error::Io { .. } => ThzStatus::Io,
        Error::Json(_) | Error::Csv(_) => ThzStatus::InvalidArgument,
    }
}

struct Fail(ThzStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(ThzStatus::InvalidArgument, e.to_string())
    }
}

/// Runs `f` behind a panic guard and records any failure.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ThzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ThzStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            ThzStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(ThzStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(ThzStatus::InvalidArgument, format!("{what} is not UTF-8: {e}")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    let c = CString::new(s).map_err(|e| Fail(ThzStatus::InvalidArgument, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn thz_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn thz_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------- params

/// Default physical parameters and graph options.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn thz_params_default(out: *mut *mut ThzParams) -> ThzStatus {
    guard(|| put(out, ThzParams(Params::default())))
}

/// Parses parameters from JSON. Missing fields take their defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_params_from_json(json: *const c_char, out: *mut *mut ThzParams) -> ThzStatus {
    guard(|| {
        let p: Params = serde_json::from_str(str_arg(json, "json")?)?;
        p.system.validate()?;
        put(out, ThzParams(p))
    })
}

/// # Safety
/// `params` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_params_to_json(params: *const ThzParams, out: *mut *mut c_char) -> ThzStatus {
    guard(|| put_string(out, serde_json::to_string(&borrow(params, "params")?.0)?))
}

/// # Safety
/// `params` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn thz_params_free(params: *mut ThzParams) {
    free(params)
}

// ---------------------------------------------------------------- topology

/// Draws a random topology with the default region, power and antenna.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_topology_generate(
    seed: u64,
    spv: usize,
    comm: usize,
    sense: usize,
    out: *mut *mut ThzTopology,
) -> ThzStatus {
    guard(|| {
        let spec = GeneratorSpec {
            counts: VehicleCounts::new(spv, comm, sense),
            ..GeneratorSpec::default()
        };
        put(out, ThzTopology(generate_topology(seed, &spec)?))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_topology_from_json(json: *const c_char, out: *mut *mut ThzTopology) -> ThzStatus {
    guard(|| {
        let t: Topology = serde_json::from_str(str_arg(json, "json")?)?;
        put(out, ThzTopology(t))
    })
}

/// # Safety
/// `topology` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_topology_to_json(topology: *const ThzTopology, out: *mut *mut c_char) -> ThzStatus {
    guard(|| put_string(out, serde_json::to_string(&borrow(topology, "topology")?.0)?))
}

/// Writes the SPV, communication-target and sensing-target counts.
///
/// # Safety
/// `topology` must be a live handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn thz_topology_counts(
    topology: *const ThzTopology,
    spv: *mut usize,
    comm: *mut usize,
    sense: *mut usize,
) -> ThzStatus {
    guard(|| {
        let c = borrow(topology, "topology")?.0.counts();
        if spv.is_null() || comm.is_null() || sense.is_null() {
            return Err(null("output pointer"));
        }
        *spv = c.spv;
        *comm = c.comm;
        *sense = c.sense;
        Ok(())
    })
}

/// # Safety
/// `topology` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn thz_topology_free(topology: *mut ThzTopology) {
    free(topology)
}

// ---------------------------------------------------------------- model

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_model_load(path: *const c_char, out: *mut *mut ThzModel) -> ThzStatus {
    guard(|| {
        let m = GnnModel::load(str_arg(path, "path")?.as_ref())?;
        put(out, ThzModel(m))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_model_from_json(json: *const c_char, out: *mut *mut ThzModel) -> ThzStatus {
    guard(|| put(out, ThzModel(GnnModel::from_json(str_arg(json, "json")?)?)))
}

/// Number of targets L the model was trained for.
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_model_target_count(model: *const ThzModel, out: *mut usize) -> ThzStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = m.0.target_count;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn thz_model_free(model: *mut ThzModel) {
    free(model)
}

// ---------------------------------------------------------------- solvers

/// Exhaustive sum-rate oracle. Fails with `BudgetExceeded` when K^L
/// exceeds `budget`.
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_enumerate_optimal(
    topology: *const ThzTopology,
    params: *const ThzParams,
    budget: u64,
    out: *mut *mut ThzSolveResult,
) -> ThzStatus {
    guard(|| {
        let t = borrow(topology, "topology")?;
        let p = borrow(params, "params")?;
        let r = assign::enumerate_optimal(&t.0, &p.0.system, budget)?;
        put(out, ThzSolveResult(r.result))
    })
}

/// GNN probabilities followed by the exact surrogate solver.
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_decide(
    topology: *const ThzTopology,
    model: *const ThzModel,
    params: *const ThzParams,
    seed: u64,
    out: *mut *mut ThzSolveResult,
) -> ThzStatus {
    guard(|| {
        let t = borrow(topology, "topology")?;
        let m = borrow(model, "model")?;
        let p = borrow(params, "params")?;
        let d = assign::decide(&t.0, &m.0, &p.0.graph, seed, &p.0.system)?;
        put(out, ThzSolveResult(d.result))
    })
}

/// Greedy strongest-signal association from locations only.
///
/// # Safety
/// Handles must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_baseline_location(
    topology: *const ThzTopology,
    params: *const ThzParams,
    out: *mut *mut ThzSolveResult,
) -> ThzStatus {
    guard(|| {
        let t = borrow(topology, "topology")?;
        let p = borrow(params, "params")?;
        put(out, ThzSolveResult(assign::baseline_location(&t.0, &p.0.system)?))
    })
}

/// Sum rate of the returned assignment, bit/s.
///
/// # Safety
/// `result` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_result_objective(result: *const ThzSolveResult, out: *mut f64) -> ThzStatus {
    guard(|| {
        let r = borrow(result, "result")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = r.0.objective_true;
        Ok(())
    })
}

/// Whether every sensing link meets the minimum SINR.
///
/// # Safety
/// `result` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_result_feasible(result: *const ThzSolveResult, out: *mut bool) -> ThzStatus {
    guard(|| {
        let r = borrow(result, "result")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = r.0.feasible;
        Ok(())
    })
}

/// SPV slot serving target slot `target` (communication targets first),
/// or -1 when unserved.
///
/// # Safety
/// `result` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_result_server(result: *const ThzSolveResult, target: usize, out: *mut i64) -> ThzStatus {
    guard(|| {
        let r = borrow(result, "result")?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let servers = r.0.assignment.servers();
        let s = servers.get(target).ok_or_else(|| {
            Fail(
                ThzStatus::InvalidArgument,
                format!("target slot {target} out of range (L = {})", servers.len()),
            )
        })?;
        *out = s.map_or(-1, |k| k as i64);
        Ok(())
    })
}

/// # Safety
/// `result` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn thz_result_to_json(result: *const ThzSolveResult, out: *mut *mut c_char) -> ThzStatus {
    guard(|| put_string(out, serde_json::to_string(&borrow(result, "result")?.0)?))
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn thz_result_free(result: *mut ThzSolveResult) {
    free(result)
}
