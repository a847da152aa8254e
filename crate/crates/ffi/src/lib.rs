//! C interface to the cogmesh simulator.
//!
//! Every function returns a [`CogmeshStatus`] or a value with a documented
//! sentinel. On failure a message is available from [`cogmesh_last_error`]
//! on the same thread. Scenario and run handles are opaque and must be
//! released with their `_free` function; strings returned by the library
//! are released with [`cogmesh_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cogmesh::engine::{self, EngineError, RunOutput};
use cogmesh::l2conf::{round_length, slot_owner, Phase, TdmaLayout};
use cogmesh::markov::{
    blocking_probability, erlang_b, noncompletion_probability, stationary, OccupancyModel,
};
use cogmesh::qos::{classify, QosClass, QosMeasurement};
use cogmesh::Scenario;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CogmeshStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Validation = 3,
    Runtime = 4,
    Panic = 5,
}

/// A validated scenario.
pub struct CogmeshScenario(Scenario);

/// The trace, metrics and knowledge base of one finished run.
pub struct CogmeshRun(RunOutput);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("NULs removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: CogmeshStatus, msg: impl Into<String>) -> CogmeshStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning panics into [`CogmeshStatus::Panic`].
fn guard(f: impl FnOnce() -> CogmeshStatus) -> CogmeshStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CogmeshStatus::Panic, msg)
        }
    }
}

fn engine_status(e: EngineError) -> CogmeshStatus {
    let status = match e {
        EngineError::Validation(_) => CogmeshStatus::Validation,
        _ => CogmeshStatus::Runtime,
    };
    fail(status, e.to_string())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn cogmesh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Classifies a measurement; `out_class` receives 1, 2 or 3.
///
/// # Safety
/// `out_class` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_classify(
    bandwidth_kbps: f64,
    delay_ms: f64,
    jitter_ms: f64,
    error_rate_pct: f64,
    out_class: *mut u8,
) -> CogmeshStatus {
    guard(|| {
        if out_class.is_null() {
            return fail(CogmeshStatus::NullPointer, "out_class is NULL");
        }
        let class = QosMeasurement::new(bandwidth_kbps, delay_ms, jitter_ms, error_rate_pct)
            .and_then(|m| classify(&m));
        match class {
            Ok(c) => {
                let v = match c {
                    QosClass::C1 => 1,
                    QosClass::C2 => 2,
                    QosClass::C3 => 3,
                };
                unsafe { *out_class = v };
                CogmeshStatus::Ok
            }
            Err(e) => fail(CogmeshStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Solves the occupancy model. `out_noncompletion` receives NaN when no
/// secondary session is ever admitted.
///
/// # Safety
/// Both output pointers must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_markov_analyze(
    channels: u32,
    lambda_p: f64,
    mu_p: f64,
    lambda_s: f64,
    mu_s: f64,
    out_blocking: *mut f64,
    out_noncompletion: *mut f64,
) -> CogmeshStatus {
    guard(|| {
        if out_blocking.is_null() || out_noncompletion.is_null() {
            return fail(CogmeshStatus::NullPointer, "output pointer is NULL");
        }
        let model = match OccupancyModel::new(channels, lambda_p, mu_p, lambda_s, mu_s) {
            Ok(m) => m,
            Err(e) => return fail(CogmeshStatus::InvalidArgument, e.to_string()),
        };
        let d = match stationary(&model) {
            Ok(d) => d,
            Err(e) => return fail(CogmeshStatus::Runtime, e.to_string()),
        };
        unsafe {
            *out_blocking = blocking_probability(&d);
            *out_noncompletion = noncompletion_probability(&d).unwrap_or(f64::NAN);
        }
        CogmeshStatus::Ok
    })
}

/// Erlang-B blocking for `channels` servers at `offered_load` Erlangs; NaN
/// for a negative or non-finite load.
#[no_mangle]
pub extern "C" fn cogmesh_erlang_b(channels: u32, offered_load: f64) -> f64 {
    if offered_load.is_finite() && offered_load >= 0.0 {
        erlang_b(channels, offered_load)
    } else {
        f64::NAN
    }
}

fn layout(n_nodes: u32, m_channels: u32, phase: u32) -> Result<TdmaLayout, CogmeshStatus> {
    let phase = match phase {
        1 => Phase::Phase1,
        2 => Phase::Phase2,
        p => {
            return Err(fail(
                CogmeshStatus::InvalidArgument,
                format!("phase must be 1 or 2, got {p}"),
            ))
        }
    };
    TdmaLayout::new(n_nodes, m_channels, phase)
        .map_err(|e| fail(CogmeshStatus::InvalidArgument, e.to_string()))
}

/// Node that owns `slot` in a layout of `n_nodes` nodes and `m_channels`
/// channels during `phase` (1 or 2).
///
/// # Safety
/// `out_node` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_slot_owner(
    n_nodes: u32,
    m_channels: u32,
    phase: u32,
    slot: u64,
    out_node: *mut u32,
) -> CogmeshStatus {
    guard(|| {
        if out_node.is_null() {
            return fail(CogmeshStatus::NullPointer, "out_node is NULL");
        }
        match layout(n_nodes, m_channels, phase) {
            Ok(l) => {
                unsafe { *out_node = slot_owner(&l, slot) };
                CogmeshStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Slots per round.
///
/// # Safety
/// `out_slots` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_round_length(
    n_nodes: u32,
    m_channels: u32,
    phase: u32,
    out_slots: *mut u64,
) -> CogmeshStatus {
    guard(|| {
        if out_slots.is_null() {
            return fail(CogmeshStatus::NullPointer, "out_slots is NULL");
        }
        match layout(n_nodes, m_channels, phase) {
            Ok(l) => {
                unsafe { *out_slots = round_length(&l) };
                CogmeshStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Parses and validates a scenario document.
///
/// # Safety
/// `json` must be NULL or a NUL-terminated string; `out` must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_scenario_from_json(
    json: *const c_char,
    out: *mut *mut CogmeshScenario,
) -> CogmeshStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(CogmeshStatus::NullPointer, "argument is NULL");
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(e) => return fail(CogmeshStatus::InvalidArgument, e.to_string()),
        };
        match Scenario::from_json(text) {
            Ok(s) => {
                unsafe { *out = Box::into_raw(Box::new(CogmeshScenario(s))) };
                CogmeshStatus::Ok
            }
            Err(e) => fail(CogmeshStatus::Validation, e.to_string()),
        }
    })
}

/// # Safety
/// `scenario` must be NULL or a handle from [`cogmesh_scenario_from_json`]
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_scenario_free(scenario: *mut CogmeshScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Simulates `scenario` for `duration` seconds.
///
/// # Safety
/// `scenario` must be NULL or a live scenario handle; `out` must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_run(
    scenario: *const CogmeshScenario,
    seed: u64,
    duration: f64,
    out: *mut *mut CogmeshRun,
) -> CogmeshStatus {
    guard(|| {
        if scenario.is_null() || out.is_null() {
            return fail(CogmeshStatus::NullPointer, "argument is NULL");
        }
        let scenario = unsafe { &(*scenario).0 };
        match engine::run(scenario, seed, duration) {
            Ok(r) => {
                unsafe { *out = Box::into_raw(Box::new(CogmeshRun(r))) };
                CogmeshStatus::Ok
            }
            Err(e) => engine_status(e),
        }
    })
}

/// # Safety
/// `run` must be NULL or a handle from [`cogmesh_run`] that has not been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_run_free(run: *mut CogmeshRun) {
    if !run.is_null() {
        drop(unsafe { Box::from_raw(run) });
    }
}

/// Negotiation failure rate of a run; NaN when nothing was negotiated or
/// `run` is NULL.
///
/// # Safety
/// `run` must be NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_run_failure_rate(run: *const CogmeshRun) -> f64 {
    if run.is_null() {
        return f64::NAN;
    }
    unsafe { &(*run).0 }
        .metrics
        .negotiation_failure_rate
        .unwrap_or(f64::NAN)
}

/// Metrics of a run as a JSON document, or NULL. Free with
/// [`cogmesh_string_free`].
///
/// # Safety
/// `run` must be NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_run_metrics_json(run: *const CogmeshRun) -> *mut c_char {
    if run.is_null() {
        set_error("run is NULL");
        return ptr::null_mut();
    }
    to_c_string(unsafe { &(*run).0 }.metrics.to_json())
}

/// Trace of a run in JSON Lines form, header first, or NULL. Free with
/// [`cogmesh_string_free`].
///
/// # Safety
/// `run` must be NULL or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_run_trace_jsonl(run: *const CogmeshRun) -> *mut c_char {
    if run.is_null() {
        set_error("run is NULL");
        return ptr::null_mut();
    }
    to_c_string(unsafe { &(*run).0 }.trace.to_jsonl())
}

/// # Safety
/// `s` must be NULL or a string returned by this library that has not been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn cogmesh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}
