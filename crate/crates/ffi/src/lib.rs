//! C ABI over the resilsim estimator.
//!
//! Models and reports are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`RsimStatus`]; on failure the message is available from
//! [`rsim_last_error`] on the same thread. Strings returned by the library
//! must be released with [`rsim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use resilsim::live::{parse_request_log, AnalyzeOptions};
use resilsim::manifest::to_sorted_json;
use resilsim::oracle::exact_resilience;
use resilsim::scenario::{BuiltinScenario, LoadedScenario, ScenarioConfig};
use resilsim::sim::run_monte_carlo_with_workers;
use resilsim::{Error, ExactResult, ResilienceReport};

/// Status codes. Values 1-3 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsimStatus {
    Ok = 0,
    Runtime = 1,
    Config = 2,
    StateLimit = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    OutOfRange = 6,
    Panic = 7,
}

impl From<&Error> for RsimStatus {
    fn from(e: &Error) -> Self {
        match e.exit_code() {
            2 => RsimStatus::Config,
            3 => RsimStatus::StateLimit,
            _ => RsimStatus::Runtime,
        }
    }
}

/// A validated graph, deployment, endpoint set and failure configuration.
pub struct RsimModel {
    inner: LoadedScenario,
}

pub struct RsimReport {
    inner: ResilienceReport,
}

pub struct RsimExact {
    inner: ExactResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F: FnOnce() -> Result<(), RsimStatus>>(f: F) -> RsimStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsimStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            RsimStatus::Panic
        }
    }
}

fn fail(e: Error) -> RsimStatus {
    let status = RsimStatus::from(&e);
    set_error(e.to_string());
    status
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, RsimStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        return Err(RsimStatus::NullPointer);
    }
    // SAFETY: caller passes a NUL-terminated string valid for the call.
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        RsimStatus::InvalidUtf8
    })
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, RsimStatus> {
    // SAFETY: caller passes a writable pointer or null.
    p.as_mut().ok_or_else(|| {
        set_error(format!("{name} is null"));
        RsimStatus::NullPointer
    })
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, RsimStatus> {
    // SAFETY: non-null handles were produced by this library and not yet freed.
    p.as_ref().ok_or_else(|| {
        set_error(format!("{name} is null"));
        RsimStatus::NullPointer
    })
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn rsim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads one of the built-in scenarios: `replicated == 0` for one container
/// per service, otherwise the three-replica deployment.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn rsim_model_builtin(replicated: i32, out: *mut *mut RsimModel) -> RsimStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let which = if replicated == 0 {
            BuiltinScenario::Norepl
        } else {
            BuiltinScenario::Repl
        };
        *out = Box::into_raw(Box::new(RsimModel {
            inner: LoadedScenario::builtin(which),
        }));
        Ok(())
    })
}

/// Parses and validates a config document. Relative graph paths resolve
/// against `base_dir`, which may be null.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `base_dir` null or
/// NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsim_model_from_config(
    config_json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut RsimModel,
) -> RsimStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let doc = str_arg(config_json, "config_json")?;
        let base = if base_dir.is_null() {
            None
        } else {
            Some(Path::new(str_arg(base_dir, "base_dir")?))
        };
        let inner = ScenarioConfig::from_json(doc)
            .and_then(|c| c.resolve(base))
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(RsimModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsim_model_free(model: *mut RsimModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of containers in the killable fleet.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsim_model_fleet_size(model: *const RsimModel) -> usize {
    model
        .as_ref()
        .map_or(0, |m| m.inner.scenario.killable_fleet().len())
}

/// Overrides the failure parameters of a model. Pass `samples == 0` or
/// `rounds == 0` to keep the current value; `p_fail` outside `[0, 1]` keeps
/// the current value as well.
///
/// # Safety
/// `model` must be a live handle not shared with another thread during the call.
#[no_mangle]
pub unsafe extern "C" fn rsim_model_set_failure(
    model: *mut RsimModel,
    p_fail: f64,
    samples: u64,
    rounds: u32,
    seed: u64,
) -> RsimStatus {
    guard(|| {
        let m = out_arg(model, "model")?;
        let f = &mut m.inner.failure;
        if (0.0..=1.0).contains(&p_fail) {
            f.p_fail = p_fail;
        }
        if samples > 0 {
            f.samples_per_round = samples;
        }
        if rounds > 0 {
            f.rounds = rounds;
        }
        f.master_seed = seed;
        Ok(())
    })
}

/// Runs the Monte-Carlo estimator. `workers == 0` uses every core.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsim_simulate(
    model: *const RsimModel,
    workers: u32,
    out: *mut *mut RsimReport,
) -> RsimStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let out = out_arg(out, "out")?;
        let workers = if workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            workers as usize
        };
        let inner = run_monte_carlo_with_workers(&m.graph, &m.scenario, &m.profiles, &m.failure, workers)
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(RsimReport { inner }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsim_report_free(report: *mut RsimReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Weighted resilience over all samples, plus round mean and sample SD.
/// Any output pointer may be null.
///
/// # Safety
/// `report` must be a live handle; non-null outputs writable.
#[no_mangle]
pub unsafe extern "C" fn rsim_report_summary(
    report: *const RsimReport,
    r_model: *mut f64,
    mean: *mut f64,
    sd: *mut f64,
) -> RsimStatus {
    guard(|| {
        let r = &handle(report, "report")?.inner;
        for (p, v) in [(r_model, r.r_model), (mean, r.mean), (sd, r.sd)] {
            if let Some(slot) = p.as_mut() {
                *slot = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsim_report_endpoint_count(report: *const RsimReport) -> usize {
    report.as_ref().map_or(0, |r| r.inner.per_endpoint.len())
}

/// Availability of endpoint `index` (declaration order).
///
/// # Safety
/// `report` must be a live handle; `availability` writable.
#[no_mangle]
pub unsafe extern "C" fn rsim_report_endpoint(
    report: *const RsimReport,
    index: usize,
    availability: *mut f64,
) -> RsimStatus {
    guard(|| {
        let r = &handle(report, "report")?.inner;
        let out = out_arg(availability, "availability")?;
        let e = r.per_endpoint.get(index).ok_or_else(|| {
            set_error(format!("endpoint index {index} out of range"));
            RsimStatus::OutOfRange
        })?;
        *out = e.availability;
        Ok(())
    })
}

/// The full report as sorted JSON. Free with [`rsim_string_free`].
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsim_report_to_json(report: *const RsimReport) -> *mut c_char {
    match report.as_ref().map(|r| to_sorted_json(&r.inner)) {
        Some(Ok(s)) => into_c_string(s),
        _ => ptr::null_mut(),
    }
}

/// Exact enumeration. `state_limit == 0` uses the default limit.
///
/// # Safety
/// `model` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsim_exact(
    model: *const RsimModel,
    state_limit: u64,
    out: *mut *mut RsimExact,
) -> RsimStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let out = out_arg(out, "out")?;
        let limit = if state_limit == 0 {
            resilsim::oracle::DEFAULT_STATE_LIMIT
        } else {
            state_limit as u128
        };
        let inner =
            exact_resilience(&m.graph, &m.scenario, &m.profiles, m.failure.p_fail, limit).map_err(fail)?;
        *out = Box::into_raw(Box::new(RsimExact { inner }));
        Ok(())
    })
}

/// # Safety
/// `exact` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rsim_exact_free(exact: *mut RsimExact) {
    if !exact.is_null() {
        drop(Box::from_raw(exact));
    }
}

/// # Safety
/// `exact` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn rsim_exact_r_model(exact: *const RsimExact) -> f64 {
    exact.as_ref().map_or(f64::NAN, |e| e.inner.r_model_exact)
}

/// Exact availability of endpoint `index` (declaration order).
///
/// # Safety
/// `exact` must be a live handle; `availability` writable.
#[no_mangle]
pub unsafe extern "C" fn rsim_exact_endpoint(
    exact: *const RsimExact,
    index: usize,
    availability: *mut f64,
) -> RsimStatus {
    guard(|| {
        let e = &handle(exact, "exact")?.inner;
        let out = out_arg(availability, "availability")?;
        let ep = e.per_endpoint.get(index).ok_or_else(|| {
            set_error(format!("endpoint index {index} out of range"));
            RsimStatus::OutOfRange
        })?;
        *out = ep.availability;
        Ok(())
    })
}

/// Measured resilience of a request log given as text. Pass
/// `window_start >= window_end` to use the whole log.
///
/// # Safety
/// `log_text` must be NUL-terminated; `r_live` writable.
#[no_mangle]
pub unsafe extern "C" fn rsim_analyze_log(
    log_text: *const c_char,
    window_start: f64,
    window_end: f64,
    drop_4xx: i32,
    r_live: *mut f64,
) -> RsimStatus {
    guard(|| {
        let text = str_arg(log_text, "log_text")?;
        let out = out_arg(r_live, "r_live")?;
        let records = parse_request_log(text).map_err(fail)?;
        let opts = AnalyzeOptions {
            window: (window_start < window_end).then_some((window_start, window_end)),
            drop_4xx: drop_4xx != 0,
        };
        *out = resilsim::live::analyze_request_log_with(&records, &opts)
            .map_err(fail)?
            .r_live;
        Ok(())
    })
}
