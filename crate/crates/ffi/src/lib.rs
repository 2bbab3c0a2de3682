//! C ABI over the push-sum library: opaque engine handles, status codes, and
//! one-shot wrappers around the CLI commands. The header is generated into
//! `include/pushsum.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use pushsum::config::{build, AppConfig};
use pushsum::engine::{init_run, EngineState};
use pushsum::{penalty, runner, Error};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, or an argument outside its domain.
    InvalidArgument = 1,
    /// The config or instance failed validation.
    ValidationFailed = 2,
    /// The computation failed at run time.
    RuntimeFailed = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PsStatus {
    if err.is_validation() {
        PsStatus::ValidationFailed
    } else {
        PsStatus::RuntimeFailed
    }
}

/// Most recent error message on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null(), |c| c.as_ptr())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ps_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, ()> {
    if ptr.is_null() {
        set_error(format!("{what} is null"));
        return Err(());
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
    })
}

/// Smooth penalty hinge `g(u)`; writes the value through `out`.
///
/// # Safety
/// `out` must point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn ps_penalty_g(u: f64, out: *mut f64) -> PsStatus {
    if out.is_null() {
        set_error("out is null".to_string());
        return PsStatus::InvalidArgument;
    }
    match penalty::penalty_g(u) {
        Ok(v) => {
            *out = v;
            PsStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            PsStatus::InvalidArgument
        }
    }
}

/// Derivative of the penalty hinge.
///
/// # Safety
/// `out` must point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn ps_penalty_g_prime(u: f64, out: *mut f64) -> PsStatus {
    if out.is_null() {
        set_error("out is null".to_string());
        return PsStatus::InvalidArgument;
    }
    match penalty::penalty_g_prime(u) {
        Ok(v) => {
            *out = v;
            PsStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            PsStatus::InvalidArgument
        }
    }
}

/// Opaque simulation handle.
pub struct PsEngine {
    engine: EngineState,
}

/// Create an engine from a config JSON string (same schema as the CLI).
/// Returns null on failure; see [`ps_last_error`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_new(config_json: *const c_char) -> *mut PsEngine {
    let Ok(text) = cstr_arg(config_json, "config_json") else {
        return ptr::null_mut();
    };
    let built = AppConfig::from_str(text).and_then(|cfg| {
        let run = cfg.run.clone();
        build(&cfg, None).and_then(|b| init_run(b.into_run_config(&run)))
    });
    match built {
        Ok(engine) => Box::into_raw(Box::new(PsEngine { engine })),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Destroy an engine created by [`ps_engine_new`]. Null is ignored.
///
/// # Safety
/// `handle` must be a pointer returned by [`ps_engine_new`] that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_free(handle: *mut PsEngine) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

macro_rules! deref_handle {
    ($handle:expr) => {
        match $handle.as_ref() {
            Some(h) => h,
            None => {
                set_error("engine handle is null".to_string());
                return PsStatus::InvalidArgument;
            }
        }
    };
}

/// Advance the engine by `rounds` rounds.
///
/// # Safety
/// `handle` must be a live engine pointer.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_step(handle: *mut PsEngine, rounds: u64) -> PsStatus {
    let h = match handle.as_mut() {
        Some(h) => h,
        None => {
            set_error("engine handle is null".to_string());
            return PsStatus::InvalidArgument;
        }
    };
    for _ in 0..rounds {
        if let Err(e) = h.engine.step() {
            set_error(e.to_string());
            return status_of(&e);
        }
    }
    PsStatus::Ok
}

/// Decision dimension of the engine's problem.
///
/// # Safety
/// `handle` must be a live engine pointer; returns 0 on null.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_dim(handle: *const PsEngine) -> usize {
    handle.as_ref().map_or(0, |h| h.engine.dim())
}

/// Number of agents.
///
/// # Safety
/// `handle` must be a live engine pointer; returns 0 on null.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_agents(handle: *const PsEngine) -> usize {
    handle.as_ref().map_or(0, |h| h.engine.n())
}

/// Rounds executed so far.
///
/// # Safety
/// `handle` must be a live engine pointer; returns 0 on null.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_round(handle: *const PsEngine) -> u64 {
    handle.as_ref().map_or(0, |h| h.engine.round())
}

/// Copy the average iterate `z_bar` into `out` (length `len`, which must
/// equal the dimension).
///
/// # Safety
/// `handle` must be a live engine pointer and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_z_bar(
    handle: *const PsEngine,
    out: *mut f64,
    len: usize,
) -> PsStatus {
    let h = deref_handle!(handle);
    if out.is_null() || len != h.engine.dim() {
        set_error(format!(
            "out buffer must hold exactly {} doubles",
            h.engine.dim()
        ));
        return PsStatus::InvalidArgument;
    }
    let z = h.engine.z_bar();
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(&z);
    PsStatus::Ok
}

/// Copy agent `agent`'s iterate `z_i` into `out`.
///
/// # Safety
/// `handle` must be a live engine pointer and `out` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_agent_z(
    handle: *const PsEngine,
    agent: usize,
    out: *mut f64,
    len: usize,
) -> PsStatus {
    let h = deref_handle!(handle);
    if agent >= h.engine.n() {
        set_error(format!("agent {agent} out of range"));
        return PsStatus::InvalidArgument;
    }
    if out.is_null() || len != h.engine.dim() {
        set_error(format!(
            "out buffer must hold exactly {} doubles",
            h.engine.dim()
        ));
        return PsStatus::InvalidArgument;
    }
    std::slice::from_raw_parts_mut(out, len).copy_from_slice(&h.engine.agents()[agent].z);
    PsStatus::Ok
}

/// Current `max_i ||z_i - z_bar||`.
///
/// # Safety
/// `handle` must be a live engine pointer and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_disagreement(
    handle: *const PsEngine,
    out: *mut f64,
) -> PsStatus {
    let h = deref_handle!(handle);
    if out.is_null() {
        set_error("out is null".to_string());
        return PsStatus::InvalidArgument;
    }
    *out = h.engine.disagreement();
    PsStatus::Ok
}

/// Current `Psi(x_bar) / n`.
///
/// # Safety
/// `handle` must be a live engine pointer and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ps_engine_mean_penalty(
    handle: *const PsEngine,
    out: *mut f64,
) -> PsStatus {
    let h = deref_handle!(handle);
    if out.is_null() {
        set_error("out is null".to_string());
        return PsStatus::InvalidArgument;
    }
    match h.engine.mean_penalty() {
        Ok(v) => {
            *out = v;
            PsStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// One-shot equivalent of `pushsum run`: execute the config at `config_path`
/// and write the artifacts into `out_dir`. `oracle_path` may be null.
///
/// # Safety
/// All path arguments must be NUL-terminated strings (or null where allowed).
#[no_mangle]
pub unsafe extern "C" fn ps_run_to_dir(
    config_path: *const c_char,
    out_dir: *const c_char,
    oracle_path: *const c_char,
) -> PsStatus {
    let Ok(config) = cstr_arg(config_path, "config_path") else {
        return PsStatus::InvalidArgument;
    };
    let Ok(out) = cstr_arg(out_dir, "out_dir") else {
        return PsStatus::InvalidArgument;
    };
    let oracle = if oracle_path.is_null() {
        None
    } else {
        match cstr_arg(oracle_path, "oracle_path") {
            Ok(p) => Some(p.to_string()),
            Err(()) => return PsStatus::InvalidArgument,
        }
    };
    match runner::cmd_run(
        Path::new(config),
        Path::new(out),
        oracle.as_deref().map(Path::new),
        None,
    ) {
        Ok(()) => PsStatus::Ok,
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// One-shot equivalent of `pushsum check`. On success writes a malloc'd JSON
/// report through `out_report` (free with [`ps_string_free`]) and returns Ok
/// iff every validator passed, ValidationFailed otherwise.
///
/// # Safety
/// `config_path` must be NUL-terminated; `out_report` may be null if the
/// caller does not want the report.
#[no_mangle]
pub unsafe extern "C" fn ps_check_config(
    config_path: *const c_char,
    out_report: *mut *mut c_char,
) -> PsStatus {
    let Ok(config) = cstr_arg(config_path, "config_path") else {
        return PsStatus::InvalidArgument;
    };
    match runner::cmd_check(Path::new(config), None) {
        Ok(report) => {
            if !out_report.is_null() {
                let json = serde_json::to_string_pretty(&report).unwrap_or_default();
                let c = CString::new(json).unwrap_or_default();
                *out_report = c.into_raw();
            }
            if report.pass {
                PsStatus::Ok
            } else {
                set_error("one or more validators failed".to_string());
                PsStatus::ValidationFailed
            }
        }
        Err(e) => {
            set_error(e.to_string());
            status_of(&e)
        }
    }
}

/// Free a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must have been returned by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn ps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn toy_config_json() -> CString {
        CString::new(
            r#"{
                "version": 1,
                "problem": {"type": "constrained_toy", "agents": 4},
                "schedule": {
                    "nodes": 4,
                    "graphs": [[[0,1],[1,2],[1,3]], [[3,1],[3,0],[2,3]]],
                    "selector": {"type": "alternate"},
                    "claimed_b": 2
                },
                "params": {"type": "poly", "a0": 0.5, "a_exp": 0.6, "r0": 1.0, "r_coef": 0.1, "r_exp": 0.75},
                "run": {"max_rounds": 1000, "record_every": 100}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn penalty_functions_through_ffi() {
        let mut out = 0.0f64;
        unsafe {
            assert_eq!(ps_penalty_g(1.0, &mut out), PsStatus::Ok);
            assert!((out - 0.433_780_830_483_027_1).abs() < 1e-12);
            assert_eq!(ps_penalty_g(f64::NAN, &mut out), PsStatus::InvalidArgument);
            assert!(!ps_last_error().is_null());
            assert_eq!(ps_penalty_g_prime(1.0, &mut out), PsStatus::Ok);
            assert!((out - 1.0f64.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn engine_lifecycle_through_ffi() {
        let cfg = toy_config_json();
        unsafe {
            let h = ps_engine_new(cfg.as_ptr());
            assert!(!h.is_null(), "engine_new failed");
            assert_eq!(ps_engine_dim(h), 1);
            assert_eq!(ps_engine_agents(h), 4);
            assert_eq!(ps_engine_step(h, 2000), PsStatus::Ok);
            assert_eq!(ps_engine_round(h), 2000);
            let mut z = [0.0f64];
            assert_eq!(ps_engine_z_bar(h, z.as_mut_ptr(), 1), PsStatus::Ok);
            assert!((z[0] - 1.0).abs() < 0.2, "z_bar = {}", z[0]);
            let mut d = -1.0;
            assert_eq!(ps_engine_disagreement(h, &mut d), PsStatus::Ok);
            assert!(d >= 0.0);
            let mut pen = -1.0;
            assert_eq!(ps_engine_mean_penalty(h, &mut pen), PsStatus::Ok);
            assert!(pen >= 0.0);
            let mut zi = [0.0f64];
            assert_eq!(ps_engine_agent_z(h, 3, zi.as_mut_ptr(), 1), PsStatus::Ok);
            assert_eq!(
                ps_engine_agent_z(h, 9, zi.as_mut_ptr(), 1),
                PsStatus::InvalidArgument
            );
            ps_engine_free(h);
        }
    }

    #[test]
    fn engine_new_rejects_bad_config() {
        let bad = CString::new("{\"version\": 1}").unwrap();
        unsafe {
            let h = ps_engine_new(bad.as_ptr());
            assert!(h.is_null());
            let msg = CStr::from_ptr(ps_last_error()).to_str().unwrap();
            assert!(!msg.is_empty());
        }
    }

    #[test]
    fn run_and_check_through_ffi() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_path = tmp.path().join("toy.json");
        std::fs::write(&cfg_path, toy_config_json().to_str().unwrap()).unwrap();
        let out_dir = tmp.path().join("out");
        let c_cfg = CString::new(cfg_path.to_str().unwrap()).unwrap();
        let c_out = CString::new(out_dir.to_str().unwrap()).unwrap();
        unsafe {
            assert_eq!(
                ps_run_to_dir(c_cfg.as_ptr(), c_out.as_ptr(), ptr::null()),
                PsStatus::Ok
            );
            assert!(out_dir.join("metrics.csv").exists());

            let mut report: *mut c_char = ptr::null_mut();
            // The toy schedule is intentionally uncertified, so check fails
            // validation but still returns a report.
            assert_eq!(
                ps_check_config(c_cfg.as_ptr(), &mut report),
                PsStatus::ValidationFailed
            );
            assert!(!report.is_null());
            let text = CStr::from_ptr(report).to_str().unwrap().to_string();
            assert!(text.contains("\"graph\""));
            ps_string_free(report);
        }
    }
}
