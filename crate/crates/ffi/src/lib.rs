//! C interface to the simulator: parse a TOML scenario or pick a built-in
//! experiment, run it, and read back the CSV and violation count.
//!
//! Every function returns a [`MinotaurStatus`]. On failure the message is
//! available from [`minotaur_last_error`] until the next call on the same
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use minotaur::exp::{run_experiment, run_scenario, ExpError, Report, ScenarioConfig};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinotaurStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Simulation = 4,
    Io = 5,
    Panic = 6,
}

/// A parsed and validated scenario.
pub struct MinotaurScenario {
    config: ScenarioConfig,
}

/// The outcome of a scenario or experiment run.
pub struct MinotaurReport {
    report: Report,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: MinotaurStatus, msg: impl Into<String>) -> MinotaurStatus {
    set_error(msg);
    status
}

fn from_exp(e: ExpError) -> MinotaurStatus {
    let status = match &e {
        ExpError::Sim(_) => MinotaurStatus::Simulation,
        ExpError::Io(_) => MinotaurStatus::Io,
        _ if e.is_usage() => MinotaurStatus::InvalidConfig,
        _ => MinotaurStatus::Simulation,
    };
    fail(status, e.to_string())
}

fn guarded(f: impl FnOnce() -> MinotaurStatus) -> MinotaurStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(MinotaurStatus::Panic, "panic inside minotaur"))
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, MinotaurStatus> {
    if s.is_null() {
        return Err(fail(MinotaurStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(MinotaurStatus::InvalidUtf8, e.to_string()))
}

fn boxed_report(report: Report, out: *mut *mut MinotaurReport) -> MinotaurStatus {
    // SAFETY: callers check `out` for null before running.
    unsafe { *out = Box::into_raw(Box::new(MinotaurReport { report })) };
    MinotaurStatus::Ok
}

/// Message for the last failed call on this thread, or null. The pointer is
/// owned by the library and stays valid until the next call.
#[no_mangle]
pub extern "C" fn minotaur_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a TOML scenario.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn minotaur_scenario_from_toml(toml: *const c_char, out: *mut *mut MinotaurScenario) -> MinotaurStatus {
    guarded(|| {
        if out.is_null() {
            return fail(MinotaurStatus::NullArgument, "null output pointer");
        }
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_toml(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(MinotaurScenario { config }));
                MinotaurStatus::Ok
            }
            Err(e) => from_exp(e),
        }
    })
}

/// Number of seeds the scenario will run.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn minotaur_scenario_seed_count(scenario: *const MinotaurScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.config.seeds.len())
}

/// Runs every seed of the scenario with the safety monitors.
///
/// # Safety
/// `scenario` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn minotaur_scenario_run(scenario: *const MinotaurScenario, out: *mut *mut MinotaurReport) -> MinotaurStatus {
    guarded(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(MinotaurStatus::NullArgument, "null scenario");
        };
        if out.is_null() {
            return fail(MinotaurStatus::NullArgument, "null output pointer");
        }
        match run_scenario(&s.config) {
            Ok(r) => boxed_report(r, out),
            Err(e) => from_exp(e),
        }
    })
}

/// # Safety
/// `scenario` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn minotaur_scenario_free(scenario: *mut MinotaurScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs a built-in experiment over seeds `0..seeds`; zero picks the recipe's
/// default. `overrides` holds `count` strings of the form `key=value`.
///
/// # Safety
/// `name` must be a NUL-terminated string, `overrides` must point to `count`
/// such strings (or be null when `count` is zero) and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn minotaur_experiment_run(
    name: *const c_char,
    overrides: *const *const c_char,
    count: usize,
    seeds: u64,
    out: *mut *mut MinotaurReport,
) -> MinotaurStatus {
    guarded(|| {
        if out.is_null() || (overrides.is_null() && count > 0) {
            return fail(MinotaurStatus::NullArgument, "null pointer argument");
        }
        let name = match read_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let mut sets = Vec::with_capacity(count);
        for i in 0..count {
            match read_str(*overrides.add(i)) {
                Ok(s) => sets.push(s.to_string()),
                Err(s) => return s,
            }
        }
        match run_experiment(name, &sets, (seeds > 0).then_some(seeds)) {
            Ok(r) => boxed_report(r, out),
            Err(e) => from_exp(e),
        }
    })
}

/// Monitor violations recorded by the run.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn minotaur_report_violations(report: *const MinotaurReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.violations.len())
}

/// The run's CSV table. Free the string with [`minotaur_string_free`].
///
/// # Safety
/// `report` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn minotaur_report_csv(report: *const MinotaurReport, out: *mut *mut c_char) -> MinotaurStatus {
    guarded(|| {
        let Some(r) = report.as_ref() else {
            return fail(MinotaurStatus::NullArgument, "null report");
        };
        if out.is_null() {
            return fail(MinotaurStatus::NullArgument, "null output pointer");
        }
        match CString::new(r.report.csv()) {
            Ok(s) => {
                *out = s.into_raw();
                MinotaurStatus::Ok
            }
            Err(e) => fail(MinotaurStatus::Io, e.to_string()),
        }
    })
}

/// Writes the CSV, manifest and violation files into `dir`.
///
/// # Safety
/// `report` must be a live handle and `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn minotaur_report_write(report: *const MinotaurReport, dir: *const c_char) -> MinotaurStatus {
    guarded(|| {
        let Some(r) = report.as_ref() else {
            return fail(MinotaurStatus::NullArgument, "null report");
        };
        let dir = match read_str(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match r.report.write(dir.as_ref()) {
            Ok(_) => MinotaurStatus::Ok,
            Err(e) => from_exp(e),
        }
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn minotaur_report_free(report: *mut MinotaurReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn minotaur_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENARIO: &str = "name = \"ffi\"\nseeds = [3]\n[protocol]\nepoch_len = 100\nkappa = 25\nf_w = 0.3\nf_s = 0.3\nomega = 0.5\nepochs = 2\n\0";

    fn last_error() -> String {
        let p = minotaur_last_error();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn scenario_lifecycle() {
        unsafe {
            let mut sc = ptr::null_mut();
            assert_eq!(minotaur_scenario_from_toml(SCENARIO.as_ptr().cast(), &mut sc), MinotaurStatus::Ok);
            assert_eq!(minotaur_scenario_seed_count(sc), 1);
            let mut rep = ptr::null_mut();
            assert_eq!(minotaur_scenario_run(sc, &mut rep), MinotaurStatus::Ok);
            assert_eq!(minotaur_report_violations(rep), 0);
            let mut csv = ptr::null_mut();
            assert_eq!(minotaur_report_csv(rep, &mut csv), MinotaurStatus::Ok);
            let text = CStr::from_ptr(csv).to_str().unwrap().to_string();
            assert!(text.starts_with("# scenario_digest="));
            assert_eq!(text.lines().count(), 2 + 200);
            minotaur_string_free(csv);
            minotaur_report_free(rep);
            minotaur_scenario_free(sc);
            assert!(minotaur_last_error().is_null());
        }
    }

    #[test]
    fn errors_carry_codes_and_messages() {
        unsafe {
            let mut sc = ptr::null_mut();
            assert_eq!(minotaur_scenario_from_toml(ptr::null(), &mut sc), MinotaurStatus::NullArgument);
            assert_eq!(minotaur_scenario_from_toml(c"name = 1".as_ptr(), &mut sc), MinotaurStatus::InvalidConfig);
            assert!(last_error().contains("parse"));
            assert!(sc.is_null());
            let mut rep = ptr::null_mut();
            assert_eq!(minotaur_experiment_run(c"nope".as_ptr(), ptr::null(), 0, 1, &mut rep), MinotaurStatus::InvalidConfig);
            assert!(last_error().contains("selfish-table"));
            assert_eq!(minotaur_scenario_run(ptr::null(), &mut rep), MinotaurStatus::NullArgument);
            minotaur_report_free(ptr::null_mut());
            minotaur_scenario_free(ptr::null_mut());
        }
    }

    #[test]
    fn experiment_with_overrides() {
        unsafe {
            let sets = [c"steps=1".as_ptr(), c"base.epoch_len=300".as_ptr(), c"base.kappa=10".as_ptr()];
            let mut rep = ptr::null_mut();
            assert_eq!(minotaur_experiment_run(c"private-heatmap".as_ptr(), sets.as_ptr(), sets.len(), 1, &mut rep), MinotaurStatus::Ok);
            let dir = std::env::temp_dir().join(format!("minotaur-ffi-{}", std::process::id()));
            let cdir = CString::new(dir.to_str().unwrap()).unwrap();
            assert_eq!(minotaur_report_write(rep, cdir.as_ptr()), MinotaurStatus::Ok);
            assert!(dir.join("private-heatmap.csv").exists());
            std::fs::remove_dir_all(&dir).unwrap();
            minotaur_report_free(rep);
        }
    }
}
