//! C ABI for the mflqg solver toolkit.
//!
//! Scenarios and solved consistency systems are opaque handles; every call
//! returns a status code and never unwinds across the boundary. Strings
//! returned through out-parameters are heap-allocated by this library and
//! must be released with `mflqg_string_free`.

use mflqg::error::CoreError;
use mflqg::meanfield::{solve_consistency, ConsistencySolution, SolveMethod};
use mflqg::model::{derive_offsets, validate_h1, ModelParams};
use mflqg::numerics::{TimeGrid, Vector};
use mflqg::scenario::{load_scenario, parse_scenario};
use mflqg::simulate::{convergence_study, AdversaryMode, SimConfig};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Status of one API call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MflqgStatus {
    Ok = 0,
    ValidationFailed = 1,
    SolverBreakdown = 2,
    IoError = 3,
    InvalidArgument = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let cleaned: String = message.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).ok();
    });
}

fn status_of(e: &CoreError) -> MflqgStatus {
    match e {
        CoreError::Io(_) | CoreError::Parse { .. } => MflqgStatus::IoError,
        CoreError::Breakdown { .. }
        | CoreError::Divergence { .. }
        | CoreError::NonFinite { .. }
        | CoreError::Singular(_)
        | CoreError::Saddle(_)
        | CoreError::InnerUnbounded { .. }
        | CoreError::FitRefused(_) => MflqgStatus::SolverBreakdown,
        _ => MflqgStatus::ValidationFailed,
    }
}

fn guard<F: FnOnce() -> MflqgStatus>(f: F) -> MflqgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            MflqgStatus::Panic
        }
    }
}

/// Opaque scenario handle.
pub struct MflqgScenario {
    params: ModelParams,
    steps: usize,
}

/// Opaque solved-system handle.
pub struct MflqgSolution {
    cs: ConsistencySolution,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

fn hand_out_string(out: *mut *mut c_char, body: String) -> MflqgStatus {
    if out.is_null() {
        set_error("null output pointer");
        return MflqgStatus::InvalidArgument;
    }
    match CString::new(body) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            MflqgStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL");
            MflqgStatus::InvalidArgument
        }
    }
}

/// Most recent error message on this thread, or null. The pointer is owned
/// by the library and stays valid until the next failing call.
#[no_mangle]
pub extern "C" fn mflqg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|s| s.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously handed out by an `mflqg_*` call and not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn mflqg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a scenario file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn mflqg_scenario_load(
    path: *const c_char,
    out: *mut *mut MflqgScenario,
) -> MflqgStatus {
    guard(|| {
        let Some(path) = cstr_arg(path) else {
            set_error("path must be valid UTF-8");
            return MflqgStatus::InvalidArgument;
        };
        if out.is_null() {
            set_error("null output pointer");
            return MflqgStatus::InvalidArgument;
        }
        match load_scenario(Path::new(path)) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(MflqgScenario {
                    params: s.params,
                    steps: s.steps,
                }));
                MflqgStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Parse scenario text directly (relative csv references resolve against the
/// working directory).
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out` must be non-null.
#[no_mangle]
pub unsafe extern "C" fn mflqg_scenario_from_text(
    text: *const c_char,
    out: *mut *mut MflqgScenario,
) -> MflqgStatus {
    guard(|| {
        let Some(text) = cstr_arg(text) else {
            set_error("text must be valid UTF-8");
            return MflqgStatus::InvalidArgument;
        };
        if out.is_null() {
            set_error("null output pointer");
            return MflqgStatus::InvalidArgument;
        }
        match parse_scenario(text, Path::new(".")) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(MflqgScenario {
                    params: s.params,
                    steps: s.steps,
                }));
                MflqgStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `scenario` must come from a load call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mflqg_scenario_free(scenario: *mut MflqgScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// State dimension of the scenario.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mflqg_scenario_state_dim(scenario: *const MflqgScenario) -> usize {
    scenario.as_ref().map(|s| s.params.n).unwrap_or(0)
}

/// Control dimension of the scenario.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mflqg_scenario_control_dim(scenario: *const MflqgScenario) -> usize {
    scenario.as_ref().map(|s| s.params.r).unwrap_or(0)
}

/// Default grid steps requested by the scenario file.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mflqg_scenario_default_steps(scenario: *const MflqgScenario) -> usize {
    scenario.as_ref().map(|s| s.steps).unwrap_or(0)
}

/// Baseline-hypothesis validation; hands out the JSON report.
///
/// # Safety
/// `scenario` must be a live handle; `report_json` non-null.
#[no_mangle]
pub unsafe extern "C" fn mflqg_validate(
    scenario: *const MflqgScenario,
    report_json: *mut *mut c_char,
) -> MflqgStatus {
    guard(|| {
        let Some(handle) = scenario.as_ref() else {
            set_error("null scenario");
            return MflqgStatus::InvalidArgument;
        };
        match validate_h1(&handle.params) {
            Ok(report) => {
                let body = serde_json::to_string_pretty(&report).unwrap_or_default();
                let status = hand_out_string(report_json, body);
                if status != MflqgStatus::Ok {
                    return status;
                }
                if report.ok {
                    MflqgStatus::Ok
                } else {
                    set_error("baseline hypothesis violated");
                    MflqgStatus::ValidationFailed
                }
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Solve the consistency system (`use_picard` != 0 selects the fixed-point
/// method) and return an opaque solution handle.
///
/// # Safety
/// `scenario` must be a live handle; `out` non-null. `steps` = 0 uses the
/// scenario default.
#[no_mangle]
pub unsafe extern "C" fn mflqg_solve(
    scenario: *const MflqgScenario,
    steps: usize,
    use_picard: i32,
    out: *mut *mut MflqgSolution,
) -> MflqgStatus {
    guard(|| {
        let Some(handle) = scenario.as_ref() else {
            set_error("null scenario");
            return MflqgStatus::InvalidArgument;
        };
        if out.is_null() {
            set_error("null output pointer");
            return MflqgStatus::InvalidArgument;
        }
        let steps = if steps == 0 { handle.steps } else { steps };
        let method = if use_picard != 0 {
            SolveMethod::Picard
        } else {
            SolveMethod::Affine
        };
        let result = (|| -> mflqg::Result<ConsistencySolution> {
            let d = derive_offsets(&handle.params)?;
            let grid = TimeGrid::new(handle.params.horizon, steps)?;
            solve_consistency(&handle.params, &d, &grid, method)
        })();
        match result {
            Ok(cs) => {
                *out = Box::into_raw(Box::new(MflqgSolution { cs }));
                MflqgStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `solution` must come from `mflqg_solve` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mflqg_solution_free(solution: *mut MflqgSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Number of grid steps of a solved system.
///
/// # Safety
/// `solution` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mflqg_solution_steps(solution: *const MflqgSolution) -> usize {
    solution.as_ref().map(|s| s.cs.steps()).unwrap_or(0)
}

/// Worst residual of the discretized system rows, and the normalizer
/// 1 + sup-norm of the representations.
///
/// # Safety
/// All pointers must be valid; `solution` a live handle.
#[no_mangle]
pub unsafe extern "C" fn mflqg_solution_residual(
    solution: *const MflqgSolution,
    max_rms: *mut f64,
    normalizer: *mut f64,
) -> MflqgStatus {
    guard(|| {
        let Some(handle) = solution.as_ref() else {
            set_error("null solution");
            return MflqgStatus::InvalidArgument;
        };
        if max_rms.is_null() || normalizer.is_null() {
            set_error("null output pointer");
            return MflqgStatus::InvalidArgument;
        }
        *max_rms = handle.cs.residuals.max_rms;
        *normalizer = handle.cs.residuals.normalizer;
        MflqgStatus::Ok
    })
}

/// Persist a solved system as the labeled-CSV solution file.
///
/// # Safety
/// `solution` a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mflqg_solution_save(
    solution: *const MflqgSolution,
    path: *const c_char,
) -> MflqgStatus {
    guard(|| {
        let Some(handle) = solution.as_ref() else {
            set_error("null solution");
            return MflqgStatus::InvalidArgument;
        };
        let Some(path) = cstr_arg(path) else {
            set_error("path must be valid UTF-8");
            return MflqgStatus::InvalidArgument;
        };
        match handle.cs.save_csv(Path::new(path)) {
            Ok(()) => MflqgStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Decentralized strategy u_i at grid step `step` for agent state `x_i` and
/// common-noise pair (`xhat`, `h`); writes r values into `u_out`.
///
/// # Safety
/// `x_i`, `xhat`, `h` must point to n doubles each and `u_out` to r doubles.
#[no_mangle]
pub unsafe extern "C" fn mflqg_strategy_eval(
    solution: *const MflqgSolution,
    step: usize,
    x_i: *const f64,
    xhat: *const f64,
    h: *const f64,
    u_out: *mut f64,
) -> MflqgStatus {
    guard(|| {
        let Some(handle) = solution.as_ref() else {
            set_error("null solution");
            return MflqgStatus::InvalidArgument;
        };
        if x_i.is_null() || xhat.is_null() || h.is_null() || u_out.is_null() {
            set_error("null array pointer");
            return MflqgStatus::InvalidArgument;
        }
        let n = handle.cs.n();
        let r = handle.cs.params.r;
        if step >= handle.cs.steps() {
            set_error("step out of range");
            return MflqgStatus::InvalidArgument;
        }
        let xv = Vector::from_column_slice(std::slice::from_raw_parts(x_i, n));
        let xh = Vector::from_column_slice(std::slice::from_raw_parts(xhat, n));
        let hv = Vector::from_column_slice(std::slice::from_raw_parts(h, n));
        let u = handle.cs.strategy(step, &xv, &xh, &hv);
        std::slice::from_raw_parts_mut(u_out, r).copy_from_slice(u.as_slice());
        MflqgStatus::Ok
    })
}

/// Worst-case volatility sigma0_hat at grid step `step`; writes n values.
///
/// # Safety
/// `xhat`, `h` must point to n doubles each and `sigma0_out` to n doubles.
#[no_mangle]
pub unsafe extern "C" fn mflqg_adversary_eval(
    solution: *const MflqgSolution,
    step: usize,
    xhat: *const f64,
    h: *const f64,
    sigma0_out: *mut f64,
) -> MflqgStatus {
    guard(|| {
        let Some(handle) = solution.as_ref() else {
            set_error("null solution");
            return MflqgStatus::InvalidArgument;
        };
        if xhat.is_null() || h.is_null() || sigma0_out.is_null() {
            set_error("null array pointer");
            return MflqgStatus::InvalidArgument;
        }
        let n = handle.cs.n();
        if step >= handle.cs.steps() {
            set_error("step out of range");
            return MflqgStatus::InvalidArgument;
        }
        let xh = Vector::from_column_slice(std::slice::from_raw_parts(xhat, n));
        let hv = Vector::from_column_slice(std::slice::from_raw_parts(h, n));
        let s = handle.cs.adversary(step, &xh, &hv);
        std::slice::from_raw_parts_mut(sigma0_out, n).copy_from_slice(s.as_slice());
        MflqgStatus::Ok
    })
}

/// Convergence study over the given population sizes; hands out the summary
/// as JSON.
///
/// # Safety
/// `solution` a live handle; `n_list` points to `n_count` entries;
/// `summary_json` non-null.
#[no_mangle]
pub unsafe extern "C" fn mflqg_study(
    solution: *const MflqgSolution,
    n_list: *const usize,
    n_count: usize,
    paths: usize,
    seed: u64,
    summary_json: *mut *mut c_char,
) -> MflqgStatus {
    guard(|| {
        let Some(handle) = solution.as_ref() else {
            set_error("null solution");
            return MflqgStatus::InvalidArgument;
        };
        if n_list.is_null() {
            set_error("null N list");
            return MflqgStatus::InvalidArgument;
        }
        let ns = std::slice::from_raw_parts(n_list, n_count).to_vec();
        let cfg = SimConfig {
            n_list: ns,
            paths_per_n: paths,
            grid: handle.cs.grid.clone(),
            master_seed: seed,
            adversary_mode: AdversaryMode::Meanfield,
        };
        match convergence_study(&handle.cs, &cfg) {
            Ok(result) => {
                #[derive(serde::Serialize)]
                struct Summary<'a> {
                    per_n: &'a [mflqg::simulate::PerNStats],
                    meanfield_error_slope: f64,
                    per_capita_bounded: bool,
                }
                let body = serde_json::to_string_pretty(&Summary {
                    per_n: &result.per_n,
                    meanfield_error_slope: result.meanfield_error_slopes.selected_slope,
                    per_capita_bounded: result.per_capita_bounded,
                })
                .unwrap_or_default();
                hand_out_string(summary_json, body)
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
