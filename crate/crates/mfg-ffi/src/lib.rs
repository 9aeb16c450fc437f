//! C interface to the fictitious-play library.
//!
//! The surface follows the usual handle conventions: configurations and run
//! results are opaque pointers owned by this library, every fallible call
//! returns an [`MfgStatus`], and the most recent failure on the calling
//! thread is described by [`mfg_last_error_message`]. A generated C header
//! lives in `include/mfg.h`.
//!
//! Handles are not thread-safe; share them across threads only with
//! external synchronization. Every `*_free` function accepts null.

use mfg::config::RunConfig;
use mfg::runner::{run_driver, DriverOutput, RunKind};
use mfg::MfgError;
use std::any::Any;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Outcome of a call. Anything other than `MFG_STATUS_OK` leaves a
/// description readable through `mfg_last_error_message`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfgStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// Configuration text failed to parse or validate, or the config does
    /// not fit the requested run kind.
    Config = 3,
    /// An argument was out of range or dimensionally inconsistent.
    InvalidArgument = 4,
    /// The requested metric is not recorded at that iteration.
    NotRecorded = 5,
    /// The run itself failed after starting.
    Runtime = 6,
    /// A panic was caught at the language boundary. State may be stale;
    /// free the handles involved and do not reuse them.
    Panic = 7,
}

/// Per-iteration series recorded in a run's trace. Iterations are numbered
/// from 1, matching the `n` column of `trace.csv`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfgMetric {
    /// Gain of the newest learned response over the running policy
    /// mixture. Always recorded; may be negative for sampling-based
    /// solvers.
    ApproxExploitability = 0,
    /// Gain of the exact best response over the running policy mixture.
    /// Recorded only when the run computes diagnostics.
    Exploitability = 1,
    /// Gap between the exact and the learned response, so that
    /// exploitability = learning error + approximate exploitability.
    /// Recorded only when the run computes diagnostics.
    LearningError = 2,
    /// Distance between successive population averages. Always recorded.
    AvgFlowStep = 3,
    /// Distance between successive best-response flows. Absent at the
    /// final iteration, which has no successor.
    BrFlowStep = 4,
    /// Distance between the exact and the learned best-response flow.
    /// Recorded only when the run computes diagnostics.
    ExactVsLearnedFlow = 5,
    /// L2 gap between the population density and the closed-form
    /// equilibrium density. Recorded only for the torus congestion
    /// benchmark.
    L2DensityError = 6,
    /// L2 gap between the mean initial control and the closed-form
    /// equilibrium control. Recorded only for the torus congestion
    /// benchmark.
    L2ControlError = 7,
}

/// Opaque run configuration. Create with `mfg_run_config_default` or
/// `mfg_run_config_parse`, release with `mfg_run_config_free`.
pub struct MfgRunConfig {
    inner: RunConfig,
}

/// Opaque record of a finished run: the final population, the mean
/// control, and the per-iteration trace. Release with `mfg_result_free`.
pub struct MfgRunResult {
    output: DriverOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let clean = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn fail(err: &MfgError) -> MfgStatus {
    set_last_error(&err.to_string());
    match err {
        MfgError::Config(_) => MfgStatus::Config,
        MfgError::Diagnostic(_) | MfgError::Io(_) => MfgStatus::Runtime,
        _ => MfgStatus::InvalidArgument,
    }
}

fn null_arg(function: &str) -> MfgStatus {
    set_last_error(&format!("{function}: null pointer argument"));
    MfgStatus::NullPointer
}

fn panic_text(payload: &(dyn Any + Send)) -> &str {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s
    } else {
        "opaque panic payload"
    }
}

fn guarded<F: FnOnce() -> MfgStatus>(body: F) -> MfgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            set_last_error(&format!("panic: {}", panic_text(payload.as_ref())));
            MfgStatus::Panic
        }
    }
}

fn guarded_ptr<T, F: FnOnce() -> *mut T>(body: F) -> *mut T {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(ptr) => ptr,
        Err(payload) => {
            set_last_error(&format!("panic: {}", panic_text(payload.as_ref())));
            std::ptr::null_mut()
        }
    }
}

unsafe fn str_arg<'a>(function: &str, ptr: *const c_char) -> Result<&'a str, MfgStatus> {
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_last_error(&format!("{function}: argument is not valid UTF-8"));
            Err(MfgStatus::Utf8)
        }
    }
}

/// Library version string. Statically allocated; do not free.
#[no_mangle]
pub extern "C" fn mfg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Description of the most recent failure on the calling thread, as a
/// NUL-terminated UTF-8 string. Empty if nothing has failed yet. The
/// pointer stays valid until the next failing call on the same thread; do
/// not free it.
#[no_mangle]
pub extern "C" fn mfg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// New configuration with every key at its default. Never fails.
#[no_mangle]
pub extern "C" fn mfg_run_config_default() -> *mut MfgRunConfig {
    guarded_ptr(|| {
        Box::into_raw(Box::new(MfgRunConfig {
            inner: RunConfig::default(),
        }))
    })
}

/// Parse configuration text in `key = value` form, one pair per line, with
/// `#` comments. Unknown keys, duplicate keys, and malformed values are
/// errors. On success writes a new handle to `out`.
///
/// # Safety
/// `text` must point to a NUL-terminated string and `out` must be valid
/// for one pointer write. Both may be null; that is reported as an error.
#[no_mangle]
pub unsafe extern "C" fn mfg_run_config_parse(
    text: *const c_char,
    out: *mut *mut MfgRunConfig,
) -> MfgStatus {
    guarded(|| {
        if text.is_null() || out.is_null() {
            return null_arg("mfg_run_config_parse");
        }
        let text = match str_arg("mfg_run_config_parse", text) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match RunConfig::parse(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(MfgRunConfig { inner }));
                MfgStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Set a single key, using the same syntax and validation as the config
/// file. Cross-key constraints are checked when the config is run, not
/// here.
///
/// # Safety
/// `config` must be a live handle from this library, and `key` and `value`
/// must point to NUL-terminated strings. Nulls are reported as errors.
#[no_mangle]
pub unsafe extern "C" fn mfg_run_config_set(
    config: *mut MfgRunConfig,
    key: *const c_char,
    value: *const c_char,
) -> MfgStatus {
    guarded(|| {
        if config.is_null() || key.is_null() || value.is_null() {
            return null_arg("mfg_run_config_set");
        }
        let key = match str_arg("mfg_run_config_set", key) {
            Ok(s) => s,
            Err(status) => return status,
        };
        let value = match str_arg("mfg_run_config_set", value) {
            Ok(s) => s,
            Err(status) => return status,
        };
        match (*config).inner.set(key, value) {
            Ok(()) => MfgStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Canonical serialization of every key at its resolved value. Parsing the
/// snapshot reproduces the configuration exactly. Returns null only if
/// `config` is null. Free the string with `mfg_string_free`.
///
/// # Safety
/// `config` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mfg_run_config_snapshot(config: *const MfgRunConfig) -> *mut c_char {
    guarded_ptr(|| {
        if config.is_null() {
            null_arg("mfg_run_config_snapshot");
            return std::ptr::null_mut();
        }
        let snapshot = (*config).inner.snapshot();
        CString::new(snapshot.replace('\0', " "))
            .map(CString::into_raw)
            .unwrap_or(std::ptr::null_mut())
    })
}

/// Release a configuration handle. Accepts null.
///
/// # Safety
/// `config` must be null or a handle from this library that has not been
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn mfg_run_config_free(config: *mut MfgRunConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Release a string returned by this library. Accepts null.
///
/// # Safety
/// `s` must be null or a string returned by this library that has not been
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn mfg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn run_into(
    function: &str,
    kind: RunKind,
    config: *const MfgRunConfig,
    out: *mut *mut MfgRunResult,
) -> MfgStatus {
    if config.is_null() || out.is_null() {
        return null_arg(function);
    }
    match run_driver(kind, &(*config).inner) {
        Ok(output) => {
            *out = Box::into_raw(Box::new(MfgRunResult { output }));
            MfgStatus::Ok
        }
        Err(e) => fail(&e),
    }
}

/// Run fictitious play with the exact dynamic-programming best response.
/// Needs `mode = finite_horizon`. On success writes a new result handle to
/// `out`.
///
/// # Safety
/// `config` must be a live handle from this library and `out` must be
/// valid for one pointer write. Nulls are reported as errors.
#[no_mangle]
pub unsafe extern "C" fn mfg_run_exact_fp(
    config: *const MfgRunConfig,
    out: *mut *mut MfgRunResult,
) -> MfgStatus {
    guarded(|| run_into("mfg_run_exact_fp", RunKind::Exact, config, out))
}

/// Run fictitious play with an approximate best response. Needs
/// `mode = finite_horizon` and `solver = perturbed` or `q_learning`. On
/// success writes a new result handle to `out`.
///
/// # Safety
/// `config` must be a live handle from this library and `out` must be
/// valid for one pointer write. Nulls are reported as errors.
#[no_mangle]
pub unsafe extern "C" fn mfg_run_approximate_fp(
    config: *const MfgRunConfig,
    out: *mut *mut MfgRunResult,
) -> MfgStatus {
    guarded(|| {
        run_into(
            "mfg_run_approximate_fp",
            RunKind::Approximate,
            config,
            out,
        )
    })
}

/// Run stationary model-free fictitious play. Needs `mode = stationary`
/// and `solver = q_learning`. On success writes a new result handle to
/// `out`.
///
/// # Safety
/// `config` must be a live handle from this library and `out` must be
/// valid for one pointer write. Nulls are reported as errors.
#[no_mangle]
pub unsafe extern "C" fn mfg_run_modelfree_fp(
    config: *const MfgRunConfig,
    out: *mut *mut MfgRunResult,
) -> MfgStatus {
    guarded(|| run_into("mfg_run_modelfree_fp", RunKind::ModelFree, config, out))
}

/// Number of iterations recorded in the run's trace. Returns 0 if
/// `result` is null.
///
/// # Safety
/// `result` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mfg_result_num_iterations(result: *const MfgRunResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).output.trace.len()
}

/// Number of state cells in the run's grid. Returns 0 if `result` is
/// null.
///
/// # Safety
/// `result` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn mfg_result_num_cells(result: *const MfgRunResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).output.flow.num_cells()
}

/// Read one metric at one iteration (1-based, matching the `n` column of
/// `trace.csv`). Returns `MFG_STATUS_NOT_RECORDED` for series the run did
/// not record; see the `MfgMetric` variants for when that happens.
///
/// # Safety
/// `result` must be a live handle from this library and `out` must be
/// valid for one `double` write. Nulls are reported as errors.
#[no_mangle]
pub unsafe extern "C" fn mfg_result_metric(
    result: *const MfgRunResult,
    metric: MfgMetric,
    iteration: usize,
    out: *mut f64,
) -> MfgStatus {
    guarded(|| {
        if result.is_null() || out.is_null() {
            return null_arg("mfg_result_metric");
        }
        let trace = &(*result).output.trace;
        if iteration < 1 || iteration > trace.len() {
            set_last_error(&format!(
                "mfg_result_metric: iteration {iteration} out of range 1..={}",
                trace.len()
            ));
            return MfgStatus::InvalidArgument;
        }
        let row = &trace.iterations()[iteration - 1];
        let value = match metric {
            MfgMetric::ApproxExploitability => Some(row.approx_exploitability),
            MfgMetric::Exploitability => row.exploitability,
            MfgMetric::LearningError => row.learning_error,
            MfgMetric::AvgFlowStep => Some(row.avg_flow_step),
            MfgMetric::BrFlowStep => row.br_flow_step,
            MfgMetric::ExactVsLearnedFlow => row.exact_vs_learned_flow,
            MfgMetric::L2DensityError => row.l2_density_error,
            MfgMetric::L2ControlError => row.l2_control_error,
        };
        match value {
            Some(v) => {
                *out = v;
                MfgStatus::Ok
            }
            None => {
                set_last_error(&format!(
                    "mfg_result_metric: metric {metric:?} not recorded at iteration {iteration}"
                ));
                MfgStatus::NotRecorded
            }
        }
    })
}

/// Copy the final population density into `buffer`, which must hold
/// exactly `mfg_result_num_cells` entries. For finite-horizon runs this is
/// the last time slice of the averaged flow; for stationary runs it is the
/// estimated stationary density.
///
/// # Safety
/// `result` must be a live handle from this library and `buffer` must be
/// valid for `length` `double` writes. Nulls are reported as errors.
#[no_mangle]
pub unsafe extern "C" fn mfg_result_final_density(
    result: *const MfgRunResult,
    buffer: *mut f64,
    length: usize,
) -> MfgStatus {
    guarded(|| {
        if result.is_null() || buffer.is_null() {
            return null_arg("mfg_result_final_density");
        }
        let flow = &(*result).output.flow;
        let slice = flow
            .slices()
            .last()
            .expect("a flow has at least one slice");
        if length != slice.len() {
            set_last_error(&format!(
                "mfg_result_final_density: buffer holds {length} entries, the density has {}",
                slice.len()
            ));
            return MfgStatus::InvalidArgument;
        }
        std::ptr::copy_nonoverlapping(slice.probs().as_ptr(), buffer, length);
        MfgStatus::Ok
    })
}

/// Copy the mean control at the initial time step into `buffer`, which
/// must hold exactly `mfg_result_num_cells` entries. For stationary runs
/// this is the single learned control row.
///
/// # Safety
/// `result` must be a live handle from this library and `buffer` must be
/// valid for `length` `double` writes. Nulls are reported as errors.
#[no_mangle]
pub unsafe extern "C" fn mfg_result_initial_control(
    result: *const MfgRunResult,
    buffer: *mut f64,
    length: usize,
) -> MfgStatus {
    guarded(|| {
        if result.is_null() || buffer.is_null() {
            return null_arg("mfg_result_initial_control");
        }
        let control = &(*result).output.control;
        let row = control.first().expect("a run records at least one row");
        if length != row.len() {
            set_last_error(&format!(
                "mfg_result_initial_control: buffer holds {length} entries, the control has {}",
                row.len()
            ));
            return MfgStatus::InvalidArgument;
        }
        std::ptr::copy_nonoverlapping(row.as_ptr(), buffer, length);
        MfgStatus::Ok
    })
}

/// Release a result handle. Accepts null.
///
/// # Safety
/// `result` must be null or a handle from this library that has not been
/// freed before.
#[no_mangle]
pub unsafe extern "C" fn mfg_result_free(result: *mut MfgRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
