//! C ABI for kpzlab.
//!
//! Every function returns a [`KpzStatus`] and writes results through out
//! pointers. Objects cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function. Panics never unwind into C;
//! they are reported as [`KpzStatus::Panic`]. The message of the most recent
//! failure on the calling thread is available from [`kpz_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use kpzlab::harness::{self, ExperimentConfig, ExperimentId, Overrides, RunStatus};
use kpzlab::kernels::{build_mollifier, derive_kernels, KernelSet, MollifierShape};
use kpzlab::LabError;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpzStatus {
    Ok = 0,
    /// The experiment ran and at least one check failed.
    CheckFailed = 1,
    ConfigError = 2,
    NumericalAbort = 3,
    NullPointer = 4,
    InvalidUtf8 = 5,
    InvalidArgument = 6,
    Io = 7,
    Panic = 8,
}

/// Mollifier profile selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KpzShape {
    Bump = 0,
    TriangleConvolved = 1,
}

impl From<KpzShape> for MollifierShape {
    fn from(s: KpzShape) -> Self {
        match s {
            KpzShape::Bump => MollifierShape::Bump,
            KpzShape::TriangleConvolved => MollifierShape::TriangleConvolved,
        }
    }
}

/// Experiment configuration under construction.
pub struct KpzConfig {
    experiment: ExperimentId,
    file: Option<PathBuf>,
    overrides: Overrides,
}

/// Finished run: status, run directory and deterministic report.
pub struct KpzRun {
    status: RunStatus,
    report: Option<CString>,
    run_dir: Option<CString>,
}

/// Derived kernels of one mollifier.
pub struct KpzKernels {
    inner: KernelSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(KpzStatus, String);

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        let status = match &e {
            LabError::Config { .. } | LabError::InvalidParameter { .. } => KpzStatus::ConfigError,
            LabError::Io(_) => KpzStatus::Io,
            e if e.is_numerical() => KpzStatus::NumericalAbort,
            _ => KpzStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<KpzStatus, Failure>) -> KpzStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            KpzStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(KpzStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(KpzStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(KpzStatus::NullPointer, format!("{what} is null")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(KpzStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn status_of(s: RunStatus) -> KpzStatus {
    match s {
        RunStatus::Pass => KpzStatus::Ok,
        RunStatus::Fail => KpzStatus::CheckFailed,
        RunStatus::ConfigError => KpzStatus::ConfigError,
        RunStatus::NumericalAbort => KpzStatus::NumericalAbort,
        RunStatus::Aborted => KpzStatus::Io,
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn kpz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn kpz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a configuration for the named experiment (e.g. `"she-sim"`) with
/// default parameters.
///
/// # Safety
/// `experiment` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kpz_config_new(experiment: *const c_char, out: *mut *mut KpzConfig) -> KpzStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let experiment: ExperimentId = read_str(experiment, "experiment")?.parse()?;
        let cfg = KpzConfig { experiment, file: None, overrides: Overrides::default() };
        *out = Box::into_raw(Box::new(cfg));
        Ok(KpzStatus::Ok)
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `cfg` must come from [`kpz_config_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kpz_config_free(cfg: *mut KpzConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Overrides one parameter of the experiment section. The value uses TOML
/// syntax; comma lists and bare strings are also accepted.
///
/// # Safety
/// `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn kpz_config_set(cfg: *mut KpzConfig, key: *const c_char, value: *const c_char) -> KpzStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let pair = (read_str(key, "key")?.to_string(), read_str(value, "value")?.to_string());
        let mut trial = cfg.overrides.clone();
        trial.values.push(pair);
        ExperimentConfig::load(cfg.experiment, cfg.file.as_deref(), &trial)?;
        cfg.overrides = trial;
        Ok(KpzStatus::Ok)
    })
}

/// Sets the master seed.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kpz_config_set_seed(cfg: *mut KpzConfig, seed: u64) -> KpzStatus {
    guard(|| {
        handle(cfg, "cfg")?.overrides.seed = Some(seed);
        Ok(KpzStatus::Ok)
    })
}

/// Sets the worker thread count; 0 selects the global pool.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kpz_config_set_threads(cfg: *mut KpzConfig, threads: usize) -> KpzStatus {
    guard(|| {
        handle(cfg, "cfg")?.overrides.threads = (threads > 0).then_some(threads);
        Ok(KpzStatus::Ok)
    })
}

/// Sets the output root directory.
///
/// # Safety
/// `cfg` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kpz_config_set_out(cfg: *mut KpzConfig, dir: *const c_char) -> KpzStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        cfg.overrides.out = Some(PathBuf::from(read_str(dir, "dir")?));
        Ok(KpzStatus::Ok)
    })
}

/// Loads a TOML config file underneath the overrides set so far.
///
/// # Safety
/// `cfg` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kpz_config_load_file(cfg: *mut KpzConfig, path: *const c_char) -> KpzStatus {
    guard(|| {
        let cfg = handle(cfg, "cfg")?;
        let file = PathBuf::from(read_str(path, "path")?);
        ExperimentConfig::load(cfg.experiment, Some(&file), &cfg.overrides)?;
        cfg.file = Some(file);
        Ok(KpzStatus::Ok)
    })
}

/// Runs the experiment and writes its artifacts. On return `*out` holds a run
/// handle whenever the experiment started, including when checks failed; the
/// status mirrors the command-line exit code.
///
/// # Safety
/// `cfg` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kpz_run(cfg: *const KpzConfig, out: *mut *mut KpzRun) -> KpzStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = cfg.as_ref().ok_or_else(|| Failure(KpzStatus::NullPointer, "cfg is null".into()))?;
        let resolved = ExperimentConfig::load(cfg.experiment, cfg.file.as_deref(), &cfg.overrides)?;
        let outcome = harness::run_config(&resolved);
        let report = match &outcome.output {
            Some(o) => Some(harness::report_json(&resolved, o)?),
            None => None,
        };
        let status = status_of(outcome.status);
        if let Some(e) = &outcome.error {
            set_error(e.clone());
        }
        let cstring = |s: String| CString::new(s).ok();
        let run = KpzRun {
            status: outcome.status,
            report: report.and_then(cstring),
            run_dir: outcome.run_dir.map(|d| d.display().to_string()).and_then(cstring),
        };
        *out = Box::into_raw(Box::new(run));
        Ok(status)
    })
}

/// Status of a finished run.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn kpz_run_status(run: *const KpzRun) -> KpzStatus {
    run.as_ref().map_or(KpzStatus::NullPointer, |r| status_of(r.status))
}

/// Deterministic JSON report, or null when the run did not finish. Owned by
/// the run handle.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn kpz_run_report_json(run: *const KpzRun) -> *const c_char {
    run.as_ref().and_then(|r| r.report.as_ref()).map_or(ptr::null(), |s| s.as_ptr())
}

/// Directory holding the run artifacts, or null. Owned by the run handle.
///
/// # Safety
/// `run` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn kpz_run_dir(run: *const KpzRun) -> *const c_char {
    run.as_ref().and_then(|r| r.run_dir.as_ref()).map_or(ptr::null(), |s| s.as_ptr())
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from [`kpz_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kpz_run_free(run: *mut KpzRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Builds the noise covariance kernels for a mollifier of width `epsilon`.
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn kpz_kernels_new(shape: KpzShape, epsilon: f64, out: *mut *mut KpzKernels) -> KpzStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let inner = derive_kernels(&build_mollifier(shape.into(), epsilon)?)?;
        *out = Box::into_raw(Box::new(KpzKernels { inner }));
        Ok(KpzStatus::Ok)
    })
}

/// Releases kernels. Null is ignored.
///
/// # Safety
/// `k` must come from [`kpz_kernels_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kpz_kernels_free(k: *mut KpzKernels) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Evaluates covariance, its derivative and the odd primitive at `x`. Any of
/// the out pointers may be null.
///
/// # Safety
/// `k` must be a live handle; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn kpz_kernels_eval(
    k: *const KpzKernels,
    x: f64,
    covariance: *mut f64,
    derivative: *mut f64,
    primitive: *mut f64,
) -> KpzStatus {
    guard(|| {
        let k = &k.as_ref().ok_or_else(|| Failure(KpzStatus::NullPointer, "k is null".into()))?.inner;
        if !x.is_finite() {
            return Err(Failure(KpzStatus::InvalidArgument, format!("x = {x} is not finite")));
        }
        if let Some(c) = covariance.as_mut() {
            *c = k.covariance(x);
        }
        if let Some(d) = derivative.as_mut() {
            *d = k.covariance_derivative(x);
        }
        if let Some(p) = primitive.as_mut() {
            *p = k.primitive(x);
        }
        Ok(KpzStatus::Ok)
    })
}
