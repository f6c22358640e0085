//! C ABI over `delayexit`.
//!
//! Systems are opaque handles created by `delayexit_system_builtin` or
//! `delayexit_system_from_config` and released with `delayexit_system_free`.
//! Every other call returns a `DelayexitStatus`; on failure the message is
//! available from `delayexit_last_error_message` on the same thread until
//! the next call. Absent optional values are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use delayexit::entry_exit::predict_exit_with;
use delayexit::odeint::detect_exit;
use delayexit::polar::PolarAnalysis;
use delayexit::system::{load_system, make_builtin, BuiltinName, FastSlowSystem};
use delayexit::{Error, ExitCase, Tolerances};

/// Opaque system handle.
pub struct DelayexitSystem {
    inner: FastSlowSystem,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayexitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    /// The mathematics rules the request out (no exit, uncovered case, ...).
    DomainError = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayexitCase {
    Trans = 0,
    Invar = 1,
    Classical = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DelayexitCoeffs {
    pub x_star: f64,
    pub theta_star: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub coef_delta: f64,
    /// NaN when the transcritical point is degenerate.
    pub lambda: f64,
    pub s0_invariant: bool,
    pub z0_invariant: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DelayexitPrediction {
    pub exit_case: DelayexitCase,
    pub x0: f64,
    /// NaN unless `exit_case` is `Invar`.
    pub x_tilde: f64,
    pub x1: f64,
    pub lambda: f64,
    pub x_star: f64,
    pub s0_invariant: bool,
    pub z0_invariant: bool,
    /// Bit `k - 1` is set when standing assumption `k` fails.
    pub assumption_failures: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DelayexitExit {
    pub entry_x: f64,
    pub exit_x: f64,
    pub entry_t: f64,
    pub exit_t: f64,
    /// The trajectory started inside the cylinder.
    pub entry_synthesized: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: DelayexitStatus, msg: impl Into<String>) -> DelayexitStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> DelayexitStatus {
    let status = if e.is_domain_error() { DelayexitStatus::DomainError } else { DelayexitStatus::InvalidInput };
    fail(status, e.to_string())
}

fn guarded<F: FnOnce() -> DelayexitStatus>(f: F) -> DelayexitStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(DelayexitStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, DelayexitStatus> {
    if s.is_null() {
        return Err(fail(DelayexitStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(DelayexitStatus::InvalidInput, "string argument is not UTF-8"))
}

unsafe fn handle<'a>(sys: *const DelayexitSystem) -> Result<&'a FastSlowSystem, DelayexitStatus> {
    sys.as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| fail(DelayexitStatus::NullPointer, "system handle is null"))
}

fn finish<T>(out: *mut T, value: Result<T, DelayexitStatus>) -> DelayexitStatus {
    match value {
        Ok(v) => {
            // SAFETY: callers check `out` for null before computing `value`.
            unsafe { out.write(v) };
            DelayexitStatus::Ok
        }
        Err(s) => s,
    }
}

fn boxed(out: *mut *mut DelayexitSystem, sys: Result<FastSlowSystem, Error>) -> DelayexitStatus {
    match sys {
        Ok(inner) => {
            // SAFETY: checked non-null by the caller.
            unsafe { *out = Box::into_raw(Box::new(DelayexitSystem { inner })) };
            DelayexitStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Creates one of the builtin systems (`one_way_coupled`, `eps_coupled`,
/// `nonlinear`). `a` applies to `nonlinear`; pass NaN for the default.
///
/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delayexit_system_builtin(
    name: *const c_char,
    a: f64,
    out: *mut *mut DelayexitSystem,
) -> DelayexitStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DelayexitStatus::NullPointer, "out is null");
        }
        let name = match read_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let name: BuiltinName = match name.parse() {
            Ok(n) => n,
            Err(e) => return from_error(e),
        };
        boxed(out, make_builtin(name, (!a.is_nan()).then_some(a)))
    })
}

/// Creates a polynomial system from TOML config text.
///
/// # Safety
/// `config` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delayexit_system_from_config(
    config: *const c_char,
    out: *mut *mut DelayexitSystem,
) -> DelayexitStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DelayexitStatus::NullPointer, "out is null");
        }
        match read_str(config) {
            Ok(text) => boxed(out, load_system(text)),
            Err(s) => s,
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sys` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn delayexit_system_free(sys: *mut DelayexitSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Collision point, collision angle, coefficients, `lambda` and branch
/// invariance.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delayexit_theorem_coeffs(
    sys: *const DelayexitSystem,
    out: *mut DelayexitCoeffs,
) -> DelayexitStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DelayexitStatus::NullPointer, "out is null");
        }
        let value = handle(sys).and_then(|s| {
            let a = PolarAnalysis::from_system(s).map_err(from_error)?;
            let c = a.coeffs();
            Ok(DelayexitCoeffs {
                x_star: a.x_star,
                theta_star: a.theta_star(),
                alpha: c.alpha,
                beta: c.beta,
                gamma: c.gamma,
                coef_delta: c.coef_delta,
                lambda: a.primary.lambda.unwrap_or(f64::NAN),
                s0_invariant: a.s0_invariant,
                z0_invariant: a.z0_invariant,
            })
        });
        finish(out, value)
    })
}

/// Predicted exit point for entry at `x0`.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn delayexit_predict_exit(
    sys: *const DelayexitSystem,
    x0: f64,
    out: *mut DelayexitPrediction,
) -> DelayexitStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DelayexitStatus::NullPointer, "out is null");
        }
        let value = handle(sys).and_then(|s| {
            let a = PolarAnalysis::from_system(s).map_err(from_error)?;
            let p = predict_exit_with(&a, x0).map_err(from_error)?;
            Ok(DelayexitPrediction {
                exit_case: match p.case {
                    ExitCase::Trans => DelayexitCase::Trans,
                    ExitCase::Invar => DelayexitCase::Invar,
                    ExitCase::Classical => DelayexitCase::Classical,
                },
                x0: p.x0,
                x_tilde: p.x_tilde.unwrap_or(f64::NAN),
                x1: p.x1,
                lambda: p.lambda_used,
                x_star: p.x_star,
                s0_invariant: p.invariance_flags.s0,
                z0_invariant: p.invariance_flags.z0,
                assumption_failures: p.assumption_failures.iter().fold(0, |m, k| m | 1 << (k - 1)),
            })
        });
        finish(out, value)
    })
}

/// Simulates from `(x0, z1, z2)` and reports the first entry into and exit
/// from the cylinder of the given radius.
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn delayexit_detect_exit(
    sys: *const DelayexitSystem,
    x0: f64,
    z1: f64,
    z2: f64,
    eps: f64,
    cylinder_radius: f64,
    rtol: f64,
    atol: f64,
    out: *mut DelayexitExit,
) -> DelayexitStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DelayexitStatus::NullPointer, "out is null");
        }
        let value = handle(sys).and_then(|s| {
            let d = detect_exit(s, [x0, z1, z2], eps, cylinder_radius, Tolerances { rtol, atol })
                .map_err(from_error)?;
            Ok(DelayexitExit {
                entry_x: d.entry.x_event,
                exit_x: d.exit.x_event,
                entry_t: d.entry.t_event,
                exit_t: d.exit.t_event,
                entry_synthesized: d.entry.synthesized,
            })
        });
        finish(out, value)
    })
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn delayexit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn delayexit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
