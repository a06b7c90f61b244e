//! C ABI for the rankmfg solvers.
//!
//! Every function returns a [`RankmfgStatus`]; on failure the message is
//! kept per thread and can be read with [`rankmfg_last_error`]. Handles are
//! opaque and must be released with the matching `_free` function.
//!
//! Array accessors copy into caller buffers. They always write the required
//! length to `needed` (when non-null) and return
//! `RANKMFG_STATUS_BUFFER_TOO_SMALL` without copying if `len` is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rankmfg::config::Config;
use rankmfg::fictitious::{run_fp, Equilibrium, FpReport, FpState};
use rankmfg::{validate_model, Error, ModelSpec, TimeGrid};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankmfgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Config = 4,
    Domain = 5,
    Overflow = 6,
    NonConvergence = 7,
    NonFinite = 8,
    Instability = 9,
    GridMismatch = 10,
    Path = 11,
    Io = 12,
    BufferTooSmall = 13,
    Panic = 14,
}

/// Model instance plus the grid and solver settings from its config.
pub struct RankmfgModel {
    config: Config,
    spec: ModelSpec,
}

/// Result of a fictitious-play run.
pub struct RankmfgEquilibrium {
    grid: TimeGrid,
    state: FpState,
    report: FpReport,
    equilibrium: Equilibrium,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RankmfgStatus {
    match e {
        Error::Domain(_) => RankmfgStatus::Domain,
        Error::Config(_) => RankmfgStatus::Config,
        Error::Parse { .. } => RankmfgStatus::Parse,
        Error::Io { .. } => RankmfgStatus::Io,
        Error::Overflow { .. } => RankmfgStatus::Overflow,
        Error::NonConvergence { .. } => RankmfgStatus::NonConvergence,
        Error::NonFinite { .. } => RankmfgStatus::NonFinite,
        Error::Instability { .. } => RankmfgStatus::Instability,
        Error::Path(_) => RankmfgStatus::Path,
        Error::GridMismatch(_) => RankmfgStatus::GridMismatch,
    }
}

enum Fail {
    Status(RankmfgStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RankmfgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RankmfgStatus::Ok
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RankmfgStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(RankmfgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize, needed: *mut usize) -> Result<(), Fail> {
    if !needed.is_null() {
        *needed = src.len();
    }
    if len < src.len() {
        return Err(Fail::Status(
            RankmfgStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

unsafe fn copy_str(s: &str, buf: *mut c_char, len: usize) -> usize {
    let bytes = s.as_bytes();
    if !buf.is_null() && len > 0 {
        let n = bytes.len().min(len - 1);
        ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
        *buf.add(n) = 0;
    }
    bytes.len() + 1
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len`. Returns the buffer size needed for the full message.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_str(&e.borrow(), buf, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rankmfg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON configuration into a model handle. Shape errors fail here;
/// modelling assumptions are checked by [`rankmfg_model_validate`].
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_model_from_json(json: *const c_char, out: *mut *mut RankmfgModel) -> RankmfgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail::Status(RankmfgStatus::InvalidUtf8, e.to_string()))?;
        let config = Config::parse(text)?;
        let spec = config.model()?;
        *out = Box::into_raw(Box::new(RankmfgModel { config, spec }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`rankmfg_model_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_model_free(model: *mut RankmfgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_model_regimes(model: *const RankmfgModel, out: *mut usize) -> RankmfgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.spec.regimes();
        Ok(())
    })
}

/// Checks the modelling assumptions. `valid` receives 1 or 0; the report
/// text is copied into `report` (may be null) as with [`rankmfg_last_error`]
/// and its full size is written to `report_needed` (may be null).
///
/// # Safety
/// `model` must be a live handle; `valid` valid for writes; `report` null or
/// valid for `report_len` bytes; `report_needed` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_model_validate(
    model: *const RankmfgModel,
    valid: *mut i32,
    report: *mut c_char,
    report_len: usize,
    report_needed: *mut usize,
) -> RankmfgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if valid.is_null() {
            return Err(null("valid"));
        }
        let r = validate_model(&m.spec);
        *valid = i32::from(r.passed());
        let needed = copy_str(&r.to_string(), report, report_len);
        if !report_needed.is_null() {
            *report_needed = needed;
        }
        Ok(())
    })
}

/// Evaluates the reward `R(x)` for `x` in `[0, 1]`.
///
/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_reward_eval(model: *const RankmfgModel, x: f64, out: *mut f64) -> RankmfgStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.spec.reward.eval(x)?;
        Ok(())
    })
}

/// Runs fictitious play on the model's configured grid. `eta <= 0` and
/// `max_iters == 0` fall back to the configured values.
///
/// # Safety
/// `model` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_run_fp(
    model: *const RankmfgModel,
    eta: f64,
    max_iters: usize,
    out: *mut *mut RankmfgEquilibrium,
) -> RankmfgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let m = deref(model, "model")?;
        let report = validate_model(&m.spec);
        if !report.passed() {
            return Err(Fail::Status(RankmfgStatus::Config, report.to_string()));
        }
        let grid = m.config.time_grid(&m.spec)?;
        let mut params = m.config.fp_params();
        if max_iters > 0 {
            params.max_iters = max_iters;
        }
        let eta = if eta > 0.0 { eta } else { m.config.eta };
        let (state, report, equilibrium) = run_fp(&m.spec, eta, &grid, &params)?;
        *out = Box::into_raw(Box::new(RankmfgEquilibrium {
            grid,
            state,
            report,
            equilibrium,
        }));
        Ok(())
    })
}

/// # Safety
/// `eq` must be null or a handle from [`rankmfg_run_fp`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_free(eq: *mut RankmfgEquilibrium) {
    if !eq.is_null() {
        drop(Box::from_raw(eq));
    }
}

/// Number of grid nodes, regimes and fictitious-play iterations.
///
/// # Safety
/// `eq` must be a live handle; each output pointer null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_dims(
    eq: *const RankmfgEquilibrium,
    nodes: *mut usize,
    regimes: *mut usize,
    iterations: *mut usize,
) -> RankmfgStatus {
    guard(|| {
        let e = deref(eq, "equilibrium")?;
        if !nodes.is_null() {
            *nodes = e.grid.n_nodes();
        }
        if !regimes.is_null() {
            *regimes = e.equilibrium.policy.regimes();
        }
        if !iterations.is_null() {
            *iterations = e.report.iterations;
        }
        Ok(())
    })
}

/// Final exploitability and payoff.
///
/// # Safety
/// `eq` must be a live handle; each output pointer null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_summary(
    eq: *const RankmfgEquilibrium,
    exploitability: *mut f64,
    payoff: *mut f64,
) -> RankmfgStatus {
    guard(|| {
        let e = deref(eq, "equilibrium")?;
        let last = e.state.history.last();
        if !exploitability.is_null() {
            *exploitability = last.map_or(f64::NAN, |r| r.exploitability);
        }
        if !payoff.is_null() {
            *payoff = e.report.final_payoff;
        }
        Ok(())
    })
}

/// Grid times, one per node.
///
/// # Safety
/// `eq` must be a live handle; `buf` valid for `len` doubles; `needed` null
/// or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_times(
    eq: *const RankmfgEquilibrium,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> RankmfgStatus {
    guard(|| {
        let e = deref(eq, "equilibrium")?;
        let t: Vec<f64> = (0..e.grid.n_nodes()).map(|i| e.grid.time(i)).collect();
        copy_out(&t, buf, len, needed)
    })
}

/// Equilibrium aggregate progress, one value per node.
///
/// # Safety
/// As [`rankmfg_equilibrium_times`].
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_rho(
    eq: *const RankmfgEquilibrium,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> RankmfgStatus {
    guard(|| copy_out(deref(eq, "equilibrium")?.equilibrium.rho.values(), buf, len, needed))
}

/// Value function, node-major (`nodes x regimes`).
///
/// # Safety
/// As [`rankmfg_equilibrium_times`].
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_value(
    eq: *const RankmfgEquilibrium,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> RankmfgStatus {
    guard(|| {
        copy_out(
            deref(eq, "equilibrium")?.equilibrium.value.values.values(),
            buf,
            len,
            needed,
        )
    })
}

/// Gibbs generator, node-major (`nodes x regimes x regimes`), diagonal
/// included.
///
/// # Safety
/// As [`rankmfg_equilibrium_times`].
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_policy(
    eq: *const RankmfgEquilibrium,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> RankmfgStatus {
    guard(|| {
        copy_out(
            deref(eq, "equilibrium")?.equilibrium.policy.rates.values(),
            buf,
            len,
            needed,
        )
    })
}

/// Softmax initial law over regimes.
///
/// # Safety
/// As [`rankmfg_equilibrium_times`].
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_initial_law(
    eq: *const RankmfgEquilibrium,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> RankmfgStatus {
    guard(|| copy_out(&deref(eq, "equilibrium")?.equilibrium.policy.initial, buf, len, needed))
}

/// Exploitability per iteration, starting at `n = 1`.
///
/// # Safety
/// As [`rankmfg_equilibrium_times`].
#[no_mangle]
pub unsafe extern "C" fn rankmfg_equilibrium_exploitability(
    eq: *const RankmfgEquilibrium,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> RankmfgStatus {
    guard(|| {
        let e = deref(eq, "equilibrium")?;
        let xs: Vec<f64> = e.state.history.iter().map(|r| r.exploitability).collect();
        copy_out(&xs, buf, len, needed)
    })
}
