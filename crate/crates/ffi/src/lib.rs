//! C ABI over the `ldpfo` core.
//!
//! Handles are opaque pointers created by `*_new` functions and released
//! by the matching `*_free`. Every fallible call returns an [`LdpfoStatus`];
//! on failure [`ldpfo_last_error`] describes the problem. No call keeps
//! state between invocations apart from the handles the caller owns.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ldpfo::estimation::{estimate, Estimator, IbuConfig};
use ldpfo::rng::{seeded, LdpRng};
use ldpfo::{Error, Mechanism, MechanismId, MechanismSpec, Report};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdpfoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidBudget = 3,
    DegenerateChain = 4,
    InvalidReport = 5,
    EstimationFailed = 6,
    BufferTooSmall = 7,
    Json = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LdpfoEstimator {
    Mi = 0,
    Ibu = 1,
}

pub struct LdpfoRng(LdpRng);

pub struct LdpfoMechanism(Mechanism);

pub struct LdpfoReports(Vec<Report>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> LdpfoStatus {
    match e {
        Error::InvalidBudget(_)
        | Error::InvalidLongitudinalBudget { .. }
        | Error::BudgetKindMismatch(_) => LdpfoStatus::InvalidBudget,
        Error::DegenerateChain { .. } => LdpfoStatus::DegenerateChain,
        Error::MalformedReport(_) | Error::KindMismatch { .. } => LdpfoStatus::InvalidReport,
        Error::EmptyCounts | Error::DegenerateChannel | Error::ZeroDenominator(_) => {
            LdpfoStatus::EstimationFailed
        }
        _ => LdpfoStatus::InvalidArgument,
    }
}

fn fail(status: LdpfoStatus, msg: impl Into<String>) -> LdpfoStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> LdpfoStatus) -> LdpfoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(LdpfoStatus::Panic, "internal panic"),
    }
}

fn from_core<T>(r: ldpfo::Result<T>) -> Result<T, LdpfoStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

macro_rules! deref {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => {
                return fail(
                    LdpfoStatus::NullPointer,
                    concat!(stringify!($p), " is null"),
                )
            }
        }
    };
    (mut $p:expr) => {
        match unsafe { $p.as_mut() } {
            Some(v) => v,
            None => {
                return fail(
                    LdpfoStatus::NullPointer,
                    concat!(stringify!($p), " is null"),
                )
            }
        }
    };
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

fn read_str<'a>(p: *const c_char) -> Result<&'a str, LdpfoStatus> {
    if p.is_null() {
        return Err(fail(LdpfoStatus::NullPointer, "string argument is null"));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(LdpfoStatus::InvalidArgument, "string argument is not UTF-8"))
}

fn write_string(s: String, out: *mut *mut c_char) -> LdpfoStatus {
    let out = deref!(mut out);
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            LdpfoStatus::Ok
        }
        Err(_) => fail(LdpfoStatus::Json, "string contains NUL"),
    }
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ldpfo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ldpfo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn ldpfo_rng_new(seed: u64) -> *mut LdpfoRng {
    Box::into_raw(Box::new(LdpfoRng(seeded(seed))))
}

/// # Safety
/// `rng` must come from [`ldpfo_rng_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_rng_free(rng: *mut LdpfoRng) {
    if !rng.is_null() {
        drop(Box::from_raw(rng));
    }
}

fn new_mechanism(spec: ldpfo::Result<MechanismSpec>, out: *mut *mut LdpfoMechanism) -> LdpfoStatus {
    let out = deref!(mut out);
    let spec = tri!(from_core(spec));
    let m = tri!(from_core(Mechanism::new(spec)));
    *out = Box::into_raw(Box::new(LdpfoMechanism(m)));
    LdpfoStatus::Ok
}

fn parse_id(id: *const c_char) -> Result<MechanismId, LdpfoStatus> {
    let s = read_str(id)?;
    from_core(s.parse::<MechanismId>())
}

/// Build a one-shot mechanism (`GRR`, `SUE`, `OUE`, `SS`, `THE`, `BLH`,
/// `OLH`).
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_mechanism_new(
    id: *const c_char,
    k: usize,
    eps: f64,
    out: *mut *mut LdpfoMechanism,
) -> LdpfoStatus {
    guard(|| {
        let id = tri!(parse_id(id));
        new_mechanism(MechanismSpec::one_shot(id, k, eps), out)
    })
}

/// Build a longitudinal mechanism (`L-GRR`, `L-SUE`, `L-OUE`, `L-SOUE`,
/// `L-OSUE`, `L-BLH`, `L-OLH`).
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_mechanism_new_longitudinal(
    id: *const c_char,
    k: usize,
    eps_inf: f64,
    eps_1: f64,
    out: *mut *mut LdpfoMechanism,
) -> LdpfoStatus {
    guard(|| {
        let id = tri!(parse_id(id));
        new_mechanism(MechanismSpec::longitudinal(id, k, eps_inf, eps_1), out)
    })
}

/// # Safety
/// `m` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_mechanism_free(m: *mut LdpfoMechanism) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Support probabilities used by the estimators.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_mechanism_params(
    m: *const LdpfoMechanism,
    p_star: *mut f64,
    q_star: *mut f64,
) -> LdpfoStatus {
    guard(|| {
        let m = deref!(m);
        let p = deref!(mut p_star);
        let q = deref!(mut q_star);
        *p = m.0.params().p_star;
        *q = m.0.params().q_star;
        LdpfoStatus::Ok
    })
}

#[no_mangle]
pub extern "C" fn ldpfo_reports_new() -> *mut LdpfoReports {
    Box::into_raw(Box::new(LdpfoReports(Vec::new())))
}

/// # Safety
/// `r` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_reports_free(r: *mut LdpfoReports) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Number of reports held; 0 for a null handle.
///
/// # Safety
/// `r` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_reports_len(r: *const LdpfoReports) -> usize {
    r.as_ref().map_or(0, |r| r.0.len())
}

/// Obfuscate `v` and append the report. Longitudinal mechanisms treat each
/// call as the first report of a new user.
///
/// # Safety
/// All pointers must be valid handles.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_client(
    m: *const LdpfoMechanism,
    v: usize,
    rng: *mut LdpfoRng,
    reports: *mut LdpfoReports,
) -> LdpfoStatus {
    ldpfo_client_batch(m, &v, 1, rng, reports)
}

/// Obfuscate `n` values in order, appending one report each. On failure
/// nothing is appended.
///
/// # Safety
/// `values` must point to `n` readable elements; other pointers must be
/// valid handles.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_client_batch(
    m: *const LdpfoMechanism,
    values: *const usize,
    n: usize,
    rng: *mut LdpfoRng,
    reports: *mut LdpfoReports,
) -> LdpfoStatus {
    guard(|| {
        let m = deref!(m);
        let rng = deref!(mut rng);
        let reports = deref!(mut reports);
        if n > 0 && values.is_null() {
            return fail(LdpfoStatus::NullPointer, "values is null");
        }
        let values = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(values, n)
        };
        let mut fresh = Vec::with_capacity(n);
        for &v in values {
            fresh.push(tri!(from_core(m.0.client(v, &mut rng.0))));
        }
        reports.0.extend(fresh);
        LdpfoStatus::Ok
    })
}

/// Estimate the distribution from `reports` into `out[0..out_len]`, where
/// `out_len` must equal the mechanism's `k`. `iterations` and
/// `final_error` may be null; for MI they are set to 0 and NaN.
///
/// # Safety
/// `out` must point to `out_len` writable doubles; other pointers must be
/// valid or, where noted, null.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_estimate(
    m: *const LdpfoMechanism,
    reports: *const LdpfoReports,
    estimator: LdpfoEstimator,
    max_iter: usize,
    tol: f64,
    out: *mut f64,
    out_len: usize,
    iterations: *mut usize,
    final_error: *mut f64,
) -> LdpfoStatus {
    guard(|| {
        let m = deref!(m);
        let reports = deref!(reports);
        if out.is_null() {
            return fail(LdpfoStatus::NullPointer, "out is null");
        }
        if out_len != m.0.k() {
            return fail(
                LdpfoStatus::BufferTooSmall,
                format!("out_len {out_len} != k {}", m.0.k()),
            );
        }
        if max_iter == 0 || !(tol >= 0.0 && tol.is_finite()) {
            return fail(
                LdpfoStatus::InvalidArgument,
                "max_iter must be >= 1 and tol finite and >= 0",
            );
        }
        let cfg = IbuConfig {
            max_iter,
            tol,
            ..IbuConfig::default()
        };
        let est = match estimator {
            LdpfoEstimator::Mi => Estimator::Mi,
            LdpfoEstimator::Ibu => Estimator::Ibu,
        };
        let result = tri!(from_core(estimate(&reports.0, &m.0, est, &cfg)));
        std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(result.distribution.probs());
        if let Some(it) = iterations.as_mut() {
            *it = result.iterations.unwrap_or(0);
        }
        if let Some(fe) = final_error.as_mut() {
            *fe = result.final_error.unwrap_or(f64::NAN);
        }
        LdpfoStatus::Ok
    })
}

/// Serialize all reports as a JSON array of tagged objects. Release the
/// string with [`ldpfo_string_free`].
///
/// # Safety
/// `reports` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_reports_to_json(
    reports: *const LdpfoReports,
    out: *mut *mut c_char,
) -> LdpfoStatus {
    guard(|| {
        let reports = deref!(reports);
        match serde_json::to_string(&reports.0) {
            Ok(s) => write_string(s, out),
            Err(e) => fail(LdpfoStatus::Json, e.to_string()),
        }
    })
}

/// Parse a JSON array produced by [`ldpfo_reports_to_json`] into a new
/// handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_reports_from_json(
    json: *const c_char,
    out: *mut *mut LdpfoReports,
) -> LdpfoStatus {
    guard(|| {
        let s = tri!(read_str(json));
        let out = deref!(mut out);
        match serde_json::from_str::<Vec<Report>>(s) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(LdpfoReports(r)));
                LdpfoStatus::Ok
            }
            Err(e) => fail(LdpfoStatus::Json, e.to_string()),
        }
    })
}

/// JSON encoding of the report at `index`.
///
/// # Safety
/// `reports` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ldpfo_report_json(
    reports: *const LdpfoReports,
    index: usize,
    out: *mut *mut c_char,
) -> LdpfoStatus {
    guard(|| {
        let reports = deref!(reports);
        let Some(r) = reports.0.get(index) else {
            return fail(
                LdpfoStatus::InvalidArgument,
                format!("index {index} out of range"),
            );
        };
        match serde_json::to_string(r) {
            Ok(s) => write_string(s, out),
            Err(e) => fail(LdpfoStatus::Json, e.to_string()),
        }
    })
}
