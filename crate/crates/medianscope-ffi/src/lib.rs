//! C bindings for medianscope: providers, truncated balls, nonterminating
//! ultrafilters and the experiment runner.
//!
//! Every fallible call returns an [`MsStatus`]; the message of the last
//! failure on the calling thread is available from [`ms_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use medianscope::boundary::{check_nonterminating, construct_nonterminating, BoundaryError, NtCheck, UltrafilterApprox};
use medianscope::complex::{CubeBall, Provider};
use medianscope::harness::{self, HarnessError, ProviderKind};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Module = 4,
    Mismatch = 5,
    OutOfRange = 6,
    /// No nonterminating ultrafilter exists (finite complex).
    Bounded = 7,
    Panic = 8,
}

/// A complex provider (tree, grid, RAAG, product or explicit complex).
pub struct MsProvider {
    inner: Provider,
}

/// A truncated ball of a provider.
pub struct MsBall {
    inner: CubeBall,
}

/// An ultrafilter approximation over the hyperplanes of one ball.
pub struct MsUltrafilter {
    inner: UltrafilterApprox,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: MsStatus, msg: impl ToString) -> MsStatus {
    let msg = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
    status
}

fn guard(f: impl FnOnce() -> MsStatus) -> MsStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(MsStatus::Panic, "panic inside medianscope"))
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, MsStatus> {
    if s.is_null() {
        return Err(fail(MsStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(s).to_str().map_err(|e| fail(MsStatus::InvalidUtf8, e))
}

fn harness_status(e: &HarnessError) -> MsStatus {
    match e {
        HarnessError::Config(_) => MsStatus::Config,
        HarnessError::Mismatch(_) => MsStatus::Mismatch,
        HarnessError::Module(_) | HarnessError::Io(_) => MsStatus::Module,
    }
}

macro_rules! deref {
    ($p:expr) => {
        match $p.as_ref() {
            Some(x) => x,
            None => return fail(MsStatus::NullPointer, concat!("null ", stringify!($p))),
        }
    };
}

macro_rules! out {
    ($p:expr, $v:expr) => {{
        if $p.is_null() {
            return fail(MsStatus::NullPointer, concat!("null ", stringify!($p)));
        }
        *$p = $v;
        MsStatus::Ok
    }};
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a provider block such as `{"kind": "tree", "valence": 3}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer to write to.
/// The handle written to `out` must be released with [`ms_provider_free`].
#[no_mangle]
pub unsafe extern "C" fn ms_provider_from_json(json: *const c_char, out: *mut *mut MsProvider) -> MsStatus {
    guard(|| {
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let kind: ProviderKind = match serde_json::from_str(text) {
            Ok(k) => k,
            Err(e) => return fail(MsStatus::Config, e),
        };
        match kind.provider() {
            Ok(p) => out!(out, Box::into_raw(Box::new(MsProvider { inner: p }))),
            Err(e) => fail(harness_status(&e), e),
        }
    })
}

/// # Safety
/// `p` must be NULL or a handle from [`ms_provider_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_provider_free(p: *mut MsProvider) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Builds the ball whose trusted region has radius `inner_radius`. Finite
/// explicit complexes are built whole and `inner_radius` is ignored.
///
/// # Safety
/// `p` must be a live provider handle and `out` a valid pointer to write to.
/// The handle written to `out` must be released with [`ms_ball_free`].
#[no_mangle]
pub unsafe extern "C" fn ms_ball_build(p: *const MsProvider, inner_radius: u32, out: *mut *mut MsBall) -> MsStatus {
    guard(|| {
        let p = &deref!(p).inner;
        let ball = if p.is_finite() { CubeBall::complete(p) } else { CubeBall::with_inner_radius(p, inner_radius) };
        match ball {
            Ok(b) => out!(out, Box::into_raw(Box::new(MsBall { inner: b }))),
            Err(e) => fail(MsStatus::Module, e),
        }
    })
}

/// # Safety
/// `b` must be NULL or a handle from [`ms_ball_build`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_ball_free(b: *mut MsBall) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Number of vertices, or 0 for NULL.
///
/// # Safety
/// `b` must be NULL or a live ball handle.
#[no_mangle]
pub unsafe extern "C" fn ms_ball_vertex_count(b: *const MsBall) -> usize {
    b.as_ref().map_or(0, |b| b.inner.len())
}

/// Number of hyperplanes, or 0 for NULL.
///
/// # Safety
/// `b` must be NULL or a live ball handle.
#[no_mangle]
pub unsafe extern "C" fn ms_ball_hyperplane_count(b: *const MsBall) -> usize {
    b.as_ref().map_or(0, |b| b.inner.num_hyperplanes())
}

/// Index of the vertex called `name` (`e`, `ab`, `(1,-2)`, `(a|bc)`...).
///
/// # Safety
/// `b` must be a live ball handle, `name` a NUL-terminated string and `out`
/// a valid pointer to write to.
#[no_mangle]
pub unsafe extern "C" fn ms_ball_lookup(b: *const MsBall, name: *const c_char, out: *mut usize) -> MsStatus {
    guard(|| {
        let b = &deref!(b).inner;
        let name = match read_str(name) {
            Ok(n) => n,
            Err(s) => return s,
        };
        match b.lookup(name) {
            Ok(v) => out!(out, v),
            Err(e) => fail(MsStatus::OutOfRange, e),
        }
    })
}

/// Name of vertex `v` as a new string; free it with [`ms_string_free`].
/// Returns NULL if `b` is NULL or `v` is out of range.
///
/// # Safety
/// `b` must be NULL or a live ball handle.
#[no_mangle]
pub unsafe extern "C" fn ms_ball_vertex_name(b: *const MsBall, v: usize) -> *mut c_char {
    match b.as_ref() {
        Some(b) if v < b.inner.len() => CString::new(b.inner.name(v)).map_or(ptr::null_mut(), CString::into_raw),
        _ => ptr::null_mut(),
    }
}

fn check_vertices(b: &CubeBall, vs: &[usize]) -> Result<(), MsStatus> {
    match vs.iter().find(|&&v| v >= b.len()) {
        Some(v) => Err(fail(MsStatus::OutOfRange, format!("vertex {v} out of range"))),
        None => Ok(()),
    }
}

/// Number of hyperplanes separating two trusted vertices.
///
/// # Safety
/// `b` must be a live ball handle and `out` a valid pointer to write to.
#[no_mangle]
pub unsafe extern "C" fn ms_ball_distance(b: *const MsBall, v: usize, w: usize, out: *mut usize) -> MsStatus {
    guard(|| {
        let b = &deref!(b).inner;
        if let Err(s) = check_vertices(b, &[v, w]) {
            return s;
        }
        match b.separators(v, w) {
            Ok(s) => out!(out, s.len()),
            Err(e) => fail(MsStatus::OutOfRange, e),
        }
    })
}

/// Median of three trusted vertices.
///
/// # Safety
/// `b` must be a live ball handle and `out` a valid pointer to write to.
#[no_mangle]
pub unsafe extern "C" fn ms_ball_median(b: *const MsBall, u: usize, v: usize, w: usize, out: *mut usize) -> MsStatus {
    guard(|| {
        let b = &deref!(b).inner;
        if let Err(s) = check_vertices(b, &[u, v, w]) {
            return s;
        }
        match b.median(u, v, w) {
            Ok(m) => out!(out, m),
            Err(e) => fail(MsStatus::OutOfRange, e),
        }
    })
}

/// Greedy nonterminating ultrafilter of the ball. Returns `Bounded` on finite
/// complexes.
///
/// # Safety
/// `b` must be a live ball handle and `out` a valid pointer to write to. The
/// handle written to `out` must be released with [`ms_ultrafilter_free`] and
/// only used with the ball it was built from.
#[no_mangle]
pub unsafe extern "C" fn ms_construct_nonterminating(b: *const MsBall, out: *mut *mut MsUltrafilter) -> MsStatus {
    guard(|| {
        let b = &deref!(b).inner;
        match construct_nonterminating(b) {
            Ok(u) => out!(out, Box::into_raw(Box::new(MsUltrafilter { inner: u }))),
            Err(e @ BoundaryError::Bounded) => fail(MsStatus::Bounded, e),
            Err(e) => fail(MsStatus::Module, e),
        }
    })
}

/// # Safety
/// `u` must be NULL or a handle from [`ms_construct_nonterminating`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_ultrafilter_free(u: *mut MsUltrafilter) {
    if !u.is_null() {
        drop(Box::from_raw(u));
    }
}

/// Orientation of hyperplane `h`: `+1` or `-1`, or 0 if out of range.
///
/// # Safety
/// `u` must be NULL or a live ultrafilter handle.
#[no_mangle]
pub unsafe extern "C" fn ms_ultrafilter_orientation(u: *const MsUltrafilter, h: usize) -> i32 {
    match u.as_ref().and_then(|u| u.inner.orientation.get(h)) {
        Some(medianscope::complex::Orientation::Plus) => 1,
        Some(medianscope::complex::Orientation::Minus) => -1,
        None => 0,
    }
}

/// Writes whether every chosen halfspace within `depth` strictly contains
/// another chosen one.
///
/// # Safety
/// `b` and `u` must be live handles, `u` built from `b`, and `pass` a valid
/// pointer to write to.
#[no_mangle]
pub unsafe extern "C" fn ms_check_nonterminating(
    b: *const MsBall,
    u: *const MsUltrafilter,
    depth: u32,
    pass: *mut bool,
) -> MsStatus {
    guard(|| {
        let b = &deref!(b).inner;
        let u = &deref!(u).inner;
        if u.orientation.len() != b.num_hyperplanes() {
            return fail(MsStatus::OutOfRange, "ultrafilter belongs to another ball");
        }
        out!(pass, matches!(check_nonterminating(b, u, depth), NtCheck::Pass { .. }))
    })
}

/// Runs an experiment spec (JSON) and writes its CSV to `csv_out`. `operation`
/// may be NULL when the spec names its own. On `Mismatch` the comparison CSV
/// is still written.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string, `operation` NULL or a
/// NUL-terminated string, and `csv_out` a valid pointer to write to. The
/// string written to `csv_out` must be released with [`ms_string_free`].
#[no_mangle]
pub unsafe extern "C" fn ms_run_experiment(
    spec_json: *const c_char,
    operation: *const c_char,
    csv_out: *mut *mut c_char,
) -> MsStatus {
    guard(|| {
        let text = match read_str(spec_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let op = if operation.is_null() {
            None
        } else {
            match read_str(operation) {
                Ok(o) => Some(o),
                Err(s) => return s,
            }
        };
        if csv_out.is_null() {
            return fail(MsStatus::NullPointer, "null csv_out");
        }
        let outcome = match harness::parse_spec(text).and_then(|s| harness::run_experiment(&s, op)) {
            Ok(o) => o,
            Err(e) => return fail(harness_status(&e), e),
        };
        let csv = CString::new(outcome.csv).unwrap_or_default();
        *csv_out = csv.into_raw();
        match outcome.mismatch {
            Some(m) => fail(MsStatus::Mismatch, m),
            None => MsStatus::Ok,
        }
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
