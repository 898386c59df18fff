//! C ABI over `keydist` bundles.
//!
//! Every call returns a [`KdStatus`]; on failure the message is available from
//! [`kd_last_error_message`] on the same thread. Strings handed out by the library must
//! be released with [`kd_string_free`], bundles with [`kd_bundle_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use keydist::bundle::{Bundle, BundleHandle, EstimatorKind};
use keydist::catalog::read_csv;
use keydist::join::InferenceMode;
use keydist::query::QuerySpec;
use keydist::Error;

/// Use exact per-table distributions instead of the trained models.
pub const KD_EXACT: u32 = 1;
/// Count-based instead of selectivity-based inference (inner equi-joins only).
pub const KD_COUNT_BASED: u32 = 2;

/// Status codes; 2-5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdStatus {
    Ok = 0,
    /// Null pointer or non-UTF-8 string.
    InvalidArgument = 1,
    Usage = 2,
    Data = 3,
    Integrity = 4,
    Resource = 5,
    /// The library panicked; the handle is still safe to free.
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KdEstimate {
    pub cardinality: f64,
    pub selectivity: f64,
    /// Size of the unfiltered join.
    pub schema_card: f64,
    /// The unfiltered join is empty and the estimate is 0.
    pub zero_join: bool,
}

/// Opaque bundle handle. Safe to share across threads; updates swap atomically.
pub struct KdBundle {
    inner: BundleHandle,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(KdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => KdStatus::Usage,
            4 => KdStatus::Integrity,
            5 => KdStatus::Resource,
            _ => KdStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(what: &str) -> Failure {
    Failure(KdStatus::InvalidArgument, format!("{what} is null or not UTF-8"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            KdStatus::Ok
        }
        Ok(Err(Failure(s, m))) => {
            set_error(&m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            KdStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(what))
}

unsafe fn bundle_arg<'a>(b: *const KdBundle) -> Result<&'a KdBundle, Failure> {
    b.as_ref().ok_or_else(|| invalid("bundle"))
}

fn kind_mode(flags: u32) -> (EstimatorKind, InferenceMode) {
    let kind = if flags & KD_EXACT != 0 { EstimatorKind::Exact } else { EstimatorKind::Learned };
    let mode = if flags & KD_COUNT_BASED != 0 { InferenceMode::CountBased } else { InferenceMode::Selectivity };
    (kind, mode)
}

fn hand_out(s: String, out: *mut *mut c_char) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|e| Failure(KdStatus::Data, e.to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn kd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a successful call.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn kd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a bundle file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kd_bundle_load(path: *const c_char, out: *mut *mut KdBundle) -> KdStatus {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let b = Bundle::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(KdBundle { inner: BundleHandle::new(b) }));
        Ok(())
    })
}

/// Releases a bundle; null is ignored.
///
/// # Safety
/// `b` must come from [`kd_bundle_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kd_bundle_free(b: *mut KdBundle) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Writes the current state of the bundle to `path`.
///
/// # Safety
/// `b` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kd_bundle_save(b: *const KdBundle, path: *const c_char) -> KdStatus {
    guard(|| {
        let b = bundle_arg(b)?;
        let path = str_arg(path, "path")?;
        b.inner.snapshot().save(Path::new(path))?;
        Ok(())
    })
}

/// Table names as a JSON array, to be freed with [`kd_string_free`].
///
/// # Safety
/// `b` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kd_bundle_tables_json(b: *const KdBundle, out: *mut *mut c_char) -> KdStatus {
    guard(|| {
        let b = bundle_arg(b)?;
        if out.is_null() {
            return Err(invalid("out"));
        }
        hand_out(serde_json::to_string(&b.inner.snapshot().table_names()).unwrap(), out)
    })
}

/// Estimates one query given as JSON (`{"tables": [...], "join_op": "=", ...}`).
/// `flags` combines [`KD_EXACT`] and [`KD_COUNT_BASED`].
///
/// # Safety
/// `b` must be a live handle, `query_json` a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn kd_estimate(
    b: *const KdBundle,
    query_json: *const c_char,
    flags: u32,
    out: *mut KdEstimate,
) -> KdStatus {
    guard(|| {
        let b = bundle_arg(b)?;
        let q = QuerySpec::parse(str_arg(query_json, "query_json")?)?;
        if out.is_null() {
            return Err(invalid("out"));
        }
        let (kind, mode) = kind_mode(flags);
        let e = b.inner.snapshot().estimate(&q, kind, mode)?;
        *out = KdEstimate {
            cardinality: e.cardinality,
            selectivity: e.selectivity,
            schema_card: e.schema_card,
            zero_join: e.zero_join,
        };
        Ok(())
    })
}

/// Aligned key domain and per-table vectors of a query as JSON, to be freed with
/// [`kd_string_free`].
///
/// # Safety
/// As for [`kd_estimate`]; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kd_distributions_json(
    b: *const KdBundle,
    query_json: *const c_char,
    flags: u32,
    out: *mut *mut c_char,
) -> KdStatus {
    guard(|| {
        let b = bundle_arg(b)?;
        let q = QuerySpec::parse(str_arg(query_json, "query_json")?)?;
        if out.is_null() {
            return Err(invalid("out"));
        }
        let v = b.inner.snapshot().distributions(&q, kind_mode(flags).0)?;
        hand_out(v.to_string(), out)
    })
}

/// Appends the rows of a CSV file to `table`, retrains that table only and swaps the
/// result in. Concurrent readers keep the previous state until the swap.
///
/// # Safety
/// `b` must be a live handle; `table` and `csv_path` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn kd_update_table(
    b: *const KdBundle,
    table: *const c_char,
    csv_path: *const c_char,
) -> KdStatus {
    guard(|| {
        let b = bundle_arg(b)?;
        let table = str_arg(table, "table")?;
        let mut raw = read_csv(Path::new(str_arg(csv_path, "csv_path")?), b',')?;
        raw.name = table.to_string();
        b.inner.update_table(table, &raw)?;
        Ok(())
    })
}

/// Q-error of an estimate, both sides floored at 1.
#[no_mangle]
pub extern "C" fn kd_qerror(estimate: f64, actual: f64) -> f64 {
    keydist::eval::qerror(estimate, actual)
}

/// Frees a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
