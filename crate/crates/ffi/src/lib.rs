//! C ABI over the `vibrotactile` crate.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free`. Every fallible call returns a [`VtStatus`];
//! on failure [`vt_last_error`] describes the problem for the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vibrotactile::harness::config::parse_kv;
use vibrotactile::harness::{run_protocol, ProtocolReport, ProtocolSpec};
use vibrotactile::model::io::read_dataset;
use vibrotactile::model::Dataset;
use vibrotactile::simulate::{generate_tap_dataset, SignalVariant, TapDatasetConfig};
use vibrotactile::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VtStatus {
    Ok = 0,
    /// Bad argument, configuration or usage.
    Usage = 1,
    /// Unreadable or invalid data.
    Data = 2,
    /// Protocol or solver failure.
    Protocol = 3,
    /// A required pointer was null or a string was not UTF-8.
    NullOrInvalidString = 4,
    /// A Rust panic was caught at the boundary.
    Panic = 5,
}

/// Opaque dataset handle.
pub struct VtDataset(Dataset);

/// Opaque protocol report handle.
pub struct VtReport(ProtocolReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> VtStatus {
    match vibrotactile::cli::exit_code(e) {
        1 => VtStatus::Usage,
        3 => VtStatus::Protocol,
        _ => VtStatus::Data,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), VtStatus>) -> VtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VtStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside vibrotactile");
            VtStatus::Panic
        }
    }
}

fn fail(e: Error) -> VtStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, VtStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(VtStatus::NullOrInvalidString);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not UTF-8"));
        VtStatus::NullOrInvalidString
    })
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, VtStatus> {
    p.as_mut().ok_or_else(|| {
        set_error(format!("{what} is null"));
        VtStatus::NullOrInvalidString
    })
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, VtStatus> {
    p.as_ref().ok_or_else(|| {
        set_error(format!("{what} is null"));
        VtStatus::NullOrInvalidString
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn vt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reads a dataset from a manifest path.
///
/// # Safety
/// `manifest` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_dataset_read(manifest: *const c_char, out: *mut *mut VtDataset) -> VtStatus {
    guard(|| {
        let path = str_arg(manifest, "manifest")?;
        let out = out_arg(out, "out")?;
        let ds = read_dataset(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(VtDataset(ds)));
        Ok(())
    })
}

/// Generates a synthetic rod-tap dataset with a two-finger event skin.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vt_dataset_simulate_rod(
    length_cm: f64,
    n_taps: usize,
    seed: u64,
    out: *mut *mut VtDataset,
) -> VtStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg = TapDatasetConfig::rod(length_cm, SignalVariant::Spikes, n_taps, seed).map_err(fail)?;
        let ds = generate_tap_dataset(&cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(VtDataset(ds)));
        Ok(())
    })
}

/// Number of recordings; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vt_dataset_len(ds: *const VtDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `ds` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn vt_dataset_free(ds: *mut VtDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Runs the evaluation protocol described by key-value `spec` text (the
/// same keys as a protocol spec file).
///
/// # Safety
/// `ds` must be a live handle, `spec` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vt_protocol_run(
    ds: *const VtDataset,
    spec: *const c_char,
    out: *mut *mut VtReport,
) -> VtStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        let text = str_arg(spec, "spec")?;
        let out = out_arg(out, "out")?;
        let kv = parse_kv(text, "<spec>").map_err(fail)?;
        let spec = ProtocolSpec::from_kv(kv).map_err(fail)?;
        let rep = run_protocol(&spec, &ds.0).map_err(fail)?;
        *out = Box::into_raw(Box::new(VtReport(rep)));
        Ok(())
    })
}

/// Mean and standard deviation of the per-repeat scores.
///
/// # Safety
/// `r` must be a live handle; `mean` and `std` writable.
#[no_mangle]
pub unsafe extern "C" fn vt_report_summary(r: *const VtReport, mean: *mut f64, std: *mut f64) -> VtStatus {
    guard(|| {
        let r = handle(r, "report")?;
        *out_arg(mean, "mean")? = r.0.mean;
        *out_arg(std, "std")? = r.0.std;
        Ok(())
    })
}

/// Copies up to `cap` per-repeat scores into `buf`; writes the total
/// count to `len`. Pass `buf = NULL` to query the count.
///
/// # Safety
/// `r` must be a live handle; `buf` null or valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn vt_report_scores(r: *const VtReport, buf: *mut f64, cap: usize, len: *mut usize) -> VtStatus {
    guard(|| {
        let r = handle(r, "report")?;
        let scores = &r.0.scores;
        *out_arg(len, "len")? = scores.len();
        if !buf.is_null() {
            let n = cap.min(scores.len());
            ptr::copy_nonoverlapping(scores.as_ptr(), buf, n);
        }
        Ok(())
    })
}

/// Full report as JSON; release with [`vt_string_free`].
///
/// # Safety
/// `r` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vt_report_json(r: *const VtReport, out: *mut *mut c_char) -> VtStatus {
    guard(|| {
        let r = handle(r, "report")?;
        let out = out_arg(out, "out")?;
        let json = r.0.to_json().map_err(fail)?;
        *out = CString::new(json).map_err(|e| fail(Error::InvalidData(e.to_string())))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn vt_report_free(r: *mut VtReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not freed before.
#[no_mangle]
pub unsafe extern "C" fn vt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
