use std::ffi::{CStr, CString};
use std::ptr;

use vibrotactile_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vt_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn simulate_run_and_read_back_report() {
    let mut ds = ptr::null_mut();
    let st = unsafe { vt_dataset_simulate_rod(20.0, 30, 3, &mut ds) };
    assert_eq!(st, VtStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { vt_dataset_len(ds) }, 30);

    let spec = CString::new("task = tap\nprotocol.k = 2\nmodel.grid = C=10,gamma=0.001,epsilon=0.1\n").unwrap();
    let mut rep = ptr::null_mut();
    let st = unsafe { vt_protocol_run(ds, spec.as_ptr(), &mut rep) };
    assert_eq!(st, VtStatus::Ok, "{}", last_error());

    let (mut mean, mut std) = (0.0, 0.0);
    assert_eq!(unsafe { vt_report_summary(rep, &mut mean, &mut std) }, VtStatus::Ok);
    let mut len = 0usize;
    assert_eq!(unsafe { vt_report_scores(rep, ptr::null_mut(), 0, &mut len) }, VtStatus::Ok);
    assert_eq!(len, 2);
    let mut buf = vec![0.0; len];
    assert_eq!(unsafe { vt_report_scores(rep, buf.as_mut_ptr(), len, &mut len) }, VtStatus::Ok);
    assert_eq!(mean, (buf[0] + buf[1]) / 2.0);
    assert!(std >= 0.0);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { vt_report_json(rep, &mut json) }, VtStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"scores\""));
    unsafe {
        vt_string_free(json);
        vt_report_free(rep);
        vt_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_status_and_message() {
    let mut ds = ptr::null_mut();
    let missing = CString::new("/nonexistent/manifest.csv").unwrap();
    assert_eq!(unsafe { vt_dataset_read(missing.as_ptr(), &mut ds) }, VtStatus::Data);
    assert!(last_error().contains("nonexistent"));
    assert!(ds.is_null());

    assert_eq!(
        unsafe { vt_dataset_read(ptr::null(), &mut ds) },
        VtStatus::NullOrInvalidString
    );
    assert_eq!(unsafe { vt_dataset_simulate_rod(20.0, 0, 1, &mut ds) }, VtStatus::Usage);

    let st = unsafe { vt_dataset_simulate_rod(20.0, 12, 1, &mut ds) };
    assert_eq!(st, VtStatus::Ok);
    assert!(last_error().is_empty());
    let bad = CString::new("protocol.kk = 1").unwrap();
    let mut rep = ptr::null_mut();
    assert_eq!(unsafe { vt_protocol_run(ds, bad.as_ptr(), &mut rep) }, VtStatus::Usage);
    assert!(last_error().contains("protocol.kk"));
    let tiny = CString::new("protocol.k = 1\nprotocol.train_fraction = 0.3").unwrap();
    assert_eq!(unsafe { vt_protocol_run(ds, tiny.as_ptr(), &mut rep) }, VtStatus::Protocol);
    unsafe { vt_dataset_free(ds) };
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        vt_dataset_free(ptr::null_mut());
        vt_report_free(ptr::null_mut());
        vt_string_free(ptr::null_mut());
        assert_eq!(vt_dataset_len(ptr::null()), 0);
    }
    let v = unsafe { CStr::from_ptr(vt_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/vibrotactile.h")).unwrap();
    for f in [
        "vt_last_error",
        "vt_version",
        "vt_dataset_read",
        "vt_dataset_simulate_rod",
        "vt_dataset_len",
        "vt_dataset_free",
        "vt_protocol_run",
        "vt_report_summary",
        "vt_report_scores",
        "vt_report_json",
        "vt_report_free",
        "vt_string_free",
        "typedef struct VtDataset VtDataset",
        "VT_STATUS_PROTOCOL = 3",
    ] {
        assert!(h.contains(f), "header lacks {f}");
    }
}
