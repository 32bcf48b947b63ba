use std::ffi::{CStr, CString};
use std::ptr;

use kpzlab_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = kpz_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn runs_an_exact_experiment_and_returns_its_report() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(kpz_config_new(c("asep-invariance").as_ptr(), &mut cfg), KpzStatus::Ok);
        assert_eq!(kpz_config_set(cfg, c("n").as_ptr(), c("8").as_ptr()), KpzStatus::Ok);
        assert_eq!(kpz_config_set_seed(cfg, 9), KpzStatus::Ok);
        assert_eq!(kpz_config_set_threads(cfg, 2), KpzStatus::Ok);
        assert_eq!(kpz_config_set_out(cfg, c(dir.path().to_str().unwrap()).as_ptr()), KpzStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(kpz_run(cfg, &mut run), KpzStatus::Ok);
        assert_eq!(kpz_run_status(run), KpzStatus::Ok);
        let report = CStr::from_ptr(kpz_run_report_json(run)).to_str().unwrap();
        let doc: serde_json::Value = serde_json::from_str(report).unwrap();
        assert_eq!(doc["experiment"], "asep-invariance");
        assert_eq!(doc["seed"], 9);
        assert_eq!(doc["pass"], true);
        let run_dir = CStr::from_ptr(kpz_run_dir(run)).to_str().unwrap();
        assert!(std::path::Path::new(run_dir).join("manifest.json").exists());
        kpz_run_free(run);
        kpz_config_free(cfg);
    }
}

#[test]
fn bad_input_maps_to_error_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(kpz_config_new(c("no-such-experiment").as_ptr(), &mut cfg), KpzStatus::ConfigError);
        assert!(cfg.is_null());
        assert!(last_error().contains("no-such-experiment"));
        assert_eq!(kpz_config_new(ptr::null(), &mut cfg), KpzStatus::NullPointer);
        assert_eq!(kpz_config_new(c("asep-sim").as_ptr(), ptr::null_mut()), KpzStatus::NullPointer);

        assert_eq!(kpz_config_new(c("asep-sim").as_ptr(), &mut cfg), KpzStatus::Ok);
        assert_eq!(kpz_config_set(cfg, c("rho").as_ptr(), c("1.5").as_ptr()), KpzStatus::ConfigError);
        assert!(last_error().contains("rho"));
        assert_eq!(kpz_config_set(cfg, c("bogus").as_ptr(), c("1").as_ptr()), KpzStatus::ConfigError);
        let invalid = [0xffu8, 0];
        assert_eq!(kpz_config_set(cfg, invalid.as_ptr().cast(), c("1").as_ptr()), KpzStatus::InvalidUtf8);
        assert_eq!(kpz_config_set_seed(ptr::null_mut(), 1), KpzStatus::NullPointer);
        kpz_config_free(cfg);
        kpz_config_free(ptr::null_mut());
        kpz_run_free(ptr::null_mut());
        assert_eq!(kpz_run_status(ptr::null()), KpzStatus::NullPointer);
        assert!(kpz_run_report_json(ptr::null()).is_null());
    }
}

#[test]
fn kernels_match_their_limits() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(kpz_kernels_new(KpzShape::Bump, 0.1, &mut k), KpzStatus::Ok);
        let (mut cov, mut der, mut prim) = (0.0, 0.0, 0.0);
        assert_eq!(kpz_kernels_eval(k, 0.0, &mut cov, &mut der, &mut prim), KpzStatus::Ok);
        assert!(cov > 0.0);
        assert!(der.abs() <= 1e-10);
        assert!(prim.abs() <= 1e-12);
        assert_eq!(kpz_kernels_eval(k, 0.5, ptr::null_mut(), ptr::null_mut(), &mut prim), KpzStatus::Ok);
        assert!((prim - 0.5).abs() < 1e-6);
        assert_eq!(kpz_kernels_eval(k, f64::NAN, &mut cov, ptr::null_mut(), ptr::null_mut()), KpzStatus::InvalidArgument);
        kpz_kernels_free(k);

        assert_eq!(kpz_kernels_new(KpzShape::TriangleConvolved, -1.0, &mut k), KpzStatus::ConfigError);
    }
}

#[test]
fn header_declares_the_exports() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/kpzlab.h")).unwrap();
    for name in ["kpz_config_new", "kpz_config_set", "kpz_run", "kpz_run_report_json", "kpz_kernels_eval", "kpz_last_error", "KPZ_STATUS_PANIC"] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let version = unsafe { CStr::from_ptr(kpz_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
