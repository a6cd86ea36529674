use std::ffi::c_char;
use std::ptr;

use cloudorbit_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let len = unsafe { co_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..len.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn round_trip_through_handles() {
    unsafe {
        let data = [1.0, 0.0, 2.0, 0.0, 1.0, -1.0];
        let mut x = ptr::null_mut();
        assert_eq!(co_cloud_new(2, 3, data.as_ptr(), &mut x), CoStatus::CoOk);
        let (mut d, mut k) = (0, 0);
        assert_eq!(co_cloud_dims(x, &mut d, &mut k), CoStatus::CoOk);
        assert_eq!((d, k), (2, 3));
        let mut back = [0.0; 6];
        assert_eq!(co_cloud_copy_data(x, back.as_mut_ptr(), 6), CoStatus::CoOk);
        assert_eq!(back, data);
        assert_eq!(co_cloud_copy_data(x, back.as_mut_ptr(), 5), CoStatus::CoErrBufferTooSmall);
        assert!(last_error().contains("6"));

        let mut batch = ptr::null_mut();
        assert_eq!(co_batch_sample(x, 0.0, 30, 1, 2, &mut batch), CoStatus::CoOk);
        let mut report = ptr::null_mut();
        assert_eq!(co_estimate(batch, false, 0.0, &mut report), CoStatus::CoOk);
        let mut sigma = -1.0;
        assert_eq!(co_report_sigma(report, &mut sigma), CoStatus::CoOk);
        assert!(sigma.abs() < 1e-6);
        let mut gap = 0.0;
        assert_eq!(co_report_eigengap(report, &mut gap), CoStatus::CoOk);
        assert!(gap > 0.0);
        let mut xhat = ptr::null_mut();
        assert_eq!(co_report_cloud(report, &mut xhat), CoStatus::CoOk);
        let mut rho = -1.0;
        assert_eq!(co_procrustes_distance(x, xhat, &mut rho), CoStatus::CoOk);
        assert!(rho < 1e-7);

        co_cloud_free(xhat);
        co_report_free(report);
        co_batch_free(batch);
        co_cloud_free(x);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut x = ptr::null_mut();
        assert_eq!(co_cloud_sample(3, 2, 0, 0, true, &mut x), CoStatus::CoErrDimension);
        assert!(x.is_null());
        assert!(last_error().contains("k >= d"));
        assert_eq!(co_cloud_sample(2, 3, 0, 0, true, ptr::null_mut()), CoStatus::CoErrNullPointer);
        assert_eq!(co_cloud_new(2, 3, ptr::null(), &mut x), CoStatus::CoErrNullPointer);
        let mut out = 0.0;
        assert_eq!(co_procrustes_distance(ptr::null(), ptr::null(), &mut out), CoStatus::CoErrNullPointer);
        assert_eq!(co_delta_l_bound(2, 1, 0.1, &mut out), CoStatus::CoErrArgument);
        assert_eq!(co_sign_test_error(1.0, 0.0, &mut out), CoStatus::CoErrArgument);

        assert_eq!(co_cloud_sample(2, 3, 0, 0, true, &mut x), CoStatus::CoOk);
        assert_eq!(last_error(), "");
        let mut batch = ptr::null_mut();
        assert_eq!(co_batch_sample(x, -1.0, 3, 0, 0, &mut batch), CoStatus::CoErrArgument);
        assert_eq!(co_batch_sample(x, 1.0, 0, 0, 0, &mut batch), CoStatus::CoErrArgument);
        co_cloud_free(x);
    }
}

#[test]
fn bounds_match_library() {
    unsafe {
        let (mut v, mut ok) = (0.0, false);
        assert_eq!(co_tu_lipschitz_bound(1.0, 1.0, &mut v, &mut ok), CoStatus::CoOk);
        assert!(ok && (v - 1.098_684_113_467_81).abs() < 1e-14);
        assert_eq!(co_gram_diff_bound(2.0, 0.5, &mut v, &mut ok), CoStatus::CoOk);
        assert!(ok && v == 2.25);
        assert_eq!(co_gram_diff_bound(2.0, 0.51, &mut v, &mut ok), CoStatus::CoOk);
        assert!(!ok && v.is_nan());
        assert_eq!(
            co_concentration_bound(2, 10, 1000, 1.0, 1.0, 0.1, &mut v, &mut ok),
            CoStatus::CoOk
        );
        assert!(ok && v.is_finite() && v > 0.0);
        let mut p = 0.0;
        assert_eq!(co_sign_test_error(1.0, 1.0, &mut p), CoStatus::CoOk);
        assert!((p - 0.158_655_3).abs() < 1e-7);
        assert_eq!(co_delta_l_bound(3, 2, 0.1, &mut p), CoStatus::CoOk);
        assert!((p - 4.32).abs() < 1e-12);
        assert!((co_expected_gram_mse(2, 2, 1, 1.0, 1.0) - 15.0).abs() < 1e-12);
    }
}

#[test]
fn error_message_truncates_safely() {
    unsafe {
        let mut x = ptr::null_mut();
        co_cloud_sample(0, 0, 0, 0, true, &mut x);
        let mut small = [1 as c_char; 4];
        let len = co_last_error_message(small.as_mut_ptr(), small.len());
        assert!(len > 3);
        assert_eq!(small[3], 0);
        assert_eq!(co_last_error_message(ptr::null_mut(), 0), len);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/cloudorbit.h");
    let source = include_str!("../src/lib.rs");
    let mut count = 0;
    for line in source.lines() {
        if let Some(rest) = line.split("extern \"C\" fn ").nth(1) {
            let name = rest.split('(').next().unwrap();
            assert!(header.contains(&format!("{name}(")), "{name} missing from header");
            count += 1;
        }
    }
    assert!(count >= 20);
}

#[test]
fn c_program_links_against_cdylib() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libcloudorbit_ffi.so");
    if !cfg!(target_os = "linux") || !lib.exists() {
        eprintln!("skipping: shared library not found at {}", lib.display());
        return;
    }
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = std::process::Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(profile_dir)
        .arg("-lcloudorbit_ffi")
        .arg("-lm")
        .arg(format!("-Wl,-rpath,{}", profile_dir.display()))
        .arg("-o")
        .arg(&bin)
        .status();
    let Ok(status) = status else {
        eprintln!("skipping: no C compiler");
        return;
    };
    assert!(status.success(), "C compilation failed");
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
