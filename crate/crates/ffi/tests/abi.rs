use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use a2f_ffi::*;

fn last_error() -> String {
    let p = a2f_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn create(variant: &str, scale: u32) -> *mut A2fModel {
    let v = CString::new(variant).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { a2f_model_create(v.as_ptr(), scale, 7, &mut m) }, A2fStatus::Ok);
    assert!(!m.is_null());
    m
}

fn pattern(w: usize, h: usize, salt: usize) -> Vec<u8> {
    (0..w * h * 3).map(|i| ((i * 37 + salt * 11) % 251) as u8).collect()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(a2f_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn model_accounting_through_handles() {
    let m = create("SD", 4);
    let (mut params, mut adds, mut scale, mut blocks) = (0u64, 0u64, 0u32, 0u32);
    unsafe {
        assert_eq!(a2f_model_param_count(m, &mut params), A2fStatus::Ok);
        assert_eq!(a2f_model_multiadds(m, 1280, 720, &mut adds), A2fStatus::Ok);
        assert_eq!(a2f_model_scale(m, &mut scale), A2fStatus::Ok);
        assert_eq!(a2f_model_block_count(m, &mut blocks), A2fStatus::Ok);
    }
    assert_eq!(params, 318_536);
    assert!((adds as f64 / 18.2e9 - 1.0).abs() < 0.02);
    assert_eq!((scale, blocks), (4, 8));

    let mut lambdas = vec![0f32; 24];
    assert_eq!(unsafe { a2f_model_lambdas(m, lambdas.as_mut_ptr(), 24) }, A2fStatus::Ok);
    assert!(lambdas.iter().all(|&l| l == 1.0));
    assert_eq!(
        unsafe { a2f_model_lambdas(m, lambdas.as_mut_ptr(), 23) },
        A2fStatus::InvalidArgument
    );
    assert!(last_error().contains("need 24"));
    unsafe { a2f_model_free(m) };
}

#[test]
fn upscale_save_load_round_trip() {
    let m = create("S", 2);
    let (w, h) = (9, 7);
    let input = pattern(w, h, 1);
    let mut a = vec![0u8; w * h * 12];
    let mut b = vec![0u8; w * h * 12];
    unsafe {
        assert_eq!(a2f_model_upscale_rgb8(m, input.as_ptr(), w, h, a.as_mut_ptr(), a.len()), A2fStatus::Ok);
        assert_eq!(
            a2f_model_upscale_rgb8(m, input.as_ptr(), w, h, b.as_mut_ptr(), b.len() - 1),
            A2fStatus::InvalidArgument
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.a2f").to_str().unwrap()).unwrap();
    let mut loaded = ptr::null_mut();
    unsafe {
        assert_eq!(a2f_model_save(m, path.as_ptr()), A2fStatus::Ok);
        assert_eq!(a2f_model_load(path.as_ptr(), &mut loaded), A2fStatus::Ok);
        assert_eq!(a2f_model_upscale_rgb8(loaded, input.as_ptr(), w, h, b.as_mut_ptr(), b.len()), A2fStatus::Ok);
        a2f_model_free(loaded);
        a2f_model_free(m);
    }
    assert_eq!(a, b);
    assert!(a2f_last_error().is_null());
}

#[test]
fn errors_map_to_status_codes() {
    let mut m = ptr::null_mut();
    let bad = CString::new("XL").unwrap();
    let sd = CString::new("SD").unwrap();
    let missing = CString::new("/nonexistent/model.a2f").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let junk_path = dir.path().join("junk.a2f");
    std::fs::write(&junk_path, b"not a checkpoint at all").unwrap();
    let junk = CString::new(junk_path.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(a2f_model_create(bad.as_ptr(), 2, 0, &mut m), A2fStatus::InvalidArgument);
        assert!(last_error().contains("unknown variant"));
        assert_eq!(a2f_model_create(sd.as_ptr(), 5, 0, &mut m), A2fStatus::InvalidArgument);
        assert_eq!(a2f_model_create(ptr::null(), 2, 0, &mut m), A2fStatus::NullPointer);
        assert_eq!(a2f_model_create(sd.as_ptr(), 2, 0, ptr::null_mut()), A2fStatus::NullPointer);
        assert_eq!(a2f_model_load(missing.as_ptr(), &mut m), A2fStatus::Io);
        assert_eq!(a2f_model_load(junk.as_ptr(), &mut m), A2fStatus::Format);
        let mut n = 0u64;
        assert_eq!(a2f_model_param_count(ptr::null(), &mut n), A2fStatus::NullPointer);
        a2f_model_free(ptr::null_mut());
    }
    assert!(m.is_null());
}

#[test]
fn metrics_on_rgb8() {
    let (w, h) = (24, 20);
    let a = pattern(w, h, 0);
    let b: Vec<u8> = a.iter().map(|&v| v.saturating_add(3)).collect();
    let (mut same, mut diff, mut s) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(a2f_psnr_y_rgb8(a.as_ptr(), a.as_ptr(), w, h, 2, &mut same), A2fStatus::Ok);
        assert_eq!(a2f_psnr_y_rgb8(a.as_ptr(), b.as_ptr(), w, h, 2, &mut diff), A2fStatus::Ok);
        assert_eq!(a2f_ssim_y_rgb8(a.as_ptr(), a.as_ptr(), w, h, 2, &mut s), A2fStatus::Ok);
        assert_eq!(a2f_ssim_y_rgb8(a.as_ptr(), a.as_ptr(), 12, 12, 2, &mut s), A2fStatus::Evaluation);
    }
    assert_eq!(same, 100.0);
    assert!(diff > 30.0 && diff < 100.0, "{diff}");
}

#[test]
fn header_is_generated_and_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/a2f.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["a2f_model_create", "a2f_model_upscale_rgb8", "a2f_last_error", "A2F_STATUS_SHAPE_MISMATCH"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", header])
        .status()
    else {
        eprintln!("no C compiler found; syntax check skipped");
        return;
    };
    assert!(status.success());
}
