use std::ffi::{CStr, CString};
use std::ptr;

use stgcnn_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(stgcnn_last_error()) }.to_string_lossy().into_owned()
}

fn new_model(seed: u64) -> *mut StgcnnModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { stgcnn_model_new(seed, &mut m) }, StgcnnStatus::Ok);
    assert!(!m.is_null());
    m
}

fn observed(n: usize) -> Vec<f64> {
    (0..n)
        .flat_map(|i| (0..8).flat_map(move |t| [0.4 * t as f64 + i as f64, 0.3 * i as f64 - 0.1 * t as f64]))
        .collect()
}

fn predict(m: *const StgcnnModel, obs: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; 12 * n * 5];
    let status = unsafe { stgcnn_predict(m, obs.as_ptr(), n, out.as_mut_ptr()) };
    assert_eq!(status, StgcnnStatus::Ok, "{}", last_error());
    out
}

#[test]
fn version_and_param_count() {
    let v = unsafe { CStr::from_ptr(stgcnn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    assert_eq!(stgcnn_default_param_count(), 7563);
    let m = new_model(0);
    unsafe {
        assert_eq!(stgcnn_model_param_count(m), 7563);
        assert_eq!(stgcnn_model_t_obs(m), 8);
        assert_eq!(stgcnn_model_t_pred(m), 12);
        stgcnn_model_free(m);
        assert_eq!(stgcnn_model_param_count(ptr::null()), 0);
        stgcnn_model_free(ptr::null_mut());
    }
}

#[test]
fn predict_is_deterministic_with_positive_sigmas() {
    let (a, b) = (new_model(3), new_model(3));
    let obs = observed(4);
    let pa = predict(a, &obs, 4);
    assert_eq!(pa, predict(b, &obs, 4));
    for row in pa.chunks(5) {
        assert!(row[2] > 0.0 && row[3] > 0.0 && row[4].abs() < 1.0);
        assert!(row.iter().all(|v| v.is_finite()));
    }
    let other = new_model(4);
    assert_ne!(pa, predict(other, &obs, 4));
    unsafe {
        stgcnn_model_free(a);
        stgcnn_model_free(b);
        stgcnn_model_free(other);
    }
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.ckpt").to_str().unwrap()).unwrap();
    let m = new_model(9);
    let mut loaded = ptr::null_mut();
    unsafe {
        assert_eq!(stgcnn_model_save(m, path.as_ptr()), StgcnnStatus::Ok);
        assert_eq!(stgcnn_model_load(path.as_ptr(), &mut loaded), StgcnnStatus::Ok);
    }
    let obs = observed(3);
    assert_eq!(predict(m, &obs, 3), predict(loaded, &obs, 3));
    unsafe {
        stgcnn_model_free(m);
        stgcnn_model_free(loaded);
    }
}

#[test]
fn load_failures_report_status_and_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = CString::new(dir.path().join("absent.ckpt").to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { stgcnn_model_load(missing.as_ptr(), &mut m) }, StgcnnStatus::Io);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let corrupt = dir.path().join("bad.ckpt");
    std::fs::write(&corrupt, b"not a checkpoint").unwrap();
    let corrupt = CString::new(corrupt.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { stgcnn_model_load(corrupt.as_ptr(), &mut m) }, StgcnnStatus::Checkpoint);
    assert!(last_error().contains("bad.ckpt"), "{}", last_error());
}

#[test]
fn null_arguments_are_rejected() {
    let m = new_model(0);
    let mut out = [0.0; 60];
    unsafe {
        assert_eq!(stgcnn_model_new(0, ptr::null_mut()), StgcnnStatus::NullPointer);
        assert_eq!(stgcnn_predict(ptr::null(), out.as_ptr(), 1, out.as_mut_ptr()), StgcnnStatus::NullPointer);
        assert!(last_error().contains("model"));
        assert_eq!(stgcnn_predict(m, ptr::null(), 1, out.as_mut_ptr()), StgcnnStatus::NullPointer);
        assert_eq!(stgcnn_predict(m, observed(1).as_ptr(), 1, ptr::null_mut()), StgcnnStatus::NullPointer);
        assert_eq!(stgcnn_predict(m, observed(1).as_ptr(), 0, out.as_mut_ptr()), StgcnnStatus::InvalidArgument);
        assert_eq!(stgcnn_model_load(ptr::null(), &mut ptr::null_mut()), StgcnnStatus::NullPointer);
        let mut nan = observed(1);
        nan[3] = f64::NAN;
        assert_eq!(stgcnn_predict(m, nan.as_ptr(), 1, out.as_mut_ptr()), StgcnnStatus::Numeric);
        stgcnn_model_free(m);
    }
}

#[test]
fn samples_are_seeded_and_centered_on_prediction() {
    let m = new_model(1);
    let obs = observed(2);
    let count = 2000;
    let draw = |seed| {
        let mut out = vec![0.0; count * 2 * 12 * 2];
        assert_eq!(unsafe { stgcnn_sample(m, obs.as_ptr(), 2, count, seed, out.as_mut_ptr()) }, StgcnnStatus::Ok);
        out
    };
    let s = draw(5);
    assert_eq!(s, draw(5));
    assert_ne!(s, draw(6));
    // first predicted step of pedestrian 0: sample mean near the mean
    let pred = predict(m, &obs, 2);
    let mean_x = (0..count).map(|k| s[k * 48]).sum::<f64>() / count as f64;
    assert!((mean_x - pred[0]).abs() < 5.0 * pred[2] / (count as f64).sqrt(), "{mean_x} vs {}", pred[0]);
    unsafe { stgcnn_model_free(m) };
}

#[test]
fn metrics_hand_cases() {
    // two pedestrians, two steps; offsets 1 m and 3 m everywhere
    let gt = [0.0; 8];
    let pred = [1.0, 0.0, 1.0, 0.0, 0.0, 3.0, 0.0, 3.0];
    let mut out = -1.0;
    unsafe {
        assert_eq!(stgcnn_ade(pred.as_ptr(), gt.as_ptr(), 2, 2, &mut out), StgcnnStatus::Ok);
        assert_eq!(out, 2.0);
        let only_first = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(stgcnn_fde(only_first.as_ptr(), gt.as_ptr(), 2, 2, &mut out), StgcnnStatus::Ok);
        assert_eq!(out, 0.0);
        assert_eq!(stgcnn_ade(pred.as_ptr(), gt.as_ptr(), 0, 2, &mut out), StgcnnStatus::InvalidArgument);
        assert_eq!(stgcnn_ade(pred.as_ptr(), gt.as_ptr(), 2, 2, ptr::null_mut()), StgcnnStatus::NullPointer);
    }
}

#[test]
fn kernel_weights() {
    let mut w = 0.0;
    unsafe {
        assert_eq!(stgcnn_kernel_weight(StgcnnKernel::L2, 0.0, 0.0, 0.0, 3.0, 4.0, &mut w), StgcnnStatus::Ok);
        assert_eq!(w, 5.0);
        assert_eq!(stgcnn_kernel_weight(StgcnnKernel::Sim, 0.0, 0.0, 0.0, 3.0, 4.0, &mut w), StgcnnStatus::Ok);
        assert_eq!(w, 0.2);
        assert_eq!(stgcnn_kernel_weight(StgcnnKernel::Sim, 0.0, 1.0, 1.0, 1.0, 1.0, &mut w), StgcnnStatus::Ok);
        assert_eq!(w, 0.0);
        assert_eq!(stgcnn_kernel_weight(StgcnnKernel::SimEps, 0.5, 0.0, 0.0, 3.0, 4.0, &mut w), StgcnnStatus::Ok);
        assert_eq!(w, 1.0 / 5.5);
        assert_eq!(stgcnn_kernel_weight(StgcnnKernel::Exp, 0.0, 0.0, 0.0, 1.0, 0.0, &mut w), StgcnnStatus::InvalidArgument);
        assert!(last_error().contains("sigma"));
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/stgcnn.h")).unwrap();
    for name in [
        "stgcnn_last_error",
        "stgcnn_version",
        "stgcnn_default_param_count",
        "stgcnn_model_new",
        "stgcnn_model_load",
        "stgcnn_model_save",
        "stgcnn_model_free",
        "stgcnn_model_param_count",
        "stgcnn_predict",
        "stgcnn_sample",
        "stgcnn_ade",
        "stgcnn_fde",
        "stgcnn_kernel_weight",
        "typedef struct StgcnnModel StgcnnModel",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/stgcnn.h");
    match std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", "-std=c99", "-Wall", "-Werror", header]).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler available; skipped"),
    }
}
