//! Exercises the C surface exactly as a foreign caller would: raw
//! pointers, NUL-terminated strings, and status codes.

use curvtkg_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn write_toy_dataset(dir: &std::path::Path) {
    let quads = curvtkg::synth::tree_growth(12, 2, 8, 4);
    let write = |name: &str, lo: u32, hi: u32| {
        let rows: String = quads
            .iter()
            .filter(|q| q.t >= lo && q.t < hi)
            .map(|q| format!("{}\t{}\t{}\t{}\n", q.s, q.r, q.o, q.t))
            .collect();
        std::fs::write(dir.join(name), rows).unwrap();
    };
    write("train.txt", 0, 6);
    write("valid.txt", 6, 7);
    write("test.txt", 7, 8);
    std::fs::write(dir.join("stat.txt"), "12\t2\n").unwrap();
}

fn c_path(p: &std::path::Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(curvtkg_last_error()).to_string_lossy().into_owned() }
}

#[test]
fn version_is_a_valid_string() {
    let v = unsafe { CStr::from_ptr(curvtkg_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn full_round_trip_through_the_c_surface() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_dataset(dir.path());

    unsafe {
        let mut ds: *mut CurvtkgDataset = ptr::null_mut();
        let path = c_path(dir.path());
        assert_eq!(curvtkg_dataset_load(path.as_ptr(), 0, &mut ds), CurvtkgStatus::CurvtkgOk);

        let (mut e, mut r, mut t, mut f) = (0u64, 0u64, 0u64, 0u64);
        let mut khs = 0.0f64;
        assert_eq!(
            curvtkg_dataset_stats(ds, &mut e, &mut r, &mut t, &mut f, &mut khs),
            CurvtkgStatus::CurvtkgOk
        );
        assert_eq!((e, r, t), (12, 2, 8));
        assert!(f > 0 && khs == 1.0);

        let config = CString::new("epochs = 2\ndim = 8\nwindow = 4\nlr = 1e-2\n").unwrap();
        let mut model: *mut CurvtkgModel = ptr::null_mut();
        assert_eq!(
            curvtkg_model_train(ds, config.as_ptr(), 7, &mut model),
            CurvtkgStatus::CurvtkgOk
        );

        let ckpt = dir.path().join("model.bin");
        let ckpt_c = c_path(&ckpt);
        assert_eq!(curvtkg_model_save(model, ckpt_c.as_ptr()), CurvtkgStatus::CurvtkgOk);

        let mut reloaded: *mut CurvtkgModel = ptr::null_mut();
        assert_eq!(
            curvtkg_model_load(ckpt_c.as_ptr(), &mut reloaded),
            CurvtkgStatus::CurvtkgOk
        );

        // both copies must score and evaluate identically
        let mut metrics = [[0.0f64; 4]; 2];
        for (i, m) in [model, reloaded].into_iter().enumerate() {
            let [ref mut mrr, ref mut h1, ref mut h3, ref mut h10] = metrics[i];
            assert_eq!(
                curvtkg_model_evaluate(m, ds, 1, 0, mrr, h1, h3, h10),
                CurvtkgStatus::CurvtkgOk
            );
            assert!(*mrr > 0.0 && *mrr <= 1.0);
        }
        assert_eq!(metrics[0], metrics[1]);

        let mut scores = vec![0.0f64; 12];
        assert_eq!(
            curvtkg_model_score_objects(model, ds, 0, 0, 7, 0, scores.as_mut_ptr(), scores.len()),
            CurvtkgStatus::CurvtkgOk
        );
        let total: f64 = scores.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "scores sum to {total}");

        curvtkg_model_free(model);
        curvtkg_model_free(reloaded);
        curvtkg_dataset_free(ds);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut ds: *mut CurvtkgDataset = ptr::null_mut();
        let missing = CString::new("/nonexistent/curvtkg").unwrap();
        assert_eq!(
            curvtkg_dataset_load(missing.as_ptr(), 0, &mut ds),
            CurvtkgStatus::CurvtkgDataError
        );
        assert!(!last_error().is_empty());
        assert!(ds.is_null());

        assert_eq!(
            curvtkg_dataset_load(ptr::null(), 0, &mut ds),
            CurvtkgStatus::CurvtkgNullArgument
        );
        assert_eq!(
            curvtkg_dataset_stats(
                ptr::null(),
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut()
            ),
            CurvtkgStatus::CurvtkgNullArgument
        );
        let mut model: *mut CurvtkgModel = ptr::null_mut();
        assert_eq!(
            curvtkg_model_load(missing.as_ptr(), &mut model),
            CurvtkgStatus::CurvtkgDataError
        );

        // bad config keys are rejected before any training happens
        let dir = tempfile::tempdir().unwrap();
        write_toy_dataset(dir.path());
        let path = c_path(dir.path());
        assert_eq!(curvtkg_dataset_load(path.as_ptr(), 0, &mut ds), CurvtkgStatus::CurvtkgOk);
        let bad = CString::new("no_such_key = 1\n").unwrap();
        assert_eq!(
            curvtkg_model_train(ds, bad.as_ptr(), 0, &mut model),
            CurvtkgStatus::CurvtkgInvalidArgument
        );
        assert!(last_error().contains("no_such_key"));

        // wrong score buffer length is rejected
        let ok_cfg = CString::new("epochs = 0\ndim = 4\n").unwrap();
        assert_eq!(
            curvtkg_model_train(ds, ok_cfg.as_ptr(), 0, &mut model),
            CurvtkgStatus::CurvtkgOk
        );
        let mut short = vec![0.0f64; 3];
        assert_eq!(
            curvtkg_model_score_objects(model, ds, 0, 0, 7, 0, short.as_mut_ptr(), short.len()),
            CurvtkgStatus::CurvtkgInvalidArgument
        );

        curvtkg_model_free(model);
        curvtkg_dataset_free(ds);
    }
}
