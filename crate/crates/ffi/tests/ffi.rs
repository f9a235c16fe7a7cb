use std::ffi::{CStr, CString};
use std::ptr;

use cosmix_ffi::*;

fn last_error() -> String {
    let p = cosmix_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

/// Three well separated blocks of five documents over nine terms.
fn blocks() -> Vec<f64> {
    let mut v = vec![0.0; 15 * 9];
    for j in 0..15 {
        let b = j / 5;
        for t in 0..3 {
            v[j * 9 + b * 3 + t] = 1.0 + ((j + t) % 3) as f64;
        }
        v[j * 9 + (b * 3 + 4) % 9] = 0.5;
    }
    v
}

unsafe fn matrix() -> *mut CosmixMatrix {
    let v = blocks();
    let mut m = ptr::null_mut();
    assert_eq!(
        cosmix_matrix_from_dense(v.as_ptr(), 15, 9, CosmixWeighting::IdfWeighted, &mut m),
        CosmixStatus::Ok
    );
    m
}

#[test]
fn cosine_distance_and_errors() {
    let x = [1.0, 0.0];
    let y = [0.0, 2.0];
    let mut d = -1.0;
    unsafe {
        assert_eq!(cosmix_cosine_distance(x.as_ptr(), y.as_ptr(), 2, &mut d), CosmixStatus::Ok);
        assert_eq!(d, 1.0);
        assert_eq!(cosmix_cosine_distance(x.as_ptr(), x.as_ptr(), 2, &mut d), CosmixStatus::Ok);
        assert!(d.abs() < 1e-15);
        assert_eq!(cosmix_cosine_distance(ptr::null(), y.as_ptr(), 2, &mut d), CosmixStatus::NullPointer);
    }
    assert!(last_error().contains("null"));
    assert!(!unsafe { CStr::from_ptr(cosmix_version()) }.to_bytes().is_empty());
}

#[test]
fn solve_lambda_and_numerical_codes() {
    // two components, each document near one of them
    let d = [0.1, 0.9, 0.2, 0.8, 0.9, 0.1, 0.7, 0.3];
    let w = [0.5, 0.5];
    let mut lambda = 0.0;
    unsafe {
        assert_eq!(cosmix_solve_lambda(d.as_ptr(), 4, 2, w.as_ptr(), 0.05, &mut lambda), CosmixStatus::Ok);
        assert!(lambda > 0.0 && lambda.is_finite());
        // all distances tied: no finite root
        let tied = [0.5; 8];
        let s = cosmix_solve_lambda(tied.as_ptr(), 4, 2, w.as_ptr(), 0.05, &mut lambda);
        assert!(matches!(s, CosmixStatus::NoFiniteRoot | CosmixStatus::TooConcentrated), "{s:?}");
        let s = cosmix_solve_lambda(d.as_ptr(), 4, 2, w.as_ptr(), 1.5, &mut lambda);
        assert_eq!(s, CosmixStatus::InvalidArgument);
    }
}

#[test]
fn fit_classify_and_save_roundtrip() {
    unsafe {
        let m = matrix();
        assert_eq!(cosmix_matrix_n_docs(m), 15);
        assert_eq!(cosmix_matrix_n_terms(m), 9);
        let opts = cosmix_fit_options_default();
        let mut model = ptr::null_mut();
        let mut result = ptr::null_mut();
        assert_eq!(cosmix_fit_em(m, 3, &opts, &mut model, &mut result), CosmixStatus::Ok, "{}", last_error());
        assert_eq!(cosmix_model_k(model), 3);
        assert!(cosmix_model_lambda(model) > 0.0);
        assert_eq!(cosmix_result_n_docs(result), 15);
        assert_eq!(cosmix_result_k(result), 3);
        assert!(cosmix_result_partial_loglik(result).is_finite());
        assert!(cosmix_result_n_iterations(result) >= 1);

        let mut n = 0;
        assert_eq!(cosmix_model_weights(model, ptr::null_mut(), 0, &mut n), CosmixStatus::Ok);
        assert_eq!(n, 3);
        let mut w = [0.0; 3];
        assert_eq!(cosmix_model_weights(model, w.as_mut_ptr(), 3, ptr::null_mut()), CosmixStatus::Ok);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut small = [0.0; 2];
        assert_eq!(cosmix_model_weights(model, small.as_mut_ptr(), 2, &mut n), CosmixStatus::InvalidArgument);

        let mut labels = [0usize; 15];
        assert_eq!(cosmix_result_labels(result, labels.as_mut_ptr(), 15, ptr::null_mut()), CosmixStatus::Ok);
        for b in 0..3 {
            assert!(labels[b * 5..b * 5 + 5].iter().all(|&l| l == labels[b * 5]));
        }
        assert_ne!(labels[0], labels[5]);
        assert_ne!(labels[5], labels[10]);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(cosmix_model_save(model, path.as_ptr()), CosmixStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(cosmix_model_load(path.as_ptr(), &mut loaded), CosmixStatus::Ok);
        let mut again = ptr::null_mut();
        assert_eq!(cosmix_classify(loaded, m, &mut again), CosmixStatus::Ok);
        let mut p1 = vec![0.0; 45];
        let mut p2 = vec![0.0; 45];
        cosmix_result_posteriors(result, p1.as_mut_ptr(), 45, ptr::null_mut());
        cosmix_result_posteriors(again, p2.as_mut_ptr(), 45, ptr::null_mut());
        assert_eq!(p1, p2);

        cosmix_result_free(again);
        cosmix_model_free(loaded);
        cosmix_result_free(result);
        cosmix_model_free(model);
        cosmix_matrix_free(m);
    }
}

#[test]
fn bad_inputs_report_errors() {
    unsafe {
        let m = matrix();
        let opts = cosmix_fit_options_default();
        let mut model = ptr::null_mut();
        let mut result = ptr::null_mut();
        assert_eq!(cosmix_fit_em(m, 1, &opts, &mut model, &mut result), CosmixStatus::InvalidArgument);
        assert!(last_error().contains("k >= 2"));
        assert!(model.is_null());
        let missing = CString::new("/nonexistent/m.json").unwrap();
        assert_eq!(cosmix_model_load(missing.as_ptr(), &mut model), CosmixStatus::Io);
        let mut x = ptr::null_mut();
        let bad = [1.0, f64::NAN];
        assert_eq!(
            cosmix_matrix_from_dense(bad.as_ptr(), 1, 2, CosmixWeighting::RawCount, &mut x),
            CosmixStatus::InvalidArgument
        );
        cosmix_matrix_free(m);
        // freeing null is a no-op
        cosmix_matrix_free(ptr::null_mut());
    }
}
