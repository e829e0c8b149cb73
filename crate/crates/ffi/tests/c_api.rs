use std::ffi::{CStr, CString};
use std::ptr;

use georf_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(georf_last_error_message()) }.to_string_lossy().into_owned()
}

/// 40 points on a line; the target follows the first feature.
fn line_dataset() -> *mut GeorfDataset {
    let n = 40;
    let features: Vec<f64> = (0..n).flat_map(|i| [i as f64, ((i * 7) % 5) as f64]).collect();
    let target: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + 1.0).collect();
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let y = vec![0.0; n];
    let mut data = ptr::null_mut();
    let s = unsafe {
        georf_dataset_new(features.as_ptr(), n, 2, target.as_ptr(), x.as_ptr(), y.as_ptr(), &mut data)
    };
    assert_eq!(s, GeorfStatus::Ok, "{}", last_error());
    data
}

fn small_config() -> GeorfConfig {
    let mut c = unsafe { std::mem::zeroed::<GeorfConfig>() };
    assert_eq!(unsafe { georf_config_default(&mut c) }, GeorfStatus::Ok);
    c.ntree = 10;
    c.bandwidth = 6;
    c.workers = 2;
    c
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(georf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn default_config_mirrors_library_defaults() {
    let c = small_config();
    assert_eq!(c.mtry_kind, GeorfMtryKind::Third);
    assert_eq!(c.local_weight, 0.5);
    assert_eq!(c.base_seed, 42);
    assert!(c.include_anchor && !c.enable_i1 && !c.enable_i2 && !c.enable_i3);
}

#[test]
fn fit_predict_save_load() {
    let data = line_dataset();
    let mut n_rows = 0;
    let mut n_features = 0;
    assert_eq!(unsafe { georf_dataset_shape(data, &mut n_rows, &mut n_features) }, GeorfStatus::Ok);
    assert_eq!((n_rows, n_features), (40, 2));

    let config = small_config();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { georf_model_fit(data, &config, &mut model) }, GeorfStatus::Ok, "{}", last_error());

    let row = [10.0, 0.0];
    let (mut c, mut l, mut g) = (0.0, 0.0, 0.0);
    let s = unsafe { georf_model_predict(model, 10.0, 0.0, row.as_ptr(), 2, &mut c, &mut l, &mut g) };
    assert_eq!(s, GeorfStatus::Ok);
    assert_eq!(c, 0.5 * l + 0.5 * g);

    let xs = [10.0, 20.0];
    let ys = [0.0, 0.0];
    let feats = [10.0, 0.0, 20.0, 0.0];
    let mut combined = [0.0; 2];
    let s = unsafe {
        georf_model_predict_batch(model, 2, xs.as_ptr(), ys.as_ptr(), feats.as_ptr(), combined.as_mut_ptr(), ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(s, GeorfStatus::Ok);
    assert_eq!(combined[0], c);

    let mut imp = [0.0; 2];
    assert_eq!(unsafe { georf_model_global_importance(model, imp.as_mut_ptr(), 2) }, GeorfStatus::Ok);
    assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert_eq!(unsafe { georf_model_local_importance(model, 3, imp.as_mut_ptr(), 2) }, GeorfStatus::Ok);
    assert_eq!(
        unsafe { georf_model_local_importance(model, 40, imp.as_mut_ptr(), 2) },
        GeorfStatus::InvalidArgument
    );

    let (mut s_count, mut locals, mut bw, mut lw) = (0, 0, 0, 0.0);
    assert_eq!(unsafe { georf_model_info(model, &mut s_count, &mut locals, &mut bw, &mut lw) }, GeorfStatus::Ok);
    assert_eq!((s_count, locals, bw, lw), (2, 40, 6, 0.5));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.grf").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { georf_model_save(model, path.as_ptr()) }, GeorfStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { georf_model_load(path.as_ptr(), &mut loaded) }, GeorfStatus::Ok);
    let mut c2 = 0.0;
    let s = unsafe { georf_model_predict(loaded, 10.0, 0.0, row.as_ptr(), 2, &mut c2, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, GeorfStatus::Ok);
    assert_eq!(c2, c);

    unsafe {
        georf_model_free(model);
        georf_model_free(loaded);
        georf_dataset_free(data);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut model = ptr::null_mut();
    let config = small_config();
    assert_eq!(unsafe { georf_model_fit(ptr::null(), &config, &mut model) }, GeorfStatus::NullPointer);
    assert!(last_error().contains("null"));

    let data = line_dataset();
    let mut bad = small_config();
    bad.bandwidth = 500;
    assert_eq!(unsafe { georf_model_fit(data, &bad, &mut model) }, GeorfStatus::InvalidArgument);
    assert!(last_error().contains("bandwidth"), "{}", last_error());

    let path = CString::new("/no/such/model.grf").unwrap();
    assert_eq!(unsafe { georf_model_load(path.as_ptr(), &mut model) }, GeorfStatus::IoError);

    let mut fitted = ptr::null_mut();
    assert_eq!(unsafe { georf_model_fit(data, &config, &mut fitted) }, GeorfStatus::Ok);
    assert_eq!(last_error(), "");
    let row = [1.0];
    let mut out = 0.0;
    let s = unsafe { georf_model_predict(fitted, 0.0, 0.0, row.as_ptr(), 1, &mut out, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, GeorfStatus::InvalidArgument);
    unsafe {
        georf_model_free(fitted);
        georf_dataset_free(data);
        georf_dataset_free(ptr::null_mut());
    }
}

#[test]
fn moran_and_scan() {
    // Two far-apart groups of five with different levels.
    let x: Vec<f64> = (0..10).map(|i| if i < 5 { i as f64 * 0.1 } else { 100.0 + i as f64 * 0.1 }).collect();
    let y = vec![0.0; 10];
    let v: Vec<f64> = (0..10).map(|i| if i < 5 { 1.0 + 0.01 * i as f64 } else { -1.0 }).collect();
    let mut m = GeorfMoran::default();
    assert_eq!(unsafe { georf_morans_i(x.as_ptr(), y.as_ptr(), v.as_ptr(), 10, 4, &mut m) }, GeorfStatus::Ok);
    assert!(m.moran_i > 0.9 && m.p_value < 0.05);

    let mut lambda = 0;
    let mut alpha = 0.0;
    let mut count = 0;
    let mut table = [GeorfMoran::default(); 8];
    let s = unsafe {
        georf_isa_scan(
            x.as_ptr(), y.as_ptr(), v.as_ptr(), 10, 2, 9, 1, 0.05,
            &mut lambda, &mut alpha, table.as_mut_ptr(), table.len(), &mut count,
        )
    };
    assert_eq!(s, GeorfStatus::Ok, "{}", last_error());
    assert_eq!(count, 8);
    assert_eq!(lambda, 4);
    let at_lambda = table.iter().find(|r| r.k == lambda).unwrap();
    assert_eq!(alpha, at_lambda.moran_i.min(1.0));
}

#[test]
fn metrics() {
    let y = [1.0, 2.0, 3.0];
    let mut r2 = 0.0;
    let mut e = 0.0;
    unsafe {
        assert_eq!(georf_r_squared(y.as_ptr(), y.as_ptr(), 3, &mut r2), GeorfStatus::Ok);
        assert_eq!(georf_rmse(y.as_ptr(), y.as_ptr(), 3, &mut e), GeorfStatus::Ok);
        let flat = [2.0; 3];
        assert_eq!(georf_r_squared(flat.as_ptr(), y.as_ptr(), 3, &mut r2), GeorfStatus::DataError);
    }
    assert_eq!(e, 0.0);
}

#[test]
fn csv_loading() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("d.csv");
    std::fs::write(&file, "lon,lat,a,t\n0,0,1,2\n1,0,2,3\n2,0,3,5\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let a = CString::new("a").unwrap();
    let names = [a.as_ptr()];
    let t = CString::new("t").unwrap();
    let lon = CString::new("lon").unwrap();
    let lat = CString::new("lat").unwrap();
    let mut data = ptr::null_mut();
    let s = unsafe { georf_dataset_load_csv(path.as_ptr(), names.as_ptr(), 1, t.as_ptr(), lon.as_ptr(), lat.as_ptr(), &mut data) };
    assert_eq!(s, GeorfStatus::Ok, "{}", last_error());
    unsafe { georf_dataset_free(data) };

    let missing = CString::new("nope").unwrap();
    let s = unsafe { georf_dataset_load_csv(path.as_ptr(), names.as_ptr(), 1, missing.as_ptr(), lon.as_ptr(), lat.as_ptr(), &mut data) };
    assert_eq!(s, GeorfStatus::DataError);
    assert!(last_error().contains("nope"));
}
