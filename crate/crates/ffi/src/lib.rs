//! C ABI over the `georf` library.
//!
//! Every function returns a [`GeorfStatus`]. On failure a one-line message is
//! kept per thread and can be read with [`georf_last_error_message`].
//! Datasets and models are opaque handles that must be released with their
//! `_free` function. Panics never cross the boundary; they surface as
//! `GEORF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use libc::{c_char, size_t};

use georf::data::{ColumnSpec, Point};
use georf::spatial::{isa_scan_values, morans_i_knn, IsaGrid, NeighborIndex};
use georf::{GrfConfig, GrfError, Mtry, SpatialDataset, TrainedGrf, Workers};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeorfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    IoError = 4,
    ModelFormat = 5,
    NotFitted = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeorfMtryKind {
    All = 0,
    Third = 1,
    Sqrt = 2,
    /// Use `mtry_value` features per split.
    Fixed = 3,
}

/// Model settings. Fill with [`georf_config_default`] then adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GeorfConfig {
    pub ntree: size_t,
    pub mtry_kind: GeorfMtryKind,
    pub mtry_value: size_t,
    pub bandwidth: size_t,
    pub local_weight: f64,
    pub enable_i1: bool,
    pub enable_i2: bool,
    pub enable_i3: bool,
    pub base_seed: u64,
    pub min_leaf_size: size_t,
    pub include_anchor: bool,
    pub significance: f64,
    /// 0 uses every core.
    pub workers: size_t,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GeorfMoran {
    pub k: size_t,
    pub moran_i: f64,
    pub expected_i: f64,
    pub variance: f64,
    pub z_score: f64,
    pub p_value: f64,
}

/// Opaque dataset handle.
pub struct GeorfDataset(SpatialDataset);

/// Opaque fitted-model handle.
pub struct GeorfModel(TrainedGrf);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(GeorfStatus, String);

impl From<GrfError> for Failure {
    fn from(e: GrfError) -> Self {
        let status = match &e {
            GrfError::FileNotFound(_) | GrfError::Io(_) | GrfError::Csv(_) => GeorfStatus::IoError,
            GrfError::ModelFormat(_) | GrfError::Json(_) => GeorfStatus::ModelFormat,
            GrfError::ModelNotFitted => GeorfStatus::NotFitted,
            GrfError::InvalidConfig(_)
            | GrfError::BandwidthTooLarge { .. }
            | GrfError::KTooLarge { .. }
            | GrfError::EmptyGrid(_)
            | GrfError::DimensionMismatch { .. }
            | GrfError::LengthMismatch { .. } => GeorfStatus::InvalidArgument,
            _ => GeorfStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GeorfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(GeorfStatus::InvalidArgument, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GeorfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GeorfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            GeorfStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn to_config(c: &GeorfConfig) -> Result<GrfConfig, Failure> {
    let mtry = match c.mtry_kind {
        GeorfMtryKind::All => Mtry::All,
        GeorfMtryKind::Third => Mtry::Third,
        GeorfMtryKind::Sqrt => Mtry::Sqrt,
        GeorfMtryKind::Fixed if c.mtry_value > 0 => Mtry::Fixed(c.mtry_value),
        GeorfMtryKind::Fixed => return Err(invalid("mtry_value must be positive")),
    };
    Ok(GrfConfig {
        ntree: c.ntree,
        mtry,
        bandwidth: c.bandwidth,
        local_weight: c.local_weight,
        enable_i1: c.enable_i1,
        enable_i2: c.enable_i2,
        enable_i3: c.enable_i3,
        base_seed: c.base_seed,
        min_leaf_size: c.min_leaf_size,
        include_anchor: c.include_anchor,
        significance: c.significance,
        workers: if c.workers == 0 { Workers::Auto } else { Workers::Fixed(c.workers) },
        ..GrfConfig::default()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn georf_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Message of the last failed call on this thread, or "" after a success.
/// The pointer stays valid until the next georf call on the same thread.
#[no_mangle]
pub extern "C" fn georf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must point to writable memory for one `GeorfConfig`.
#[no_mangle]
pub unsafe extern "C" fn georf_config_default(out: *mut GeorfConfig) -> GeorfStatus {
    guard(|| {
        let d = GrfConfig::default();
        let c = GeorfConfig {
            ntree: d.ntree,
            mtry_kind: GeorfMtryKind::Third,
            mtry_value: 0,
            bandwidth: d.bandwidth,
            local_weight: d.local_weight,
            enable_i1: d.enable_i1,
            enable_i2: d.enable_i2,
            enable_i3: d.enable_i3,
            base_seed: d.base_seed,
            min_leaf_size: d.min_leaf_size,
            include_anchor: d.include_anchor,
            significance: d.significance,
            workers: 0,
        };
        write_out(out, c, "out")
    })
}

/// Build a dataset from a row-major `n_rows x n_features` feature matrix,
/// a target vector and coordinate vectors. Features are named `x1..xS`.
///
/// # Safety
/// Every array must hold the stated number of values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn georf_dataset_new(
    features: *const f64,
    n_rows: size_t,
    n_features: size_t,
    target: *const f64,
    x: *const f64,
    y: *const f64,
    out: *mut *mut GeorfDataset,
) -> GeorfStatus {
    guard(|| {
        let total = n_rows.checked_mul(n_features).ok_or_else(|| invalid("matrix too large"))?;
        let f = slice(features, total, "features")?;
        let t = slice(target, n_rows, "target")?;
        let xs = slice(x, n_rows, "x")?;
        let ys = slice(y, n_rows, "y")?;
        let data = SpatialDataset::from_parts(
            f.to_vec(),
            t.to_vec(),
            xs.iter().zip(ys).map(|(&a, &b)| Point::new(a, b)).collect(),
            (1..=n_features).map(|j| format!("x{j}")).collect(),
            "target".into(),
            ["x".into(), "y".into()],
            (0..n_rows).map(|i| i.to_string()).collect(),
        )?;
        write_out(out, Box::into_raw(Box::new(GeorfDataset(data))), "out")
    })
}

/// Load a CSV file. `features` is an array of `n_features` column names.
///
/// # Safety
/// All strings must be NUL-terminated; `features` must hold `n_features` pointers.
#[no_mangle]
pub unsafe extern "C" fn georf_dataset_load_csv(
    path: *const c_char,
    features: *const *const c_char,
    n_features: size_t,
    target: *const c_char,
    x: *const c_char,
    y: *const c_char,
    out: *mut *mut GeorfDataset,
) -> GeorfStatus {
    guard(|| {
        let names = slice(features, n_features, "features")?
            .iter()
            .map(|&p| string(p, "feature name"))
            .collect::<Result<Vec<_>, _>>()?;
        let spec = ColumnSpec {
            features: names,
            target: string(target, "target")?,
            x: string(x, "x")?,
            y: string(y, "y")?,
            id: None,
        };
        let v = georf::io::load_csv(string(path, "path")?, &spec)?;
        write_out(out, Box::into_raw(Box::new(GeorfDataset(v.dataset))), "out")
    })
}

/// # Safety
/// `data` must come from a georf dataset constructor.
#[no_mangle]
pub unsafe extern "C" fn georf_dataset_shape(
    data: *const GeorfDataset,
    n_rows: *mut size_t,
    n_features: *mut size_t,
) -> GeorfStatus {
    guard(|| {
        let d = &handle(data, "data")?.0;
        write_out(n_rows, d.n_rows(), "n_rows")?;
        write_out(n_features, d.n_features(), "n_features")
    })
}

/// Release a dataset. Null is ignored.
///
/// # Safety
/// `data` must be null or an unreleased handle.
#[no_mangle]
pub unsafe extern "C" fn georf_dataset_free(data: *mut GeorfDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// # Safety
/// `data` and `config` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn georf_model_fit(
    data: *const GeorfDataset,
    config: *const GeorfConfig,
    out: *mut *mut GeorfModel,
) -> GeorfStatus {
    guard(|| {
        let d = &handle(data, "data")?.0;
        let c = to_config(handle(config, "config")?)?;
        let m = TrainedGrf::fit(d, &c)?;
        write_out(out, Box::into_raw(Box::new(GeorfModel(m))), "out")
    })
}

/// Predict one point. Any of the three outputs may be null.
///
/// # Safety
/// `features` must hold `n_features` values.
#[no_mangle]
pub unsafe extern "C" fn georf_model_predict(
    model: *const GeorfModel,
    x: f64,
    y: f64,
    features: *const f64,
    n_features: size_t,
    combined: *mut f64,
    local: *mut f64,
    global: *mut f64,
) -> GeorfStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let p = m.predict(Point::new(x, y), slice(features, n_features, "features")?)?;
        for (dst, v) in [(combined, p.combined), (local, p.local), (global, p.global)] {
            if !dst.is_null() {
                dst.write(v);
            }
        }
        Ok(())
    })
}

/// Predict `n` points. `features` is row-major with the model's feature count.
/// `local` and `global` may be null.
///
/// # Safety
/// Arrays must hold `n` values (features: `n * n_features`).
#[no_mangle]
pub unsafe extern "C" fn georf_model_predict_batch(
    model: *const GeorfModel,
    n: size_t,
    x: *const f64,
    y: *const f64,
    features: *const f64,
    combined: *mut f64,
    local: *mut f64,
    global: *mut f64,
) -> GeorfStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let s = m.n_features();
        let total = n.checked_mul(s).ok_or_else(|| invalid("batch too large"))?;
        let xs = slice(x, n, "x")?;
        let ys = slice(y, n, "y")?;
        let pts: Vec<Point> = xs.iter().zip(ys).map(|(&a, &b)| Point::new(a, b)).collect();
        let preds = m.predict_points(&pts, slice(features, total, "features")?)?;
        let c = slice_mut(combined, n, "combined")?;
        for (dst, p) in c.iter_mut().zip(&preds) {
            *dst = p.combined;
        }
        if !local.is_null() {
            for (dst, p) in slice_mut(local, n, "local")?.iter_mut().zip(&preds) {
                *dst = p.local;
            }
        }
        if !global.is_null() {
            for (dst, p) in slice_mut(global, n, "global")?.iter_mut().zip(&preds) {
                *dst = p.global;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn georf_model_save(model: *const GeorfModel, path: *const c_char) -> GeorfStatus {
    guard(|| Ok(handle(model, "model")?.0.save(string(path, "path")?)?))
}

/// # Safety
/// `path` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn georf_model_load(path: *const c_char, out: *mut *mut GeorfModel) -> GeorfStatus {
    guard(|| {
        let m = TrainedGrf::load(string(path, "path")?)?;
        write_out(out, Box::into_raw(Box::new(GeorfModel(m))), "out")
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or an unreleased handle.
#[no_mangle]
pub unsafe extern "C" fn georf_model_free(model: *mut GeorfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature count, number of local models, and the bandwidth and local weight
/// in effect (after autocorrelation-based selection, if enabled).
///
/// # Safety
/// `model` must be valid; null outputs are skipped.
#[no_mangle]
pub unsafe extern "C" fn georf_model_info(
    model: *const GeorfModel,
    n_features: *mut size_t,
    n_local_models: *mut size_t,
    bandwidth: *mut size_t,
    local_weight: *mut f64,
) -> GeorfStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        if !n_features.is_null() {
            n_features.write(m.n_features());
        }
        if !n_local_models.is_null() {
            n_local_models.write(m.local_models().len());
        }
        if !bandwidth.is_null() {
            bandwidth.write(m.config().bandwidth);
        }
        if !local_weight.is_null() {
            local_weight.write(m.config().local_weight);
        }
        Ok(())
    })
}

/// Normalised global importance into `out[0..len]`; `len` must equal the feature count.
///
/// # Safety
/// `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn georf_model_global_importance(
    model: *const GeorfModel,
    out: *mut f64,
    len: size_t,
) -> GeorfStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let imp = m.global_forest().importance();
        if len != imp.len() {
            return Err(GrfError::DimensionMismatch { expected: imp.len(), got: len }.into());
        }
        slice_mut(out, len, "out")?.copy_from_slice(imp);
        Ok(())
    })
}

/// Importance of the local model at training row `index`.
///
/// # Safety
/// `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn georf_model_local_importance(
    model: *const GeorfModel,
    index: size_t,
    out: *mut f64,
    len: size_t,
) -> GeorfStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        let local = m
            .local_models()
            .get(index)
            .ok_or_else(|| invalid(format!("local model {index} out of range")))?;
        let imp = local.forest.importance();
        if len != imp.len() {
            return Err(GrfError::DimensionMismatch { expected: imp.len(), got: len }.into());
        }
        slice_mut(out, len, "out")?.copy_from_slice(imp);
        Ok(())
    })
}

/// Moran's I of `values` with row-standardised `k`-nearest-neighbour weights.
///
/// # Safety
/// Arrays must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn georf_morans_i(
    x: *const f64,
    y: *const f64,
    values: *const f64,
    n: size_t,
    k: size_t,
    out: *mut GeorfMoran,
) -> GeorfStatus {
    guard(|| {
        let pts = points(x, y, n)?;
        let r = morans_i_knn(slice(values, n, "values")?, &NeighborIndex::new(pts), k)?;
        write_out(out, moran(&r), "out")
    })
}

fn moran(r: &georf::MoranResult) -> GeorfMoran {
    GeorfMoran {
        k: r.k,
        moran_i: r.moran_i,
        expected_i: r.expected_i,
        variance: r.variance,
        z_score: r.z_score,
        p_value: r.p_value,
    }
}

unsafe fn points(x: *const f64, y: *const f64, n: usize) -> Result<Vec<Point>, Failure> {
    let xs = slice(x, n, "x")?;
    let ys = slice(y, n, "y")?;
    Ok(xs.iter().zip(ys).map(|(&a, &b)| Point::new(a, b)).collect())
}

/// Scan Moran's I for `k = k_min, k_min + k_step, ..., <= k_max`. Passing 0
/// for `k_min` or `k_max` uses the default range. Writes the selected
/// bandwidth and local weight; `results`, if not null, receives one entry per
/// grid value and must hold `results_len` entries (see `n_results`).
///
/// # Safety
/// Arrays must hold `n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn georf_isa_scan(
    x: *const f64,
    y: *const f64,
    values: *const f64,
    n: size_t,
    k_min: size_t,
    k_max: size_t,
    k_step: size_t,
    significance: f64,
    selected_lambda: *mut size_t,
    selected_alpha: *mut f64,
    results: *mut GeorfMoran,
    results_len: size_t,
    n_results: *mut size_t,
) -> GeorfStatus {
    guard(|| {
        let pts = points(x, y, n)?;
        let d = IsaGrid::default_for(n);
        let grid = IsaGrid {
            k_min: if k_min == 0 { d.k_min } else { k_min },
            k_max: if k_max == 0 { d.k_max } else { k_max },
            k_step: k_step.max(1),
        };
        let scan = isa_scan_values(&pts, slice(values, n, "values")?, grid, significance)?;
        write_out(selected_lambda, scan.selected_lambda, "selected_lambda")?;
        write_out(selected_alpha, scan.selected_alpha, "selected_alpha")?;
        if !n_results.is_null() {
            n_results.write(scan.results.len());
        }
        if !results.is_null() {
            let dst = slice_mut(results, results_len, "results")?;
            for (d, r) in dst.iter_mut().zip(&scan.results) {
                *d = moran(r);
            }
        }
        Ok(())
    })
}

/// # Safety
/// Both arrays must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn georf_r_squared(y: *const f64, yhat: *const f64, n: size_t, out: *mut f64) -> GeorfStatus {
    guard(|| {
        let v = georf::r_squared(slice(y, n, "y")?, slice(yhat, n, "yhat")?)?;
        write_out(out, v, "out")
    })
}

/// # Safety
/// Both arrays must hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn georf_rmse(y: *const f64, yhat: *const f64, n: size_t, out: *mut f64) -> GeorfStatus {
    guard(|| {
        let v = georf::rmse(slice(y, n, "y")?, slice(yhat, n, "yhat")?)?;
        write_out(out, v, "out")
    })
}
