//! C ABI over creepdb: screening metrics, unit standardization, dimensional
//! checks, model evaluation and read access to a record store.
//!
//! Every function returns a [`CdbStatus`]. On failure a message is kept per
//! thread and can be read with [`cdb_last_error`]. Strings returned through
//! out-parameters are owned by the caller and released with
//! [`cdb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use creepdb::formula::{check_homogeneity, parse_equation, standardize, Equation, SymbolBinding};
use creepdb::models::{evaluate, r_squared, Catalog, Values};
use creepdb::screening::{accuracy, f1, precision, recall, ConfusionCounts};
use creepdb::store::{ExportFormat, RecordFilter, StatsConfig, Store};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    UndefinedMetric = 4,
    UnitError = 5,
    ModelError = 6,
    StoreError = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdbMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Opaque store handle.
pub struct CdbStore {
    inner: Store,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Fallible<T> = Result<T, (CdbStatus, String)>;

fn guard(f: impl FnOnce() -> Fallible<()>) -> CdbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            CdbStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Fallible<&'a str> {
    if p.is_null() {
        return Err((CdbStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (CdbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Fallible<&'a [f64]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err((CdbStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn out_string(out: *mut *mut c_char, s: String) -> Fallible<()> {
    if out.is_null() {
        return Err((CdbStatus::NullArgument, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| (CdbStatus::InvalidArgument, "result contains a nul byte".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn json_arg<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Fallible<T> {
    serde_json::from_str(s).map_err(|e| (CdbStatus::InvalidArgument, format!("{what}: {e}")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cdb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cdb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Precision, recall, F1 and accuracy of a confusion matrix. Fails with
/// `UndefinedMetric` when any denominator is zero.
///
/// # Safety
/// `out` must point to writable memory for one `CdbMetrics`.
#[no_mangle]
pub unsafe extern "C" fn cdb_screening_metrics(tp: u64, fp: u64, tn: u64, fn_: u64, out: *mut CdbMetrics) -> CdbStatus {
    guard(|| {
        if out.is_null() {
            return Err((CdbStatus::NullArgument, "out is null".into()));
        }
        let c = ConfusionCounts::new(tp, fp, tn, fn_);
        let m = |r: Result<f64, _>| r.map_err(|e: creepdb::screening::ScreeningError| (CdbStatus::UndefinedMetric, e.to_string()));
        *out = CdbMetrics {
            precision: m(precision(&c))?,
            recall: m(recall(&c))?,
            f1: m(f1(&c))?,
            accuracy: m(accuracy(&c))?,
        };
        Ok(())
    })
}

/// Coefficient of determination of `predicted` against `observed`.
///
/// # Safety
/// Both arrays must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdb_r_squared(observed: *const f64, predicted: *const f64, n: usize, out: *mut f64) -> CdbStatus {
    guard(|| {
        let o = slice(observed, n, "observed")?;
        let p = slice(predicted, n, "predicted")?;
        if out.is_null() {
            return Err((CdbStatus::NullArgument, "out is null".into()));
        }
        *out = r_squared(o, p).map_err(|e| (CdbStatus::ModelError, e.to_string()))?;
        Ok(())
    })
}

/// Convert `value` in `unit` to the canonical unit (K, MPa, s, fraction).
/// The canonical unit tag is written to `out_unit` when it is not null.
///
/// # Safety
/// `unit` must be a nul-terminated string; `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdb_standardize(
    value: f64,
    unit: *const c_char,
    out_value: *mut f64,
    out_unit: *mut *mut c_char,
) -> CdbStatus {
    guard(|| {
        let u = text(unit, "unit")?;
        if out_value.is_null() {
            return Err((CdbStatus::NullArgument, "out_value is null".into()));
        }
        let c = standardize(value, u).map_err(|e| (CdbStatus::UnitError, e.to_string()))?;
        *out_value = c.value;
        if !out_unit.is_null() {
            out_string(out_unit, c.unit)?;
        }
        Ok(())
    })
}

/// Dimensional homogeneity report, as JSON, for `equation` with bindings
/// given as a JSON array of `{"symbol", "role", "unit"}`.
///
/// # Safety
/// String arguments must be nul-terminated; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdb_check_homogeneity(
    equation: *const c_char,
    bindings_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CdbStatus {
    guard(|| {
        let eq_text = text(equation, "equation")?;
        let bindings: Vec<SymbolBinding> = json_arg(text(bindings_json, "bindings")?, "bindings")?;
        let (lhs, rhs) = parse_equation(eq_text).map_err(|e| (CdbStatus::InvalidArgument, e.to_string()))?;
        let eq = Equation::new(lhs, rhs, bindings).map_err(|e| (CdbStatus::InvalidArgument, e.to_string()))?;
        let report = check_homogeneity(&eq);
        out_string(out_json, serde_json::to_string(&report).expect("serializable"))
    })
}

/// Evaluate a catalog model at `n` times (s). Parameters and conditions are
/// JSON objects mapping symbol names to canonical values.
///
/// # Safety
/// String arguments must be nul-terminated; `times` and `out` must hold `n`
/// values.
#[no_mangle]
pub unsafe extern "C" fn cdb_evaluate_model(
    model: *const c_char,
    params_json: *const c_char,
    conditions_json: *const c_char,
    times: *const f64,
    n: usize,
    out: *mut f64,
) -> CdbStatus {
    guard(|| {
        let name = text(model, "model")?;
        let params: Values = json_arg(text(params_json, "params")?, "params")?;
        let cond: Values = json_arg(text(conditions_json, "conditions")?, "conditions")?;
        let t = slice(times, n, "times")?;
        if n > 0 && out.is_null() {
            return Err((CdbStatus::NullArgument, "out is null".into()));
        }
        let catalog = Catalog::builtin();
        let m = catalog.get(name).map_err(|e| (CdbStatus::ModelError, e.to_string()))?;
        let values = evaluate(m, &params, &cond, t).map_err(|e| (CdbStatus::ModelError, e.to_string()))?;
        if n > 0 {
            std::slice::from_raw_parts_mut(out, n).copy_from_slice(&values);
        }
        Ok(())
    })
}

/// Open (or create) a store file.
///
/// # Safety
/// `path` must be nul-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdb_store_open(path: *const c_char, out: *mut *mut CdbStore) -> CdbStatus {
    guard(|| {
        let p = text(path, "path")?;
        if out.is_null() {
            return Err((CdbStatus::NullArgument, "out is null".into()));
        }
        let inner = Store::open(p).map_err(|e| (CdbStatus::StoreError, e.to_string()))?;
        *out = Box::into_raw(Box::new(CdbStore { inner }));
        Ok(())
    })
}

/// Close a store handle. Null is ignored.
///
/// # Safety
/// `store` must come from [`cdb_store_open`] and not be closed twice.
#[no_mangle]
pub unsafe extern "C" fn cdb_store_close(store: *mut CdbStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

unsafe fn with_store(store: *const CdbStore, filter_json: *const c_char) -> Fallible<(&'static Store, RecordFilter)> {
    if store.is_null() {
        return Err((CdbStatus::NullArgument, "store is null".into()));
    }
    let filter = if filter_json.is_null() {
        RecordFilter::default()
    } else {
        json_arg(text(filter_json, "filter")?, "filter")?
    };
    Ok((&(*store).inner, filter))
}

/// Records matching a JSON filter (null for all), as a JSON array.
///
/// # Safety
/// `store` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdb_store_query_json(
    store: *const CdbStore,
    filter_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CdbStatus {
    guard(|| {
        let (s, f) = with_store(store, filter_json)?;
        let recs = s.query(&f).map_err(|e| (CdbStatus::StoreError, e.to_string()))?;
        out_string(out_json, serde_json::to_string(&recs).expect("serializable"))
    })
}

/// CSV export of the records matching a JSON filter (null for all).
///
/// # Safety
/// `store` must be a live handle; `out_csv` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdb_store_export_csv(
    store: *const CdbStore,
    filter_json: *const c_char,
    out_csv: *mut *mut c_char,
) -> CdbStatus {
    guard(|| {
        let (s, f) = with_store(store, filter_json)?;
        let bytes = s.export(&f, ExportFormat::Csv).map_err(|e| (CdbStatus::StoreError, e.to_string()))?;
        out_string(out_csv, String::from_utf8(bytes).expect("csv is UTF-8"))
    })
}

/// Distribution statistics with default histogram edges, as JSON.
///
/// # Safety
/// `store` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdb_store_stats_json(
    store: *const CdbStore,
    filter_json: *const c_char,
    out_json: *mut *mut c_char,
) -> CdbStatus {
    guard(|| {
        let (s, f) = with_store(store, filter_json)?;
        let st = s
            .stats(&f, &StatsConfig::default())
            .map_err(|e| (CdbStatus::StoreError, e.to_string()))?;
        out_string(out_json, serde_json::to_string(&st).expect("serializable"))
    })
}
