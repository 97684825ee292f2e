use std::ffi::{c_char, CStr, CString};
use std::ptr;

use creepdb::store::{CreepRecord, ParamValue, PaperRow, Store};
use creepdb::validator::{Evidence, Verdict};
use creepdb_ffi::*;

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    cdb_string_free(s);
    out
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(cdb_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn metrics_match_closed_form() {
    let mut m = CdbMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        accuracy: 0.0,
    };
    for (tp, fp, tn, fn_) in [(8u64, 1u64, 10u64, 1u64), (3, 7, 2, 9), (1, 0, 0, 4)] {
        assert_eq!(unsafe { cdb_screening_metrics(tp, fp, tn, fn_, &mut m) }, CdbStatus::Ok);
        let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
        let p = tp / (tp + fp);
        let r = tp / (tp + fn_);
        assert!((m.precision - p).abs() < 1e-12);
        assert!((m.recall - r).abs() < 1e-12);
        assert!((m.f1 - 2.0 * tp / (2.0 * tp + fp + fn_)).abs() < 1e-12);
        assert!((m.accuracy - (tp + tn) / (tp + fp + tn + fn_)).abs() < 1e-12);
    }
}

#[test]
fn r_squared_and_lengths() {
    let obs = [1.0, 2.0, 3.0, 4.0];
    let pred = [1.1, 1.9, 3.2, 3.8];
    let mut r2 = 0.0;
    assert_eq!(unsafe { cdb_r_squared(obs.as_ptr(), pred.as_ptr(), 4, &mut r2) }, CdbStatus::Ok);
    let ss_res: f64 = obs.iter().zip(&pred).map(|(o, p)| (o - p) * (o - p)).sum();
    assert!((r2 - (1.0 - ss_res / 5.0)).abs() < 1e-12);
    let flat = [2.0; 4];
    assert_eq!(unsafe { cdb_r_squared(flat.as_ptr(), pred.as_ptr(), 4, &mut r2) }, CdbStatus::ModelError);
    assert!(!last_error().is_empty());
}

#[test]
fn standardize_temperature() {
    let unit = CString::new("degC").unwrap();
    let mut v = 0.0;
    let mut tag: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { cdb_standardize(600.0, unit.as_ptr(), &mut v, &mut tag) }, CdbStatus::Ok);
    assert!((v - 873.15).abs() < 1e-9);
    assert_eq!(unsafe { take(tag) }, "K");
    let bad = CString::new("furlongs").unwrap();
    assert_eq!(unsafe { cdb_standardize(1.0, bad.as_ptr(), &mut v, ptr::null_mut()) }, CdbStatus::UnitError);
}

#[test]
fn homogeneity_over_json() {
    let eq = CString::new("eps = A*sigma^n*t^m").unwrap();
    let good = CString::new(
        r#"[{"symbol":"eps","role":"strain","unit":"1"},{"symbol":"t","role":"time","unit":"s"},
            {"symbol":"A","role":"parameter","unit":"MPa^-n*s^-m"},{"symbol":"sigma","role":"stress","unit":"MPa"},
            {"symbol":"n","role":"parameter","unit":"1"},{"symbol":"m","role":"parameter","unit":"1"}]"#,
    )
    .unwrap();
    let mut out: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { cdb_check_homogeneity(eq.as_ptr(), good.as_ptr(), &mut out) }, CdbStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(report["pass"], true);

    let bad = CString::new(
        r#"[{"symbol":"eps","role":"strain","unit":"1"},{"symbol":"t","role":"time","unit":"s"},
            {"symbol":"A","role":"parameter","unit":"1"},{"symbol":"sigma","role":"stress","unit":"MPa"},
            {"symbol":"n","role":"parameter","unit":"1"},{"symbol":"m","role":"parameter","unit":"1"}]"#,
    )
    .unwrap();
    assert_eq!(unsafe { cdb_check_homogeneity(eq.as_ptr(), bad.as_ptr(), &mut out) }, CdbStatus::Ok);
    let report: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(report["pass"], false);

    let garbage = CString::new("not json").unwrap();
    assert_eq!(unsafe { cdb_check_homogeneity(eq.as_ptr(), garbage.as_ptr(), &mut out) }, CdbStatus::InvalidArgument);
}

#[test]
fn evaluate_closed_form_model() {
    let name = CString::new("norton_bailey").unwrap();
    let params = CString::new(r#"{"A":1e-6,"n":2.0,"m":0.5}"#).unwrap();
    let cond = CString::new(r#"{"sigma":10.0}"#).unwrap();
    let t = [0.0, 1.0, 4.0, 100.0];
    let mut out = [0.0; 4];
    let st = unsafe { cdb_evaluate_model(name.as_ptr(), params.as_ptr(), cond.as_ptr(), t.as_ptr(), 4, out.as_mut_ptr()) };
    assert_eq!(st, CdbStatus::Ok, "{}", last_error());
    for (ti, yi) in t.iter().zip(out) {
        assert!((yi - 1e-6 * 100.0 * ti.sqrt()).abs() < 1e-15);
    }
    let unknown = CString::new("no_such_model").unwrap();
    let st = unsafe { cdb_evaluate_model(unknown.as_ptr(), params.as_ptr(), cond.as_ptr(), t.as_ptr(), 4, out.as_mut_ptr()) };
    assert_eq!(st, CdbStatus::ModelError);
}

#[test]
fn invalid_utf8_rejected() {
    let raw = [0xffu8, 0xfe, 0];
    let mut v = 0.0;
    let st = unsafe { cdb_standardize(1.0, raw.as_ptr() as *const c_char, &mut v, ptr::null_mut()) };
    assert_eq!(st, CdbStatus::InvalidUtf8);
}

fn seed(path: &std::path::Path) {
    let mut s = Store::open(path).unwrap();
    s.insert_paper(&PaperRow {
        doi: "10.1/x".into(),
        title: "t".into(),
        authors: vec!["A. Author".into()],
        year: 2021,
        source_path: "p".into(),
    })
    .unwrap();
    let bindings = creepdb::models::Catalog::builtin().get("norton").unwrap().equation.bindings.clone();
    for (cat, t) in [("steel_iron", 873.15), ("polymer", 300.0)] {
        s.insert_record(&CreepRecord {
            record_id: 0,
            doi: "10.1/x".into(),
            material: "M".into(),
            category: cat.into(),
            temperature_k: t,
            stress_mpa: 50.0,
            model_name: "norton".into(),
            equation: "d(eps)/d(t) = A*sigma^n*exp(-Q/(R*T))".into(),
            bindings: bindings.clone(),
            params: vec![ParamValue {
                name: "n".into(),
                value: 4.0,
                unit: "1".into(),
            }],
            params_source: "text".into(),
            curve: vec![(0.0, 0.0), (1.0, 0.001)],
            verdict: Verdict::Valid,
            r2: Some(0.995),
            evidence: Evidence {
                figure_id: Some("fig1".into()),
                text_locations: vec![],
            },
            report: None,
        })
        .unwrap();
    }
}

#[test]
fn store_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("db.sqlite");
    seed(&path);
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut h: *mut CdbStore = ptr::null_mut();
    assert_eq!(unsafe { cdb_store_open(cpath.as_ptr(), &mut h) }, CdbStatus::Ok);
    assert!(!h.is_null());

    let mut out: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { cdb_store_query_json(h, ptr::null(), &mut out) }, CdbStatus::Ok);
    let all: Vec<serde_json::Value> = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(all.len(), 2);

    let f = CString::new(r#"{"category":"polymer"}"#).unwrap();
    assert_eq!(unsafe { cdb_store_export_csv(h, f.as_ptr(), &mut out) }, CdbStatus::Ok);
    let csv = unsafe { take(out) };
    let direct = Store::open(&path)
        .unwrap()
        .export(
            &creepdb::store::RecordFilter {
                category: Some("polymer".into()),
                ..Default::default()
            },
            creepdb::store::ExportFormat::Csv,
        )
        .unwrap();
    assert_eq!(csv.as_bytes(), direct.as_slice());

    assert_eq!(unsafe { cdb_store_stats_json(h, ptr::null(), &mut out) }, CdbStatus::Ok);
    let stats: serde_json::Value = serde_json::from_str(&unsafe { take(out) }).unwrap();
    assert_eq!(stats["total"], 2);

    let inverted = CString::new(r#"{"temperature_k":[900.0,100.0]}"#).unwrap();
    assert_eq!(unsafe { cdb_store_query_json(h, inverted.as_ptr(), &mut out) }, CdbStatus::StoreError);
    assert!(last_error().contains("temperature"));

    unsafe { cdb_store_close(h) };
    unsafe { cdb_store_close(ptr::null_mut()) };
    assert_eq!(unsafe { cdb_store_query_json(ptr::null(), ptr::null(), &mut out) }, CdbStatus::NullArgument);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/creepdb.h");
    for sym in [
        "cdb_last_error",
        "cdb_string_free",
        "cdb_screening_metrics",
        "cdb_r_squared",
        "cdb_standardize",
        "cdb_check_homogeneity",
        "cdb_evaluate_model",
        "cdb_store_open",
        "cdb_store_close",
        "cdb_store_query_json",
        "cdb_store_export_csv",
        "cdb_store_stats_json",
    ] {
        assert!(header.contains(&format!("{sym}(")), "{sym} missing from header");
    }
}
