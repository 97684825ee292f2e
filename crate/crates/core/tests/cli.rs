mod common;

use common::fixture_dir;
use creepdb::app::cli::{run_with, EXIT_DOCUMENT_FAILURE, EXIT_FATAL, EXIT_OK, EXIT_USAGE};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut full = vec!["creepdb"];
    full.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn fixture_args() -> (String, String) {
    let dir = fixture_dir();
    (
        dir.join("config.toml").to_str().unwrap().to_string(),
        dir.to_str().unwrap().to_string(),
    )
}

#[test]
fn run_then_export_and_stats() {
    let (cfg, corpus) = fixture_args();
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db.sqlite");
    let audit = tmp.path().join("audit.jsonl");
    let (code, out, err) = cli(&[
        "--config", &cfg, "run", "--corpus", &corpus, "--db", db.to_str().unwrap(), "--audit", audit.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert!(out.contains("screened_pass=5") && out.contains("stored=4"), "{out}");
    assert_eq!(std::fs::read_to_string(&audit).unwrap().lines().count(), 5);

    let (code, csv, _) = cli(&["export", "--db", db.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(csv.lines().count(), 6);
    let curves = tmp.path().join("curves");
    let (code, _, _) = cli(&[
        "export", "--db", db.to_str().unwrap(), "--category", "steel_iron", "--out",
        tmp.path().join("steel.csv").to_str().unwrap(), "--curves-dir", curves.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(std::fs::read_dir(&curves).unwrap().count() >= 1);

    let (code, stats, _) = cli(&["stats", "--db", db.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    assert!(stats.contains("steel_iron"), "{stats}");

    let (code, _, err) = cli(&["export", "--db", db.to_str().unwrap(), "--t-min-k", "900", "--t-max-k", "100"]);
    assert_eq!(code, EXIT_FATAL, "{err}");
}

#[test]
fn screen_then_eval() {
    let (cfg, corpus) = fixture_args();
    let tmp = tempfile::tempdir().unwrap();
    let decisions = tmp.path().join("decisions.csv");
    let (code, _, err) = cli(&["--config", &cfg, "screen", "--corpus", &corpus, "--out", decisions.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{err}");
    let truth = fixture_dir().join("truth.csv");
    let (code, out, err) = cli(&["eval", "--decisions", decisions.to_str().unwrap(), "--truth", truth.to_str().unwrap(), "--json"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    for k in ["precision", "recall", "f1", "accuracy"] {
        assert_eq!(v[k], 1.0, "{k}: {out}");
    }
}

#[test]
fn strict_document_failures_exit_one() {
    let (_, corpus) = fixture_args();
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("replies.jsonl");
    std::fs::write(&empty, "").unwrap();
    let spec = format!("scripted:{}", empty.display());
    let db = tmp.path().join("db.sqlite");
    let (code, _, _) = cli(&["run", "--corpus", &corpus, "--backend", &spec, "--db", db.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let (code, _, _) = cli(&["run", "--corpus", &corpus, "--backend", &spec, "--db", db.to_str().unwrap(), "--strict"]);
    assert_eq!(code, EXIT_DOCUMENT_FAILURE);
}

#[test]
fn usage_errors() {
    assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(cli(&["run"]).0, EXIT_USAGE);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("export"));
}

#[test]
fn search_and_ingest() {
    let (_, corpus) = fixture_args();
    let (code, out, _) = cli(&["ingest", "--corpus", &corpus]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.lines().filter(|l| l.starts_with("doc")).count(), 6, "{out}");
    let (code, out, _) = cli(&["search", "--corpus", &corpus, "--boolean", "--query", "creep AND NOT fatigue"]);
    assert_eq!(code, EXIT_OK);
    assert!(!out.contains("doc6"), "{out}");
    let (code, _, _) = cli(&["search", "--corpus", &corpus, "--boolean", "--query", "creep AND"]);
    assert_eq!(code, EXIT_FATAL);
}
