//! Single-file relational store for papers, creep records, rejected entries
//! and the review audit log.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rusqlite::{params, Connection, OptionalExtension, Row};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::SymbolBinding;
use crate::skills::CATEGORY_VOCABULARY;
use crate::validator::{Evidence, Verdict};

pub const SCHEMA_VERSION: u32 = 1;
pub const HUMAN_APPROVED: &str = "human-approved";
pub const CSV_HEADER: [&str; 11] = [
    "record_id",
    "doi",
    "material",
    "category",
    "temperature_K",
    "stress_MPa",
    "model_name",
    "params",
    "verdict",
    "r2",
    "n_points",
];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("paper {0} already stored")]
    DuplicateDoi(String),
    #[error("no paper with doi {0}")]
    UnknownDoi(String),
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("no record with id {0}")]
    UnknownRecord(i64),
    #[error("record {record_id} is {verdict}, only Flagged records can be reviewed")]
    NotReviewable { record_id: i64, verdict: Verdict },
    #[error("invalid filter: {field}: {message}")]
    InvalidFilter { field: &'static str, message: String },
    #[error("unsupported export schema version {0}")]
    SchemaVersion(u32),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("database: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRow {
    pub doi: String,
    pub title: String,
    pub authors: Vec<String>,
    pub year: i32,
    pub source_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamValue {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreepRecord {
    /// Assigned by the store; ignored on insert.
    pub record_id: i64,
    pub doi: String,
    pub material: String,
    pub category: String,
    pub temperature_k: f64,
    pub stress_mpa: f64,
    pub model_name: String,
    pub equation: String,
    pub bindings: Vec<SymbolBinding>,
    pub params: Vec<ParamValue>,
    pub params_source: String,
    pub curve: Vec<(f64, f64)>,
    pub verdict: Verdict,
    pub r2: Option<f64>,
    pub evidence: Evidence,
    /// Serialized validation report.
    pub report: Option<serde_json::Value>,
}

impl CreepRecord {
    pub fn params_text(&self) -> String {
        self.params
            .iter()
            .map(|p| format!("{}={}", p.name, p.value))
            .collect::<Vec<_>>()
            .join(";")
    }

    fn check(&self) -> Result<()> {
        let fail = |m: String| Err(StoreError::ConstraintViolation(m));
        if self.doi.trim().is_empty() {
            return fail("doi must not be empty".into());
        }
        if !(self.temperature_k.is_finite() && self.temperature_k > 0.0) {
            return fail(format!("temperature {} K must be positive", self.temperature_k));
        }
        if !(self.stress_mpa.is_finite() && self.stress_mpa >= 0.0) {
            return fail(format!("stress {} MPa must be non-negative", self.stress_mpa));
        }
        if !CATEGORY_VOCABULARY.contains(&self.category.as_str()) {
            return fail(format!("unknown category {:?}", self.category));
        }
        if self.verdict == Verdict::Rejected {
            return fail("rejected entries belong in the audit table".into());
        }
        if self.r2.is_some_and(|r| !r.is_finite()) {
            return fail("r2 must be finite".into());
        }
        Ok(())
    }
}

/// Entry that failed validation or was rejected in review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedEntry {
    pub rejection_id: i64,
    pub bundle_id: String,
    pub doi: String,
    pub stage: String,
    pub reason: String,
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewKind {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewAction {
    pub record_id: i64,
    pub action: ReviewKind,
    #[serde(default)]
    pub note: String,
    /// Seconds since the Unix epoch.
    #[serde(default)]
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub entry_id: i64,
    pub record_id: i64,
    pub action: ReviewKind,
    pub from_verdict: Verdict,
    pub to_verdict: Verdict,
    pub note: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecordFilter {
    pub material: Option<String>,
    pub category: Option<String>,
    pub temperature_k: Option<(f64, f64)>,
    pub stress_mpa: Option<(f64, f64)>,
    pub verdicts: Option<Vec<Verdict>>,
}

impl RecordFilter {
    pub fn validate(&self) -> Result<()> {
        for (field, range) in [("temperature_K", self.temperature_k), ("stress_MPa", self.stress_mpa)] {
            if let Some((lo, hi)) = range {
                if lo.is_nan() || hi.is_nan() {
                    return Err(StoreError::InvalidFilter {
                        field,
                        message: "bounds must be numbers".into(),
                    });
                }
                if lo > hi {
                    return Err(StoreError::InvalidFilter {
                        field,
                        message: format!("min {lo} exceeds max {hi}"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataExport {
    pub schema_version: u32,
    pub papers: Vec<PaperRow>,
    pub records: Vec<CreepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub temperature_edges: Vec<f64>,
    pub stress_edges: Vec<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            temperature_edges: (2..=16).map(|i| i as f64 * 100.0).collect(),
            stress_edges: vec![0.0, 10.0, 25.0, 50.0, 100.0, 200.0, 400.0, 800.0, 1600.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Values outside the outermost edges.
    pub outside: usize,
}

impl Histogram {
    /// Bins are half-open except the last, which includes its upper edge.
    pub fn build(edges: &[f64], values: impl IntoIterator<Item = f64>) -> Histogram {
        let bins = edges.len().saturating_sub(1);
        let mut counts = vec![0; bins];
        let mut outside = 0;
        for v in values {
            let idx = if bins == 0 || v < edges[0] || v > edges[bins] {
                None
            } else if v == edges[bins] {
                Some(bins - 1)
            } else {
                Some(edges.partition_point(|e| *e <= v) - 1)
            };
            match idx {
                Some(i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        Histogram {
            edges: edges.to_vec(),
            counts,
            outside,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreStats {
    pub total: usize,
    pub category_counts: BTreeMap<String, usize>,
    pub category_shares: BTreeMap<String, f64>,
    pub temperature_histogram: Histogram,
    pub stress_histogram: Histogram,
    /// (temperature K, stress MPa) per category.
    pub scatter: BTreeMap<String, Vec<(f64, f64)>>,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS papers (
    doi TEXT PRIMARY KEY CHECK (length(doi) > 0),
    title TEXT NOT NULL,
    authors TEXT NOT NULL,
    year INTEGER NOT NULL,
    source_path TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS creep_records (
    record_id INTEGER PRIMARY KEY AUTOINCREMENT,
    doi TEXT NOT NULL REFERENCES papers(doi),
    material TEXT NOT NULL,
    category TEXT NOT NULL,
    temperature_k REAL NOT NULL CHECK (temperature_k > 0),
    stress_mpa REAL NOT NULL CHECK (stress_mpa >= 0),
    model_name TEXT NOT NULL,
    equation TEXT NOT NULL,
    bindings TEXT NOT NULL,
    params TEXT NOT NULL,
    params_source TEXT NOT NULL,
    curve TEXT NOT NULL,
    verdict TEXT NOT NULL CHECK (verdict IN ('Valid', 'Valid-TextOnly', 'Flagged')),
    r2 REAL,
    evidence TEXT NOT NULL,
    report TEXT
);
CREATE TABLE IF NOT EXISTS rejected (
    rejection_id INTEGER PRIMARY KEY,
    bundle_id TEXT NOT NULL,
    doi TEXT NOT NULL,
    stage TEXT NOT NULL,
    reason TEXT NOT NULL,
    payload TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS audit_log (
    entry_id INTEGER PRIMARY KEY,
    record_id INTEGER NOT NULL,
    action TEXT NOT NULL,
    from_verdict TEXT NOT NULL,
    to_verdict TEXT NOT NULL,
    note TEXT NOT NULL,
    timestamp INTEGER NOT NULL
);
";

const RECORD_COLUMNS: &str = "record_id, doi, material, category, temperature_k, stress_mpa, model_name, equation, \
                              bindings, params, params_source, curve, verdict, r2, evidence, report";

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn from_json<T: serde::de::DeserializeOwned>(text: &str, col: usize) -> rusqlite::Result<T> {
    serde_json::from_str(text)
        .map_err(|e| rusqlite::Error::FromSqlConversionFailure(col, rusqlite::types::Type::Text, Box::new(e)))
}

fn verdict_from(text: &str, col: usize) -> rusqlite::Result<Verdict> {
    Verdict::parse(text).ok_or_else(|| {
        rusqlite::Error::FromSqlConversionFailure(
            col,
            rusqlite::types::Type::Text,
            format!("unknown verdict {text}").into(),
        )
    })
}

fn record_from_row(row: &Row<'_>) -> rusqlite::Result<CreepRecord> {
    let report: Option<String> = row.get(15)?;
    Ok(CreepRecord {
        record_id: row.get(0)?,
        doi: row.get(1)?,
        material: row.get(2)?,
        category: row.get(3)?,
        temperature_k: row.get(4)?,
        stress_mpa: row.get(5)?,
        model_name: row.get(6)?,
        equation: row.get(7)?,
        bindings: from_json(&row.get::<_, String>(8)?, 8)?,
        params: from_json(&row.get::<_, String>(9)?, 9)?,
        params_source: row.get(10)?,
        curve: from_json(&row.get::<_, String>(11)?, 11)?,
        verdict: verdict_from(&row.get::<_, String>(12)?, 12)?,
        r2: row.get(13)?,
        evidence: from_json(&row.get::<_, String>(14)?, 14)?,
        report: report.map(|r| from_json(&r, 15)).transpose()?,
    })
}

fn review_kind(text: &str) -> ReviewKind {
    if text == "approve" {
        ReviewKind::Approve
    } else {
        ReviewKind::Reject
    }
}

pub struct Store {
    conn: Connection,
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> Result<Store> {
        Store::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Store> {
        Store::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Store> {
        conn.execute_batch("PRAGMA foreign_keys = ON;")?;
        conn.execute_batch(SCHEMA)?;
        let version: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'schema_version'", [], |r| r.get(0))
            .optional()?;
        match version {
            None => {
                conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?1)",
                    [SCHEMA_VERSION.to_string()],
                )?;
            }
            Some(v) if v != SCHEMA_VERSION.to_string() => {
                return Err(StoreError::SchemaVersion(v.parse().unwrap_or(0)));
            }
            Some(_) => {}
        }
        Ok(Store { conn })
    }

    pub fn insert_paper(&mut self, row: &PaperRow) -> Result<()> {
        if row.doi.trim().is_empty() {
            return Err(StoreError::ConstraintViolation("doi must not be empty".into()));
        }
        if self.paper(&row.doi)?.is_some() {
            return Err(StoreError::DuplicateDoi(row.doi.clone()));
        }
        self.conn.execute(
            "INSERT INTO papers (doi, title, authors, year, source_path) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![row.doi, row.title, to_json(&row.authors), row.year, row.source_path],
        )?;
        Ok(())
    }

    pub fn paper(&self, doi: &str) -> Result<Option<PaperRow>> {
        Ok(self
            .conn
            .query_row(
                "SELECT doi, title, authors, year, source_path FROM papers WHERE doi = ?1",
                [doi],
                |r| {
                    Ok(PaperRow {
                        doi: r.get(0)?,
                        title: r.get(1)?,
                        authors: from_json(&r.get::<_, String>(2)?, 2)?,
                        year: r.get(3)?,
                        source_path: r.get(4)?,
                    })
                },
            )
            .optional()?)
    }

    pub fn papers(&self) -> Result<Vec<PaperRow>> {
        let mut stmt = self.conn.prepare("SELECT doi FROM papers ORDER BY doi")?;
        let dois: Vec<String> = stmt.query_map([], |r| r.get(0))?.collect::<rusqlite::Result<_>>()?;
        dois.iter().map(|d| Ok(self.paper(d)?.expect("listed paper exists"))).collect()
    }

    pub fn insert_record(&mut self, rec: &CreepRecord) -> Result<i64> {
        self.insert_record_with_id(rec, None)
    }

    fn insert_record_with_id(&mut self, rec: &CreepRecord, id: Option<i64>) -> Result<i64> {
        rec.check()?;
        if self.paper(&rec.doi)?.is_none() {
            return Err(StoreError::UnknownDoi(rec.doi.clone()));
        }
        self.conn.execute(
            &format!(
                "INSERT INTO creep_records ({RECORD_COLUMNS}) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15, ?16)"
            ),
            params![
                id,
                rec.doi,
                rec.material,
                rec.category,
                rec.temperature_k,
                rec.stress_mpa,
                rec.model_name,
                rec.equation,
                to_json(&rec.bindings),
                to_json(&rec.params),
                rec.params_source,
                to_json(&rec.curve),
                rec.verdict.as_str(),
                rec.r2,
                to_json(&rec.evidence),
                rec.report.as_ref().map(to_json),
            ],
        )?;
        Ok(self.conn.last_insert_rowid())
    }

    pub fn record(&self, record_id: i64) -> Result<Option<CreepRecord>> {
        Ok(self
            .conn
            .query_row(
                &format!("SELECT {RECORD_COLUMNS} FROM creep_records WHERE record_id = ?1"),
                [record_id],
                record_from_row,
            )
            .optional()?)
    }

    pub fn query(&self, filter: &RecordFilter) -> Result<Vec<CreepRecord>> {
        filter.validate()?;
        let mut clauses: Vec<String> = Vec::new();
        let mut args: Vec<rusqlite::types::Value> = Vec::new();
        let mut bind = |clause: &str, v: rusqlite::types::Value, args: &mut Vec<rusqlite::types::Value>| {
            args.push(v);
            clauses.push(clause.replace('?', &format!("?{}", args.len())));
        };
        if let Some(m) = &filter.material {
            bind("instr(lower(material), lower(?)) > 0", m.clone().into(), &mut args);
        }
        if let Some(c) = &filter.category {
            bind("category = ?", c.clone().into(), &mut args);
        }
        if let Some((lo, hi)) = filter.temperature_k {
            bind("temperature_k >= ?", lo.into(), &mut args);
            bind("temperature_k <= ?", hi.into(), &mut args);
        }
        if let Some((lo, hi)) = filter.stress_mpa {
            bind("stress_mpa >= ?", lo.into(), &mut args);
            bind("stress_mpa <= ?", hi.into(), &mut args);
        }
        if let Some(vs) = &filter.verdicts {
            if vs.is_empty() {
                clauses.push("0".into());
            } else {
                let mut alts = Vec::new();
                for v in vs {
                    args.push(v.as_str().to_string().into());
                    alts.push(format!("verdict = ?{}", args.len()));
                }
                clauses.push(format!("({})", alts.join(" OR ")));
            }
        }
        let where_clause = if clauses.is_empty() {
            String::new()
        } else {
            format!("WHERE {}", clauses.join(" AND "))
        };
        let mut stmt = self
            .conn
            .prepare(&format!("SELECT {RECORD_COLUMNS} FROM creep_records {where_clause} ORDER BY doi, record_id"))?;
        let rows = stmt.query_map(rusqlite::params_from_iter(args), record_from_row)?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn insert_rejected(&mut self, bundle_id: &str, doi: &str, stage: &str, reason: &str, payload: &serde_json::Value) -> Result<i64> {
        self.conn.execute(
            "INSERT INTO rejected (bundle_id, doi, stage, reason, payload) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![bundle_id, doi, stage, reason, to_json(payload)],
        )?;
        Ok(self.conn.last_insert_rowid())
    }

    pub fn rejected(&self) -> Result<Vec<RejectedEntry>> {
        let mut stmt = self
            .conn
            .prepare("SELECT rejection_id, bundle_id, doi, stage, reason, payload FROM rejected ORDER BY rejection_id")?;
        let rows = stmt.query_map([], |r| {
            Ok(RejectedEntry {
                rejection_id: r.get(0)?,
                bundle_id: r.get(1)?,
                doi: r.get(2)?,
                stage: r.get(3)?,
                reason: r.get(4)?,
                payload: from_json(&r.get::<_, String>(5)?, 5)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    /// Apply a human decision to a Flagged record. Approval promotes it to
    /// Valid; rejection moves it to the rejected table.
    pub fn review(&mut self, action: &ReviewAction) -> Result<CreepRecord> {
        let mut rec = self.record(action.record_id)?.ok_or(StoreError::UnknownRecord(action.record_id))?;
        if rec.verdict != Verdict::Flagged {
            return Err(StoreError::NotReviewable {
                record_id: rec.record_id,
                verdict: rec.verdict,
            });
        }
        let tx = self.conn.transaction()?;
        let (kind, to) = match action.action {
            ReviewKind::Approve => {
                rec.params_source = format!("{}+{HUMAN_APPROVED}", rec.params_source);
                rec.verdict = Verdict::Valid;
                tx.execute(
                    "UPDATE creep_records SET verdict = ?1, params_source = ?2 WHERE record_id = ?3",
                    params![rec.verdict.as_str(), rec.params_source, rec.record_id],
                )?;
                ("approve", Verdict::Valid)
            }
            ReviewKind::Reject => {
                rec.verdict = Verdict::Rejected;
                tx.execute(
                    "INSERT INTO rejected (bundle_id, doi, stage, reason, payload) VALUES (?1, ?2, 'review', ?3, ?4)",
                    params![
                        format!("record-{}", rec.record_id),
                        rec.doi,
                        action.note,
                        to_json(&rec)
                    ],
                )?;
                tx.execute("DELETE FROM creep_records WHERE record_id = ?1", [rec.record_id])?;
                ("reject", Verdict::Rejected)
            }
        };
        tx.execute(
            "INSERT INTO audit_log (record_id, action, from_verdict, to_verdict, note, timestamp) \
             VALUES (?1, ?2, 'Flagged', ?3, ?4, ?5)",
            params![rec.record_id, kind, to.as_str(), action.note, action.timestamp],
        )?;
        tx.commit()?;
        Ok(rec)
    }

    pub fn audit_log(&self) -> Result<Vec<AuditEntry>> {
        let mut stmt = self.conn.prepare(
            "SELECT entry_id, record_id, action, from_verdict, to_verdict, note, timestamp FROM audit_log ORDER BY entry_id",
        )?;
        let rows = stmt.query_map([], |r| {
            Ok(AuditEntry {
                entry_id: r.get(0)?,
                record_id: r.get(1)?,
                action: review_kind(&r.get::<_, String>(2)?),
                from_verdict: verdict_from(&r.get::<_, String>(3)?, 3)?,
                to_verdict: verdict_from(&r.get::<_, String>(4)?, 4)?,
                note: r.get(5)?,
                timestamp: r.get(6)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    /// Valid records lacking evidence or an r2 above the threshold.
    /// Human-approved records are exempt from the r2 requirement.
    pub fn audit_violations(&self, valid_threshold: f64) -> Result<Vec<i64>> {
        let filter = RecordFilter {
            verdicts: Some(vec![Verdict::Valid]),
            ..Default::default()
        };
        Ok(self
            .query(&filter)?
            .into_iter()
            .filter(|r| {
                let approved = r.params_source.contains(HUMAN_APPROVED);
                r.evidence.is_empty() || (!approved && !r.r2.is_some_and(|v| v > valid_threshold))
            })
            .map(|r| r.record_id)
            .collect())
    }

    /// Records whose DOI has no paper row; empty while foreign keys hold.
    pub fn orphan_records(&self) -> Result<Vec<i64>> {
        let mut stmt = self.conn.prepare(
            "SELECT record_id FROM creep_records WHERE doi NOT IN (SELECT doi FROM papers) ORDER BY record_id",
        )?;
        let rows = stmt.query_map([], |r| r.get(0))?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    pub fn export(&self, filter: &RecordFilter, format: ExportFormat) -> Result<Vec<u8>> {
        let records = self.query(filter)?;
        match format {
            ExportFormat::Csv => Ok(records_to_csv(&records)),
            ExportFormat::Data => {
                let mut dois: Vec<&String> = records.iter().map(|r| &r.doi).collect();
                dois.dedup();
                let papers = dois
                    .into_iter()
                    .filter_map(|d| self.paper(d).transpose())
                    .collect::<Result<Vec<_>>>()?;
                let export = DataExport {
                    schema_version: SCHEMA_VERSION,
                    papers,
                    records,
                };
                let mut out = serde_json::to_vec_pretty(&export).expect("serializable");
                out.push(b'\n');
                Ok(out)
            }
        }
    }

    /// Write the csv export plus one curve file per record into `dir`.
    pub fn export_to_dir(&self, filter: &RecordFilter, dir: &Path) -> Result<usize> {
        let records = self.query(filter)?;
        fs::create_dir_all(dir.join("curves"))?;
        fs::write(dir.join("records.csv"), records_to_csv(&records))?;
        for r in &records {
            fs::write(dir.join("curves").join(format!("record_{}.csv", r.record_id)), curve_csv(&r.curve))?;
        }
        Ok(records.len())
    }

    /// Load a structured-text export, keeping record ids. Papers already
    /// present with identical content are accepted.
    pub fn import_data(&mut self, bytes: &[u8]) -> Result<usize> {
        let data: DataExport = serde_json::from_slice(bytes).map_err(|e| StoreError::Format(e.to_string()))?;
        if data.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersion(data.schema_version));
        }
        for p in &data.papers {
            match self.paper(&p.doi)? {
                Some(existing) if existing == *p => {}
                Some(_) => return Err(StoreError::DuplicateDoi(p.doi.clone())),
                None => self.insert_paper(p)?,
            }
        }
        for r in &data.records {
            if self.record(r.record_id)?.is_some() {
                return Err(StoreError::ConstraintViolation(format!("record id {} already used", r.record_id)));
            }
            self.insert_record_with_id(r, Some(r.record_id))?;
        }
        Ok(data.records.len())
    }

    pub fn stats(&self, filter: &RecordFilter, config: &StatsConfig) -> Result<StoreStats> {
        let records = self.query(filter)?;
        let total = records.len();
        let mut category_counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut scatter: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &records {
            *category_counts.entry(r.category.clone()).or_default() += 1;
            scatter.entry(r.category.clone()).or_default().push((r.temperature_k, r.stress_mpa));
        }
        let category_shares = category_counts
            .iter()
            .map(|(k, n)| (k.clone(), *n as f64 / total as f64))
            .collect();
        Ok(StoreStats {
            total,
            category_counts,
            category_shares,
            temperature_histogram: Histogram::build(&config.temperature_edges, records.iter().map(|r| r.temperature_k)),
            stress_histogram: Histogram::build(&config.stress_edges, records.iter().map(|r| r.stress_mpa)),
            scatter,
        })
    }

    pub fn count_records(&self) -> Result<usize> {
        Ok(self.conn.query_row("SELECT COUNT(*) FROM creep_records", [], |r| r.get::<_, i64>(0))? as usize)
    }
}

pub fn records_to_csv(records: &[CreepRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.record_id.to_string(),
            r.doi.clone(),
            r.material.clone(),
            r.category.clone(),
            r.temperature_k.to_string(),
            r.stress_mpa.to_string(),
            r.model_name.clone(),
            r.params_text(),
            r.verdict.as_str().to_string(),
            r.r2.map(|v| v.to_string()).unwrap_or_default(),
            r.curve.len().to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn curve_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("time_s,strain\n");
    for (t, e) in points {
        out.push_str(&format!("{t},{e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper(doi: &str) -> PaperRow {
        PaperRow {
            doi: doi.into(),
            title: "t".into(),
            authors: vec!["A. Author".into()],
            year: 2020,
            source_path: "p".into(),
        }
    }

    pub(crate) fn record(doi: &str, category: &str, t: f64, s: f64) -> CreepRecord {
        CreepRecord {
            record_id: 0,
            doi: doi.into(),
            material: "X46Cr13".into(),
            category: category.into(),
            temperature_k: t,
            stress_mpa: s,
            model_name: "norton".into(),
            equation: "d(eps)/d(t) = B*sigma^n".into(),
            bindings: crate::models::Catalog::builtin().get("norton").unwrap().equation.bindings.clone(),
            params: vec![ParamValue {
                name: "B".into(),
                value: 1e-12,
                unit: "1/s".into(),
            }],
            params_source: "text".into(),
            curve: vec![(0.0, 0.0), (10.0, 0.001)],
            verdict: Verdict::Valid,
            r2: Some(0.99),
            evidence: Evidence {
                figure_id: Some("fig1".into()),
                text_locations: vec![],
            },
            report: None,
        }
    }

    #[test]
    fn referential_integrity_and_constraints() {
        let mut s = Store::open_in_memory().unwrap();
        assert!(matches!(s.insert_record(&record("10.1/x", "steel_iron", 873.15, 31.6)), Err(StoreError::UnknownDoi(_))));
        s.insert_paper(&paper("10.1/x")).unwrap();
        assert!(matches!(s.insert_paper(&paper("10.1/x")), Err(StoreError::DuplicateDoi(_))));
        assert!(matches!(
            s.insert_record(&record("10.1/x", "steel_iron", -5.0, 31.6)),
            Err(StoreError::ConstraintViolation(_))
        ));
        let mut rec = record("10.1/x", "steel_iron", 873.15, 31.6);
        rec.report = Some(serde_json::json!({"verdict": "Valid"}));
        let id = s.insert_record(&rec).unwrap();
        rec.record_id = id;
        assert_eq!(s.record(id).unwrap().unwrap(), rec);
    }

    #[test]
    fn rejected_ids_are_never_reused() {
        let mut s = Store::open_in_memory().unwrap();
        s.insert_paper(&paper("10.1/x")).unwrap();
        let mut rec = record("10.1/x", "steel_iron", 873.15, 31.6);
        rec.verdict = Verdict::Flagged;
        let first = s.insert_record(&rec).unwrap();
        let reject = ReviewAction {
            record_id: first,
            action: ReviewKind::Reject,
            note: String::new(),
            timestamp: 1,
        };
        s.review(&reject).unwrap();
        let second = s.insert_record(&rec).unwrap();
        assert_ne!(first, second);
        // A stale reject of the old id must not touch the new record.
        assert!(matches!(s.review(&reject), Err(StoreError::UnknownRecord(_))));
    }

    #[test]
    fn query_examples() {
        let mut s = Store::open_in_memory().unwrap();
        s.insert_paper(&paper("10.1/x")).unwrap();
        s.insert_record(&record("10.1/x", "steel_iron", 873.15, 31.6)).unwrap();
        s.insert_record(&record("10.1/x", "steel_iron", 923.15, 52.7)).unwrap();
        assert_eq!(s.query(&RecordFilter::default()).unwrap().len(), 2);
        let f = RecordFilter {
            material: Some("x46cr13".into()),
            temperature_k: Some((870.0, 880.0)),
            ..Default::default()
        };
        let hits = s.query(&f).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].temperature_k, 873.15);
        let f = RecordFilter {
            stress_mpa: Some((1e6, 2e6)),
            ..Default::default()
        };
        assert!(s.query(&f).unwrap().is_empty());
        let bad = RecordFilter {
            temperature_k: Some((900.0, 100.0)),
            ..Default::default()
        };
        assert!(matches!(s.query(&bad), Err(StoreError::InvalidFilter { field: "temperature_K", .. })));
    }

    #[test]
    fn empty_store_exports_and_stats() {
        let s = Store::open_in_memory().unwrap();
        let csv = s.export(&RecordFilter::default(), ExportFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
        let st = s.stats(&RecordFilter::default(), &StatsConfig::default()).unwrap();
        assert_eq!(st.total, 0);
        assert!(st.category_shares.is_empty());
    }

    #[test]
    fn category_shares() {
        let mut s = Store::open_in_memory().unwrap();
        s.insert_paper(&paper("10.1/x")).unwrap();
        for c in ["nickel_alloy", "nickel_alloy", "steel_iron", "steel_iron"] {
            s.insert_record(&record("10.1/x", c, 900.0, 100.0)).unwrap();
        }
        let st = s.stats(&RecordFilter::default(), &StatsConfig::default()).unwrap();
        assert_eq!(st.category_shares["nickel_alloy"], 0.5);
        assert_eq!(st.category_shares["steel_iron"], 0.5);
    }

    #[test]
    fn review_state_machine() {
        let mut s = Store::open_in_memory().unwrap();
        s.insert_paper(&paper("10.1/x")).unwrap();
        let mut flagged = record("10.1/x", "polymer", 300.0, 5.0);
        flagged.verdict = Verdict::Flagged;
        flagged.r2 = Some(0.7);
        let a = s.insert_record(&flagged).unwrap();
        let b = s.insert_record(&flagged).unwrap();
        let approve = ReviewAction {
            record_id: a,
            action: ReviewKind::Approve,
            note: "ok".into(),
            timestamp: 1,
        };
        let rec = s.review(&approve).unwrap();
        assert_eq!(rec.verdict, Verdict::Valid);
        assert_eq!(rec.params_source, "text+human-approved");
        assert!(matches!(s.review(&approve), Err(StoreError::NotReviewable { .. })));
        let reject = ReviewAction {
            record_id: b,
            action: ReviewKind::Reject,
            note: "bad curve".into(),
            timestamp: 2,
        };
        s.review(&reject).unwrap();
        assert!(s.record(b).unwrap().is_none());
        assert_eq!(s.rejected().unwrap()[0].stage, "review");
        assert!(matches!(s.review(&reject), Err(StoreError::UnknownRecord(_))));
        let log = s.audit_log().unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!((log[0].to_verdict, log[1].to_verdict), (Verdict::Valid, Verdict::Rejected));
        assert!(s.audit_violations(0.9).unwrap().is_empty());
    }

    #[test]
    fn histogram_edges() {
        let h = Histogram::build(&[0.0, 1.0, 2.0], [0.0, 0.5, 1.0, 2.0, 2.5, -1.0]);
        assert_eq!(h.counts, vec![2, 2]);
        assert_eq!(h.outside, 2);
    }

    #[test]
    fn params_text_joined() {
        let mut r = record("d", "other", 1.0, 0.0);
        r.params.push(ParamValue {
            name: "n".into(),
            value: 4.5,
            unit: "1".into(),
        });
        assert_eq!(r.params_text(), "B=0.000000000001;n=4.5");
    }
}
