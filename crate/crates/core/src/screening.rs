//! Conjunctive relevance gate and the retrieval metrics harness.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::backend::ReasoningBackend;
use crate::corpus::DocumentBundle;
use crate::skills::{domain_filter, invoke_skill, ExecutionLog, Skill, SkillError, ToolBox};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScreeningError {
    #[error("metric undefined: {0} has a zero denominator")]
    UndefinedMetric(&'static str),
    #[error("no ground truth for bundle '{0}'")]
    MissingTruth(String),
    #[error("bundle has no pages")]
    NoPages,
    #[error(transparent)]
    Backend(#[from] SkillError),
    #[error("csv: {0}")]
    Csv(String),
}

/// `pass` is always `has_data && has_equation`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScreeningDecision {
    pub bundle_id: String,
    pub has_data: bool,
    pub has_equation: bool,
    pass: bool,
    pub rationale: String,
}

impl ScreeningDecision {
    pub fn new(bundle_id: &str, has_data: bool, has_equation: bool, rationale: &str) -> Self {
        let pass = has_data && has_equation;
        let mut rationale = rationale.trim().to_string();
        if !pass && rationale.is_empty() {
            rationale = match (has_data, has_equation) {
                (false, false) => "missing experimental data and explicit equation".into(),
                (false, true) => "missing experimental data".into(),
                _ => "missing explicit constitutive equation".into(),
            };
        }
        ScreeningDecision {
            bundle_id: bundle_id.to_string(),
            has_data,
            has_equation,
            pass,
            rationale,
        }
    }

    pub fn pass(&self) -> bool {
        self.pass
    }
}

impl<'de> Deserialize<'de> for ScreeningDecision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            bundle_id: String,
            has_data: bool,
            has_equation: bool,
            #[serde(default)]
            rationale: String,
        }
        let r = Raw::deserialize(d)?;
        Ok(ScreeningDecision::new(&r.bundle_id, r.has_data, r.has_equation, &r.rationale))
    }
}

/// Run the Domain Filter skill on a bundle.
pub fn screen(
    bundle: &DocumentBundle,
    backend: &dyn ReasoningBackend,
    skill: &Skill,
    log: &ExecutionLog,
) -> Result<ScreeningDecision, ScreeningError> {
    if bundle.pages.is_empty() {
        return Err(ScreeningError::NoPages);
    }
    let text = bundle.full_text();
    let tools = ToolBox::new().with("read_pages", |args| {
        let page = args.get("page").and_then(|p| p.as_u64());
        match page {
            Some(p) => bundle
                .pages
                .get((p as usize).saturating_sub(1))
                .map(|t| json!(t))
                .ok_or_else(|| format!("page {p} out of range")),
            None => Ok(json!(text)),
        }
    });
    let context = json!({
        "bundle_id": bundle.id,
        "title": bundle.title,
        "text": text,
    });
    let inv = invoke_skill(skill, &context, backend, &tools, log)?;
    let v = &inv.value;
    Ok(ScreeningDecision::new(
        &bundle.id,
        v["has_data"].as_bool().unwrap_or(false),
        v["has_equation"].as_bool().unwrap_or(false),
        v.get("rationale").and_then(|r| r.as_str()).unwrap_or(""),
    ))
}

/// Convenience wrapper using the default Domain Filter skill.
pub fn screen_default(
    bundle: &DocumentBundle,
    backend: &dyn ReasoningBackend,
    log: &ExecutionLog,
) -> Result<ScreeningDecision, ScreeningError> {
    screen(bundle, backend, &domain_filter(), log)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(decisions: &[ScreeningDecision], truth: &BTreeMap<String, bool>) -> Result<ConfusionCounts, ScreeningError> {
    let mut c = ConfusionCounts::default();
    for d in decisions {
        let relevant = *truth
            .get(&d.bundle_id)
            .ok_or_else(|| ScreeningError::MissingTruth(d.bundle_id.clone()))?;
        match (d.pass(), relevant) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn precision(c: &ConfusionCounts) -> Result<f64, ScreeningError> {
    let d = c.tp + c.fp;
    if d == 0 {
        return Err(ScreeningError::UndefinedMetric("precision"));
    }
    Ok(c.tp as f64 / d as f64)
}

pub fn recall(c: &ConfusionCounts) -> Result<f64, ScreeningError> {
    let d = c.tp + c.fn_;
    if d == 0 {
        return Err(ScreeningError::UndefinedMetric("recall"));
    }
    Ok(c.tp as f64 / d as f64)
}

/// Harmonic mean of a precision and a recall value.
pub fn f1_from(p: f64, r: f64) -> Result<f64, ScreeningError> {
    if p + r == 0.0 {
        return Err(ScreeningError::UndefinedMetric("f1"));
    }
    Ok(2.0 * p * r / (p + r))
}

pub fn f1(c: &ConfusionCounts) -> Result<f64, ScreeningError> {
    f1_from(precision(c)?, recall(c)?)
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64, ScreeningError> {
    let d = c.total();
    if d == 0 {
        return Err(ScreeningError::UndefinedMetric("accuracy"));
    }
    Ok((c.tp + c.tn) as f64 / d as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub confusion: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

impl MetricsReport {
    pub fn from_counts(c: ConfusionCounts) -> Self {
        MetricsReport {
            confusion: c,
            precision: precision(&c).ok(),
            recall: recall(&c).ok(),
            f1: f1(&c).ok(),
            accuracy: accuracy(&c).ok(),
        }
    }

    pub fn human(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
        let c = &self.confusion;
        format!(
            "precision {}\nrecall    {}\nf1        {}\naccuracy  {}\n\n              relevant  irrelevant\npass      {:>10}  {:>10}\nreject    {:>10}  {:>10}\n",
            fmt(self.precision),
            fmt(self.recall),
            fmt(self.f1),
            fmt(self.accuracy),
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        )
    }
}

/// Ground truth rows `bundle_id,relevant` with relevant in {0,1}; a header row is optional.
pub fn read_truth(reader: impl Read) -> Result<BTreeMap<String, bool>, ScreeningError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ScreeningError::Csv(e.to_string()))?;
        let (Some(id), Some(flag)) = (rec.get(0), rec.get(1)) else {
            return Err(ScreeningError::Csv(format!("row {}: expected 2 columns", i + 1)));
        };
        match flag {
            "1" => out.insert(id.to_string(), true),
            "0" => out.insert(id.to_string(), false),
            _ if i == 0 && flag.parse::<f64>().is_err() => continue,
            other => return Err(ScreeningError::Csv(format!("row {}: relevant must be 0 or 1, got '{other}'", i + 1))),
        };
    }
    Ok(out)
}

pub const DECISIONS_HEADER: [&str; 5] = ["bundle_id", "has_data", "has_equation", "pass", "rationale"];

pub fn write_decisions(decisions: &[ScreeningDecision]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DECISIONS_HEADER).expect("in-memory write");
    for d in decisions {
        w.write_record([
            d.bundle_id.as_str(),
            if d.has_data { "1" } else { "0" },
            if d.has_equation { "1" } else { "0" },
            if d.pass() { "1" } else { "0" },
            d.rationale.as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_decisions(reader: impl Read) -> Result<Vec<ScreeningDecision>, ScreeningError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let flag = |s: Option<&str>| matches!(s, Some("1") | Some("true"));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ScreeningError::Csv(e.to_string()))?;
        let id = rec.get(0).ok_or_else(|| ScreeningError::Csv("missing bundle_id".into()))?;
        out.push(ScreeningDecision::new(id, flag(rec.get(1)), flag(rec.get(2)), rec.get(4).unwrap_or("")));
    }
    Ok(out)
}
