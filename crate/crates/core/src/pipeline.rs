//! Five-stage orchestration: collect, screen, extract, validate, store.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::{backend_from_spec, BackendError, ReasoningBackend, RemoteBackend, ScriptedBackend};
use crate::corpus::{expand_query, search_index, CorpusIndex, DocumentBundle};
use crate::curve::{CreepCurve, TraceMetadata};
use crate::digitizer::{
    calibrate_axes, default_tolerance, enforce_monotonicity, extract_series, select_target_series, ExtractOptions,
    PixelRect, Rgb, Scale, SeriesKey,
};
use crate::formula::{parse_equation, standardize, Role, SymbolBinding};
use crate::models::{Catalog, ConstitutiveModel, Values};
use crate::screening::screen;
use crate::skills::{
    data_serializer, domain_filter, invoke_skill, multimodal_parser, navigator, physics_guardrail, ExecutionLog, Skill,
    ToolBox,
};
use crate::store::{CreepRecord, ParamValue, PaperRow, Store, StoreError};
use crate::validator::{validate_entry, CandidateEntry, Evidence, Thresholds, ValidationReport, Verdict};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("store unavailable: {0}")]
    Store(#[from] StoreError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageToggles {
    /// When off, every collected document passes screening unexamined.
    pub screen: bool,
    pub extract: bool,
    pub validate: bool,
    pub store: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            screen: true,
            extract: true,
            validate: true,
            store: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryConfig {
    pub navigator: u32,
    pub domain_filter: u32,
    pub multimodal_parser: u32,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            navigator: 2,
            domain_filter: 2,
            multimodal_parser: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// `echo`, `scripted:<path>` or `remote:<url>`; overrides the fields below.
    pub spec: Option<String>,
    pub endpoint: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub scripted_path: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            spec: None,
            endpoint: None,
            model: "default".into(),
            timeout_secs: 60,
            scripted_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stages: StageToggles,
    pub max_in_flight: usize,
    pub retries: RetryConfig,
    pub thresholds: Thresholds,
    pub backend: BackendConfig,
    /// Natural-language collection query; the whole corpus when absent.
    pub collection_query: Option<String>,
    /// Fall back to the literal query when expansion fails.
    pub lenient_query: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stages: StageToggles::default(),
            max_in_flight: 4,
            retries: RetryConfig::default(),
            thresholds: Thresholds::default(),
            backend: BackendConfig::default(),
            collection_query: None,
            lenient_query: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Load a config file; a relative scripted-backend path resolves against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &cfg.backend.scripted_path {
            if p.is_relative() {
                cfg.backend.scripted_path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    fn check(&self) -> Result<(), PipelineError> {
        let t = &self.thresholds;
        if self.max_in_flight == 0 {
            return Err(PipelineError::Config("max_in_flight must be at least 1".into()));
        }
        if !(t.review < t.valid && t.valid <= 1.0) {
            return Err(PipelineError::Config("thresholds need review < valid <= 1".into()));
        }
        Ok(())
    }

    pub fn build_backend(&self) -> Result<Box<dyn ReasoningBackend>, PipelineError> {
        let b = &self.backend;
        let timeout = Duration::from_secs(b.timeout_secs);
        if let Some(spec) = &b.spec {
            return Ok(backend_from_spec(spec, &b.model, timeout)?);
        }
        if let Some(p) = &b.scripted_path {
            return Ok(Box::new(ScriptedBackend::load(p)?));
        }
        if let Some(url) = &b.endpoint {
            return Ok(Box::new(RemoteBackend::new(url, &b.model, timeout)));
        }
        Err(PipelineError::Config("no backend configured".into()))
    }

    fn skills(&self) -> Skills {
        Skills {
            navigator: navigator().with_retries(self.retries.navigator),
            filter: domain_filter().with_retries(self.retries.domain_filter),
            parser: multimodal_parser().with_retries(self.retries.multimodal_parser),
            guardrail: physics_guardrail(),
            serializer: data_serializer(),
        }
    }
}

struct Skills {
    navigator: Skill,
    filter: Skill,
    parser: Skill,
    guardrail: Skill,
    serializer: Skill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Collect,
    Screen,
    Extract,
    Validate,
    Store,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TerminalState {
    NotCollected,
    RejectedAtScreening,
    RejectedAtValidation,
    Flagged,
    Stored,
    /// A disabled stage ended processing early.
    Stopped { after: Stage },
    /// Backend or extraction failure isolated to this document.
    Errored { stage: Stage, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub persona: String,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentTrace {
    pub bundle_id: String,
    pub doi: String,
    pub stages: Vec<StageOutcome>,
    pub terminal: TerminalState,
    pub record_id: Option<i64>,
    pub report: Option<ValidationReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub collected: usize,
    pub screened_pass: usize,
    pub screened_fail: usize,
    pub extracted: usize,
    pub validated_valid: usize,
    pub validated_flagged: usize,
    pub validated_rejected: usize,
    pub stored: usize,
}

impl StageCounts {
    /// stored ≤ validated_valid ≤ extracted ≤ screened_pass ≤ collected
    pub fn is_monotone(&self) -> bool {
        self.stored <= self.validated_valid
            && self.validated_valid <= self.extracted
            && self.extracted <= self.screened_pass
            && self.screened_pass <= self.collected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub counts: StageCounts,
    pub query: Option<String>,
    pub collection_error: Option<String>,
    pub traces: Vec<DocumentTrace>,
    pub duration_ms: u128,
}

impl PipelineReport {
    pub fn failures(&self) -> usize {
        self.traces
            .iter()
            .filter(|t| matches!(t.terminal, TerminalState::Errored { .. }))
            .count()
    }

    /// Validation reports as line-delimited JSON.
    pub fn audit_lines(&self) -> String {
        self.traces
            .iter()
            .filter_map(|t| t.report.as_ref())
            .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
            .collect()
    }

    pub fn human(&self) -> String {
        let c = &self.counts;
        let mut out = format!(
            "collected={} screened_pass={} screened_fail={} extracted={} validated_valid={} validated_flagged={} \
             validated_rejected={} stored={} duration_ms={}\n",
            c.collected,
            c.screened_pass,
            c.screened_fail,
            c.extracted,
            c.validated_valid,
            c.validated_flagged,
            c.validated_rejected,
            c.stored,
            self.duration_ms
        );
        for t in &self.traces {
            let state = match &t.terminal {
                TerminalState::Errored { stage, message } => format!("errored at {stage:?}: {message}"),
                TerminalState::Stopped { after } => format!("stopped after {after:?}"),
                other => serde_json::to_value(other).expect("serializable")["state"]
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
            };
            out.push_str(&format!("{}\t{}\t{}\n", t.bundle_id, t.doi, state));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractionError {
    #[error("backend: {0}")]
    Skill(String),
    #[error("figure {0} not found in bundle")]
    UnknownFigure(String),
    #[error("unit: {0}")]
    Unit(String),
    #[error("digitizer: {0}")]
    Digitizer(String),
    #[error("equation: {0}")]
    Equation(String),
}

fn parse_color(text: &str) -> Option<Rgb> {
    let hex = text.trim().strip_prefix('#')?;
    if hex.len() != 6 {
        return None;
    }
    let c = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).ok();
    Some([c(0)?, c(2)?, c(4)?])
}

fn canonical(q: &Value) -> Result<f64, ExtractionError> {
    let v = q["value"].as_f64().unwrap_or(f64::NAN);
    let u = q["unit"].as_str().unwrap_or("1");
    standardize(v, u)
        .map(|c| c.value)
        .map_err(|e| ExtractionError::Unit(e.to_string()))
}

fn anchors(v: &Value) -> Vec<(f64, f64)> {
    v.as_array()
        .map(|a| {
            a.iter()
                .map(|p| (p["pixel"].as_f64().unwrap_or(f64::NAN), p["value"].as_f64().unwrap_or(f64::NAN)))
                .collect()
        })
        .unwrap_or_default()
}

fn scale_of(v: &Value) -> Scale {
    if v.as_str() == Some("log10") {
        Scale::Log10
    } else {
        Scale::Linear
    }
}

fn factor(unit: &str) -> Result<f64, ExtractionError> {
    standardize(1.0, unit)
        .map(|c| c.value)
        .map_err(|e| ExtractionError::Unit(e.to_string()))
}

/// Digitize the target series of the described figure into a curve in
/// seconds and strain fraction.
fn digitize(bundle: &DocumentBundle, fig: &Value, target: &str) -> Result<CreepCurve, ExtractionError> {
    let dig = |e: crate::digitizer::DigitizerError| ExtractionError::Digitizer(e.to_string());
    let figure_id = fig["figure_id"].as_str().unwrap_or_default();
    let asset = bundle
        .figure(figure_id)
        .ok_or_else(|| ExtractionError::UnknownFigure(figure_id.to_string()))?;
    let cal = calibrate_axes(
        &anchors(&fig["x_anchors"]),
        scale_of(&fig["x_scale"]),
        &anchors(&fig["y_anchors"]),
        scale_of(&fig["y_scale"]),
    )
    .map_err(dig)?;
    let series = fig["series"].as_array().cloned().unwrap_or_default();
    let mut keys = Vec::new();
    let mut labels = Vec::new();
    for s in &series {
        let color = s["color"].as_str().unwrap_or_default();
        let rgb = parse_color(color).ok_or_else(|| ExtractionError::Digitizer(format!("bad series color '{color}'")))?;
        keys.push(SeriesKey::new(rgb));
        labels.push(s["label"].as_str().unwrap_or_default().to_string());
    }
    let area = fig.get("plot_area").filter(|a| a.is_object()).map(|a| PixelRect {
        left: a["left"].as_u64().unwrap_or(0) as u32,
        top: a["top"].as_u64().unwrap_or(0) as u32,
        right: a["right"].as_u64().unwrap_or(0) as u32,
        bottom: a["bottom"].as_u64().unwrap_or(0) as u32,
    });
    let options = ExtractOptions {
        plot_area: area,
        ..Default::default()
    };
    let traces = extract_series(&asset.image, &cal, &keys, &options).map_err(dig)?;
    let idx = if traces.len() == 1 {
        0
    } else {
        select_target_series(&traces, &labels, target).map_err(dig)?
    };
    let full = PixelRect {
        left: 0,
        top: 0,
        right: asset.image.width().saturating_sub(1),
        bottom: asset.image.height().saturating_sub(1),
    };
    let tol = default_tolerance(&cal, area.unwrap_or(full));
    let (clean, flags) = enforce_monotonicity(&traces[idx], tol).map_err(dig)?;
    let tf = factor(fig["time_unit"].as_str().unwrap_or("s"))?;
    let sf = factor(fig["strain_unit"].as_str().unwrap_or("1"))?;
    let points = clean.points.iter().map(|(t, e)| (t * tf, e * sf)).collect();
    let meta = TraceMetadata {
        figure_id: figure_id.to_string(),
        series_key: clean.series_key.clone(),
        calibration: cal.describe(),
        quality: clean.quality,
    };
    Ok(CreepCurve::new(points)
        .map_err(|e| ExtractionError::Digitizer(e.to_string()))?
        .with_source(meta, flags))
}

/// Parsed parser output: the candidate plus the unit each parameter was
/// reported in.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub entry: CandidateEntry,
    pub param_units: BTreeMap<String, String>,
}

/// Run the MultiModal Parser on a bundle and assemble a candidate entry.
pub fn extract_candidate(
    bundle: &DocumentBundle,
    backend: &dyn ReasoningBackend,
    skill: &Skill,
    catalog: &Catalog,
    log: &ExecutionLog,
) -> Result<Extraction, ExtractionError> {
    let figures: Vec<Value> = bundle
        .figures
        .iter()
        .map(|f| json!({"figure_id": f.figure_id, "caption": f.caption, "width": f.image.width(), "height": f.image.height()}))
        .collect();
    let context = json!({
        "bundle_id": bundle.id,
        "title": bundle.title,
        "text": bundle.full_text(),
        "figures": figures,
    });
    let tools = ToolBox::new()
        .with("read_pages", |args| {
            let p = args.get("page").and_then(|p| p.as_u64()).unwrap_or(1) as usize;
            bundle
                .pages
                .get(p.saturating_sub(1))
                .map(|t| json!(t))
                .ok_or_else(|| format!("page {p} out of range"))
        })
        .with("figure_info", |args| {
            let id = args.get("figure_id").and_then(|v| v.as_str()).unwrap_or_default();
            bundle
                .figure(id)
                .map(|f| json!({"figure_id": id, "caption": f.caption, "width": f.image.width(), "height": f.image.height()}))
                .ok_or_else(|| format!("no figure {id}"))
        });
    let out = invoke_skill(skill, &context, backend, &tools, log)
        .map_err(|e| ExtractionError::Skill(e.to_string()))?
        .value;
    let temperature_k = canonical(&out["temperature"])?;
    let stress_mpa = canonical(&out["stress"])?;

    let mut equation = None;
    let mut bindings = Vec::new();
    let mut model: Option<ConstitutiveModel> = None;
    let mut text_params = Values::new();
    let mut param_units = BTreeMap::new();
    if let Some(m) = out.get("model").filter(|m| m.is_object()) {
        equation = m["equation"].as_str().map(str::to_string);
        let known = m["name"].as_str().and_then(|n| catalog.get(n).ok()).cloned();
        for b in m["bindings"].as_array().into_iter().flatten() {
            let role = Role::from_str_opt(b["role"].as_str().unwrap_or_default());
            let (Some(sym), Some(role), Some(unit)) = (b["symbol"].as_str(), role, b["unit"].as_str()) else {
                continue;
            };
            bindings.push(SymbolBinding::new(sym, role, unit).map_err(|e| ExtractionError::Unit(e.to_string()))?);
        }
        if bindings.is_empty() {
            if let Some(k) = &known {
                bindings = k.equation.bindings.clone();
            }
        }
        for p in m["parameters"].as_array().into_iter().flatten() {
            let (Some(name), Some(value)) = (p["name"].as_str(), p["value"].as_f64()) else {
                continue;
            };
            let unit = p["unit"].as_str().unwrap_or("1");
            // Units with symbolic exponents have no numeric factor; those
            // values are taken as already canonical.
            let v = standardize(value, unit).map(|c| c.value).unwrap_or(value);
            text_params.insert(name.to_string(), v);
            param_units.insert(name.to_string(), unit.to_string());
        }
        model = known;
    }
    if let (Some(text), None) = (&equation, &model) {
        // Derived models only when the equation already parses; otherwise the
        // completeness leg reports the problem.
        if let Ok((lhs, rhs)) = parse_equation(text) {
            if let Ok(eq) = crate::formula::Equation::new(lhs, rhs, bindings.clone()) {
                model = ConstitutiveModel::from_equation("extracted", eq).ok();
            }
        }
    }

    let target = out
        .get("target_condition")
        .and_then(|t| t.as_str())
        .map(str::to_string)
        .unwrap_or_else(|| format!("{stress_mpa} MPa"));
    let curve = match out.get("figure").filter(|f| f.is_object()) {
        Some(fig) => Some(digitize(bundle, fig, &target)?),
        None => None,
    };
    let evidence = Evidence {
        figure_id: curve.as_ref().and_then(|c| c.source.as_ref()).map(|s| s.figure_id.clone()),
        text_locations: out["text_locations"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
            .unwrap_or_default(),
    };
    if equation.is_none() && curve.is_none() {
        return Err(ExtractionError::Equation("neither an equation nor a figure was extracted".into()));
    }
    Ok(Extraction {
        entry: CandidateEntry {
            bundle_id: bundle.id.clone(),
            doi: bundle.doi.clone(),
            material: out["material"].as_str().unwrap_or_default().to_string(),
            category: out["category"].as_str().unwrap_or("other").to_string(),
            temperature_k,
            stress_mpa,
            equation,
            bindings,
            model,
            text_params,
            curve,
            evidence,
        },
        param_units,
    })
}

/// Compact JSON view of a candidate for operator output.
pub fn candidate_summary(entry: &CandidateEntry) -> Value {
    json!({
        "bundle_id": entry.bundle_id,
        "doi": entry.doi,
        "material": entry.material,
        "category": entry.category,
        "temperature_K": entry.temperature_k,
        "stress_MPa": entry.stress_mpa,
        "equation": entry.equation,
        "model": entry.model.as_ref().map(|m| m.name.clone()),
        "text_params": entry.text_params,
        "curve_points": entry.curve.as_ref().map_or(0, |c| c.len()),
        "curve": entry.curve.as_ref().map(|c| c.points().to_vec()),
        "evidence": entry.evidence,
    })
}

/// Build the store record for a validated entry.
pub fn to_record(ex: &Extraction, report: &ValidationReport) -> CreepRecord {
    let entry = &ex.entry;
    let cm = report.cross_modal.as_ref();
    let values = cm.map(|c| c.params.clone()).unwrap_or_else(|| entry.text_params.clone());
    let unit_of = |name: &str| {
        ex.param_units
            .get(name)
            .cloned()
            .or_else(|| entry.model.as_ref().and_then(|m| m.parameter(name)).map(|p| p.unit.clone()))
            .unwrap_or_else(|| "1".into())
    };
    CreepRecord {
        record_id: 0,
        doi: entry.doi.clone(),
        material: entry.material.clone(),
        category: entry.category.clone(),
        temperature_k: entry.temperature_k,
        stress_mpa: entry.stress_mpa,
        model_name: entry.model.as_ref().map_or_else(|| "unspecified".into(), |m| m.name.clone()),
        equation: entry.equation.clone().unwrap_or_default(),
        bindings: entry.bindings.clone(),
        params: values
            .iter()
            .map(|(k, v)| ParamValue {
                name: k.clone(),
                value: *v,
                unit: unit_of(k),
            })
            .collect(),
        params_source: cm.map_or("text", |c| c.params_source.as_str()).to_string(),
        curve: entry.curve.as_ref().map(|c| c.points().to_vec()).unwrap_or_default(),
        verdict: report.verdict,
        r2: report.r2(),
        evidence: entry.evidence.clone(),
        report: Some(serde_json::to_value(report).expect("serializable")),
    }
}

/// Result of the in-flight stages for one document, before any store write.
struct Processed {
    trace: DocumentTrace,
    pending: Option<(PaperRow, Extraction, ValidationReport)>,
}

fn stage(trace: &mut DocumentTrace, stage: Stage, skill: &Skill, outcome: impl Into<String>) {
    trace.stages.push(StageOutcome {
        stage,
        persona: skill.persona.clone(),
        outcome: outcome.into(),
    });
}

fn process(
    id: &str,
    index: &CorpusIndex,
    config: &PipelineConfig,
    skills: &Skills,
    catalog: &Catalog,
    backend: &dyn ReasoningBackend,
    log: &ExecutionLog,
) -> Processed {
    let mut trace = DocumentTrace {
        bundle_id: id.to_string(),
        doi: index.entries.get(id).map(|s| s.doi.clone()).unwrap_or_default(),
        stages: Vec::new(),
        terminal: TerminalState::Stored,
        record_id: None,
        report: None,
    };
    let done = |mut trace: DocumentTrace, terminal| {
        trace.terminal = terminal;
        Processed { trace, pending: None }
    };
    let bundle = match index.load(id) {
        Ok(b) => b,
        Err(e) => {
            return done(
                trace,
                TerminalState::Errored {
                    stage: Stage::Screen,
                    message: e.to_string(),
                },
            )
        }
    };

    if config.stages.screen {
        match screen(&bundle, backend, &skills.filter, log) {
            Ok(d) if d.pass() => stage(&mut trace, Stage::Screen, &skills.filter, "pass"),
            Ok(d) => {
                stage(&mut trace, Stage::Screen, &skills.filter, format!("fail: {}", d.rationale));
                return done(trace, TerminalState::RejectedAtScreening);
            }
            Err(e) => {
                stage(&mut trace, Stage::Screen, &skills.filter, format!("error: {e}"));
                return done(
                    trace,
                    TerminalState::Errored {
                        stage: Stage::Screen,
                        message: e.to_string(),
                    },
                );
            }
        }
    } else {
        stage(&mut trace, Stage::Screen, &skills.filter, "bypassed");
    }
    if !config.stages.extract {
        return done(trace, TerminalState::Stopped { after: Stage::Screen });
    }

    let ex = match extract_candidate(&bundle, backend, &skills.parser, catalog, log) {
        Ok(ex) => {
            stage(&mut trace, Stage::Extract, &skills.parser, "ok");
            ex
        }
        Err(e) => {
            stage(&mut trace, Stage::Extract, &skills.parser, format!("error: {e}"));
            return done(
                trace,
                TerminalState::Errored {
                    stage: Stage::Extract,
                    message: e.to_string(),
                },
            );
        }
    };
    if !config.stages.validate {
        return done(trace, TerminalState::Stopped { after: Stage::Extract });
    }

    // The guardrail runs deterministic checks; its tools are logged under
    // its own scope.
    for tool in ["parse_formula", "check_units"] {
        log.record(&skills.guardrail.name, id, tool, true);
    }
    if ex.entry.curve.is_some() {
        log.record(&skills.guardrail.name, id, "evaluate_model", true);
    }
    let report = validate_entry(&ex.entry, &config.thresholds);
    stage(&mut trace, Stage::Validate, &skills.guardrail, format!("{}: {}", report.verdict, report.detail));
    trace.report = Some(report.clone());
    let paper = PaperRow {
        doi: bundle.doi.clone(),
        title: bundle.title.clone(),
        authors: bundle.authors.clone(),
        year: bundle.year,
        source_path: bundle.source_path.display().to_string(),
    };
    Processed {
        trace,
        pending: Some((paper, ex, report)),
    }
}

/// Run every stage over the corpus. Documents are processed concurrently
/// up to `max_in_flight`; store writes happen afterwards in bundle order.
pub fn run_pipeline(
    index: &CorpusIndex,
    config: &PipelineConfig,
    backend: &dyn ReasoningBackend,
    store: &mut Store,
    log: &ExecutionLog,
) -> Result<PipelineReport, PipelineError> {
    let started = Instant::now();
    store.count_records()?;
    let skills = config.skills();
    let catalog = Catalog::builtin();
    let mut report = PipelineReport {
        counts: StageCounts::default(),
        query: None,
        collection_error: None,
        traces: Vec::new(),
        duration_ms: 0,
    };
    let all = index.ids();
    let collected: Vec<String> = match &config.collection_query {
        _ if all.is_empty() => Vec::new(),
        None => all.clone(),
        Some(q) => match expand_query(q, backend, Some(index), log, config.lenient_query) {
            Ok(bq) => {
                report.query = Some(bq.to_string());
                search_index(index, &bq).unwrap_or_default()
            }
            Err(e) => {
                report.collection_error = Some(e.to_string());
                Vec::new()
            }
        },
    };
    for id in all.iter().filter(|id| !collected.contains(id)) {
        report.traces.push(DocumentTrace {
            bundle_id: id.clone(),
            doi: index.entries[id].doi.clone(),
            stages: vec![StageOutcome {
                stage: Stage::Collect,
                persona: skills.navigator.persona.clone(),
                outcome: "not matched".into(),
            }],
            terminal: TerminalState::NotCollected,
            record_id: None,
            report: None,
        });
    }
    report.counts.collected = collected.len();

    let slots: Vec<Mutex<Option<Processed>>> = collected.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.max_in_flight.min(collected.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= collected.len() {
                    break;
                }
                let mut p = process(&collected[i], index, config, &skills, &catalog, backend, log);
                p.trace.stages.insert(
                    0,
                    StageOutcome {
                        stage: Stage::Collect,
                        persona: skills.navigator.persona.clone(),
                        outcome: "collected".into(),
                    },
                );
                *slots[i].lock().expect("slot poisoned") = Some(p);
            });
        }
    });

    for slot in slots {
        let Processed { mut trace, pending } = slot.into_inner().expect("slot poisoned").expect("every slot filled");
        let screened = trace.stages.iter().find(|s| s.stage == Stage::Screen).map(|s| s.outcome.as_str());
        match screened {
            Some(o) if o == "pass" || o == "bypassed" => report.counts.screened_pass += 1,
            Some(o) if o.starts_with("fail") => report.counts.screened_fail += 1,
            _ => {}
        }
        if trace.stages.iter().any(|s| s.stage == Stage::Extract && s.outcome == "ok") {
            report.counts.extracted += 1;
        }
        if let Some((paper, ex, vr)) = pending {
            match vr.verdict {
                Verdict::Valid | Verdict::ValidTextOnly => report.counts.validated_valid += 1,
                Verdict::Flagged => report.counts.validated_flagged += 1,
                Verdict::Rejected => report.counts.validated_rejected += 1,
            }
            if !config.stages.store {
                trace.terminal = TerminalState::Stopped { after: Stage::Validate };
            } else if vr.verdict == Verdict::Rejected {
                let payload = serde_json::to_value(&vr).expect("serializable");
                store.insert_rejected(&trace.bundle_id, &trace.doi, "validation", &vr.detail, &payload)?;
                trace.terminal = TerminalState::RejectedAtValidation;
            } else {
                if store.paper(&paper.doi)?.is_none() {
                    store.insert_paper(&paper)?;
                }
                log.record(&skills.serializer.name, &trace.bundle_id, "store_write", true);
                let rid = store.insert_record(&to_record(&ex, &vr))?;
                trace.record_id = Some(rid);
                stage(&mut trace, Stage::Store, &skills.serializer, format!("record {rid}"));
                if vr.verdict == Verdict::Flagged {
                    trace.terminal = TerminalState::Flagged;
                } else {
                    trace.terminal = TerminalState::Stored;
                    report.counts.stored += 1;
                }
            }
        }
        report.traces.push(trace);
    }
    report.traces.sort_by(|a, b| a.bundle_id.cmp(&b.bundle_id));
    report.duration_ms = started.elapsed().as_millis();
    Ok(report)
}

/// Tool names each stage persona may use, keyed by skill name.
pub fn stage_scopes() -> BTreeMap<String, Vec<String>> {
    [navigator(), domain_filter(), multimodal_parser(), physics_guardrail(), data_serializer()]
        .into_iter()
        .map(|s| (s.name.clone(), s.allowed_tools.into_iter().collect()))
        .collect()
}
