//! Validation triad (completeness, relevance, integrity) and the cross-modal
//! R² gate for candidate equation-data pairs.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::curve::CreepCurve;
use crate::formula::{check_homogeneity, parse_equation, Equation, Expr, HomogeneityReport, Role, SymbolBinding};
use crate::models::{evaluate, fit_parameters, r_squared, ConstitutiveModel, FitOptions, ModelError, Values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Rejected,
    Flagged,
    Valid,
    #[serde(rename = "Valid-TextOnly")]
    ValidTextOnly,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Rejected => "Rejected",
            Verdict::Flagged => "Flagged",
            Verdict::Valid => "Valid",
            Verdict::ValidTextOnly => "Valid-TextOnly",
        }
    }

    pub fn parse(s: &str) -> Option<Verdict> {
        [Verdict::Rejected, Verdict::Flagged, Verdict::Valid, Verdict::ValidTextOnly]
            .into_iter()
            .find(|v| v.as_str() == s)
    }

    pub fn is_valid(self) -> bool {
        matches!(self, Verdict::Valid | Verdict::ValidTextOnly)
    }

    fn rank(self) -> u8 {
        match self {
            Verdict::Rejected => 0,
            Verdict::Flagged => 1,
            Verdict::Valid | Verdict::ValidTextOnly => 2,
        }
    }
}

impl PartialOrd for Verdict {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.rank().cmp(&other.rank()))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub valid: f64,
    pub review: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { valid: 0.9, review: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evidence {
    pub figure_id: Option<String>,
    pub text_locations: Vec<String>,
}

impl Evidence {
    pub fn is_empty(&self) -> bool {
        self.figure_id.is_none() && self.text_locations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEntry {
    pub bundle_id: String,
    pub doi: String,
    pub material: String,
    pub category: String,
    pub temperature_k: f64,
    pub stress_mpa: f64,
    /// Equation text as extracted; may be prose.
    pub equation: Option<String>,
    pub bindings: Vec<SymbolBinding>,
    pub model: Option<ConstitutiveModel>,
    /// Parameter values reported in the text, canonical units.
    pub text_params: Values,
    pub curve: Option<CreepCurve>,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail")]
pub enum FailureReason {
    MissingEquation,
    ParseError(String),
    DescriptiveFragment,
    NotTimeDependent,
    NotStrainQuantity,
    UnboundSymbol(String),
    Inhomogeneous,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegResult {
    pub pass: bool,
    pub reason: Option<FailureReason>,
}

impl LegResult {
    fn ok() -> Self {
        LegResult { pass: true, reason: None }
    }

    fn fail(reason: FailureReason) -> Self {
        LegResult {
            pass: false,
            reason: Some(reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamsSource {
    Text,
    Fitted,
    Mixed,
}

impl ParamsSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamsSource::Text => "text",
            ParamsSource::Fitted => "fitted",
            ParamsSource::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModalResult {
    pub r2: Option<f64>,
    pub params_source: ParamsSource,
    /// Parameter values used for the reconstruction.
    pub params: Values,
    pub pass: bool,
    pub recommendation: Verdict,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityResult {
    pub leg: LegResult,
    pub homogeneity: Option<HomogeneityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub bundle_id: String,
    pub completeness: LegResult,
    pub relevance: LegResult,
    pub integrity: IntegrityResult,
    pub cross_modal: Option<CrossModalResult>,
    /// Curve points outside the strain sanity band.
    pub out_of_band: usize,
    pub verdict: Verdict,
    pub detail: String,
}

impl ValidationReport {
    pub fn r2(&self) -> Option<f64> {
        self.cross_modal.as_ref().and_then(|c| c.r2)
    }
}

fn build_equation(entry: &CandidateEntry) -> Result<Equation, FailureReason> {
    let text = entry.equation.as_deref().filter(|t| !t.trim().is_empty()).ok_or(FailureReason::MissingEquation)?;
    let (lhs, rhs) = parse_equation(text).map_err(|e| FailureReason::ParseError(e.to_string()))?;
    Equation::new(lhs, rhs, entry.bindings.clone()).map_err(|e| FailureReason::ParseError(e.to_string()))
}

fn has_symbol(e: &Expr) -> bool {
    !e.symbols().is_empty() || !e.derivatives().is_empty()
}

pub fn check_completeness(entry: &CandidateEntry) -> LegResult {
    match build_equation(entry) {
        Err(r) => LegResult::fail(r),
        Ok(eq) if !has_symbol(&eq.lhs) || !has_symbol(&eq.rhs) => LegResult::fail(FailureReason::DescriptiveFragment),
        Ok(_) => LegResult::ok(),
    }
}

fn role_of(eq: &Equation, s: &str) -> Option<Role> {
    eq.binding(s).map(|b| b.role)
}

pub fn check_relevance(entry: &CandidateEntry) -> LegResult {
    let Ok(eq) = build_equation(entry) else {
        return LegResult::fail(FailureReason::Skipped);
    };
    let time: Vec<String> = eq
        .bindings
        .iter()
        .filter(|b| b.role == Role::Time)
        .map(|b| b.symbol.clone())
        .collect();
    let derivs: Vec<(String, String, u32)> = eq.lhs.derivatives().into_iter().chain(eq.rhs.derivatives()).collect();
    let uses_time = eq.lhs.symbols().iter().chain(eq.rhs.symbols().iter()).any(|s| time.contains(s))
        || derivs.iter().any(|(_, wrt, _)| time.contains(wrt));
    if !uses_time {
        return LegResult::fail(FailureReason::NotTimeDependent);
    }
    let strain_like = |s: &str| matches!(role_of(&eq, s), Some(Role::Strain) | Some(Role::StrainRate));
    let lhs_ok = match &eq.lhs {
        Expr::Sym(s) => strain_like(s),
        _ => eq
            .lhs
            .derivatives()
            .iter()
            .any(|(target, wrt, _)| time.contains(wrt) && strain_like(target)),
    };
    if !lhs_ok {
        return LegResult::fail(FailureReason::NotStrainQuantity);
    }
    LegResult::ok()
}

pub fn check_integrity(entry: &CandidateEntry) -> IntegrityResult {
    let Ok(eq) = build_equation(entry) else {
        return IntegrityResult {
            leg: LegResult::fail(FailureReason::Skipped),
            homogeneity: None,
        };
    };
    if let Some(s) = eq.unbound_symbols().into_iter().next() {
        return IntegrityResult {
            leg: LegResult::fail(FailureReason::UnboundSymbol(s)),
            homogeneity: None,
        };
    }
    let report = check_homogeneity(&eq);
    IntegrityResult {
        leg: if report.pass { LegResult::ok() } else { LegResult::fail(FailureReason::Inhomogeneous) },
        homogeneity: Some(report),
    }
}

/// Model used for reconstruction: the entry's own, or one derived from its equation.
fn resolve_model(entry: &CandidateEntry) -> Result<ConstitutiveModel, String> {
    if let Some(m) = &entry.model {
        return Ok(m.clone());
    }
    let eq = build_equation(entry).map_err(|e| format!("{e:?}"))?;
    ConstitutiveModel::from_equation("extracted", eq).map_err(|e| e.to_string())
}

fn model_conditions(model: &ConstitutiveModel, entry: &CandidateEntry) -> Values {
    model
        .conditions
        .iter()
        .filter_map(|c| {
            let role = model.equation.binding(c).map(|b| b.role)?;
            match role {
                Role::Stress => Some((c.clone(), entry.stress_mpa)),
                Role::Temperature => Some((c.clone(), entry.temperature_k)),
                _ => None,
            }
        })
        .collect()
}

fn recommend(r2: f64, t: &Thresholds) -> Verdict {
    if r2 > t.valid {
        Verdict::Valid
    } else if r2 > t.review {
        Verdict::Flagged
    } else {
        Verdict::Rejected
    }
}

pub fn cross_modal_check(entry: &CandidateEntry, thresholds: &Thresholds) -> Option<CrossModalResult> {
    let curve = entry.curve.as_ref()?;
    let failed = |source: ParamsSource, params: Values, e: String| CrossModalResult {
        r2: None,
        params_source: source,
        params,
        pass: false,
        recommendation: Verdict::Flagged,
        error: Some(e),
    };
    let model = match resolve_model(entry) {
        Ok(m) => m,
        Err(e) => return Some(failed(ParamsSource::Text, entry.text_params.clone(), e)),
    };
    let conditions = model_conditions(&model, entry);
    let mut params: Values = model
        .parameters
        .iter()
        .filter_map(|p| entry.text_params.get(&p.name).map(|v| (p.name.clone(), *v)))
        .collect();
    let missing: Vec<String> = model
        .parameters
        .iter()
        .filter(|p| !params.contains_key(&p.name))
        .map(|p| p.name.clone())
        .collect();
    let source = if missing.is_empty() {
        ParamsSource::Text
    } else if params.is_empty() {
        ParamsSource::Fitted
    } else {
        ParamsSource::Mixed
    };
    if !missing.is_empty() {
        let mut init = params.clone();
        for p in &model.parameters {
            init.entry(p.name.clone()).or_insert(p.default);
        }
        match fit_parameters(&model, &init, &conditions, curve.points(), &missing, FitOptions::default()) {
            Ok(fit) => params = fit.params,
            Err(e) => return Some(failed(source, init, e.to_string())),
        }
    }
    let predicted = match evaluate(&model, &params, &conditions, &curve.times()) {
        Ok(p) => p,
        Err(e) => return Some(failed(source, params, e.to_string())),
    };
    match r_squared(&curve.strains(), &predicted) {
        Ok(r2) => {
            let recommendation = recommend(r2, thresholds);
            Some(CrossModalResult {
                r2: Some(r2),
                params_source: source,
                params,
                pass: recommendation == Verdict::Valid,
                recommendation,
                error: None,
            })
        }
        Err(e @ ModelError::DegenerateObservations) | Err(e) => Some(failed(source, params, e.to_string())),
    }
}

/// Compose the verdict: any failed text leg rejects; otherwise the
/// cross-modal recommendation decides, capped at Flagged when the curve
/// leaves the strain sanity band. Entries without a curve are Valid-TextOnly.
pub fn validate_entry(entry: &CandidateEntry, thresholds: &Thresholds) -> ValidationReport {
    let completeness = check_completeness(entry);
    let (relevance, integrity) = if completeness.pass {
        (check_relevance(entry), check_integrity(entry))
    } else {
        (
            LegResult::fail(FailureReason::Skipped),
            IntegrityResult {
                leg: LegResult::fail(FailureReason::Skipped),
                homogeneity: None,
            },
        )
    };
    let out_of_band = entry.curve.as_ref().map_or(0, |c| c.out_of_band().len());
    let text_ok = completeness.pass && relevance.pass && integrity.leg.pass;
    let cross_modal = if text_ok { cross_modal_check(entry, thresholds) } else { None };
    let (verdict, detail) = if !completeness.pass {
        (Verdict::Rejected, "completeness failed".to_string())
    } else if !relevance.pass {
        (Verdict::Rejected, "relevance failed".to_string())
    } else if !integrity.leg.pass {
        (Verdict::Rejected, "integrity failed".to_string())
    } else {
        match &cross_modal {
            None => (Verdict::ValidTextOnly, "no curve; text legs pass".to_string()),
            Some(cm) => {
                let mut v = cm.recommendation;
                let mut detail = match (cm.r2, &cm.error) {
                    (Some(r2), _) => format!("cross-modal r2 = {r2:.6}"),
                    (None, Some(e)) => format!("cross-modal check failed: {e}"),
                    (None, None) => String::new(),
                };
                if out_of_band > 0 && v == Verdict::Valid {
                    v = Verdict::Flagged;
                    detail.push_str(&format!("; {out_of_band} points outside the strain sanity band"));
                }
                (v, detail)
            }
        }
    };
    let (verdict, detail) = if verdict.is_valid() && entry.evidence.is_empty() {
        (Verdict::Flagged, format!("{detail}; no evidence link"))
    } else {
        (verdict, detail)
    };
    ValidationReport {
        bundle_id: entry.bundle_id.clone(),
        completeness,
        relevance,
        integrity,
        cross_modal,
        out_of_band,
        verdict,
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Catalog;

    fn binding(s: &str, role: Role, unit: &str) -> SymbolBinding {
        SymbolBinding::new(s, role, unit).unwrap()
    }

    fn entry(equation: &str, bindings: Vec<SymbolBinding>) -> CandidateEntry {
        CandidateEntry {
            bundle_id: "b".into(),
            doi: "10.1/b".into(),
            material: "m".into(),
            category: "other".into(),
            temperature_k: 900.0,
            stress_mpa: 50.0,
            equation: Some(equation.into()),
            bindings,
            model: None,
            text_params: Values::new(),
            curve: None,
            evidence: Evidence {
                figure_id: None,
                text_locations: vec!["p1".into()],
            },
        }
    }

    fn norton_entry() -> CandidateEntry {
        let m = Catalog::builtin().get("norton").unwrap().clone();
        let mut e = entry(&m.equation.text(), m.equation.bindings.clone());
        e.model = Some(m);
        e
    }

    #[test]
    fn completeness_cases() {
        assert!(check_completeness(&norton_entry()).pass);
        let prose = entry("strain increases with time", vec![]);
        assert!(matches!(check_completeness(&prose).reason, Some(FailureReason::ParseError(_))));
        let constant = entry("eps = 0.02", vec![binding("eps", Role::Strain, "1")]);
        assert_eq!(check_completeness(&constant).reason, Some(FailureReason::DescriptiveFragment));
    }

    #[test]
    fn relevance_cases() {
        let theta = Catalog::builtin().get("theta_projection").unwrap().clone();
        assert!(check_relevance(&entry(&theta.equation.text(), theta.equation.bindings.clone())).pass);
        let hooke = entry(
            "eps = sigma/E",
            vec![binding("eps", Role::Strain, "1"), binding("sigma", Role::Stress, "MPa"), binding("E", Role::Parameter, "MPa")],
        );
        assert_eq!(check_relevance(&hooke).reason, Some(FailureReason::NotTimeDependent));
        let duffing = Catalog::builtin().get("duffing").unwrap().clone();
        assert!(check_relevance(&entry(&duffing.equation.text(), duffing.equation.bindings.clone())).pass);
    }

    #[test]
    fn integrity_cases() {
        assert!(check_integrity(&norton_entry()).leg.pass);
        let unbound = entry("eps = k*t", vec![binding("eps", Role::Strain, "1"), binding("t", Role::Time, "s")]);
        assert_eq!(check_integrity(&unbound).leg.reason, Some(FailureReason::UnboundSymbol("k".into())));
        let bad = entry(
            "eps = sigma*t",
            vec![binding("eps", Role::Strain, "1"), binding("sigma", Role::Stress, "MPa"), binding("t", Role::Time, "s")],
        );
        let r = check_integrity(&bad);
        assert_eq!(r.leg.reason, Some(FailureReason::Inhomogeneous));
        assert!(!r.homogeneity.unwrap().pass);
    }

    #[test]
    fn text_only_and_prose_verdicts() {
        assert_eq!(validate_entry(&norton_entry(), &Thresholds::default()).verdict, Verdict::ValidTextOnly);
        let prose = entry("strain increases with time", vec![]);
        let r = validate_entry(&prose, &Thresholds::default());
        assert_eq!(r.verdict, Verdict::Rejected);
        assert!(!r.completeness.pass);
    }

    fn power_entry(m_text: f64) -> CandidateEntry {
        let model = Catalog::builtin().get("norton_bailey").unwrap().clone();
        let times: Vec<f64> = (1..=30).map(|i| i as f64 * 100.0).collect();
        let truth: Values = [("A".into(), 1e-4), ("n".into(), 1.0), ("m".into(), 0.4)].into();
        let cond: Values = [("sigma".into(), 1.0)].into();
        let strains = evaluate(&model, &truth, &cond, &times).unwrap();
        let mut e = entry(&model.equation.text(), model.equation.bindings.clone());
        e.stress_mpa = 1.0;
        e.model = Some(model);
        e.text_params = [("A".into(), 1e-4), ("n".into(), 1.0), ("m".into(), m_text)].into();
        e.curve = Some(CreepCurve::new(times.into_iter().zip(strains).collect()).unwrap());
        e
    }

    #[test]
    fn cross_modal_power_law() {
        let good = validate_entry(&power_entry(0.4), &Thresholds::default());
        assert_eq!(good.verdict, Verdict::Valid);
        assert!(good.r2().unwrap() > 0.999999);
        let bad = cross_modal_check(&power_entry(0.9), &Thresholds::default()).unwrap();
        assert!(bad.r2.unwrap() < 0.9 && !bad.pass);
    }

    #[test]
    fn missing_params_are_fitted() {
        let mut e = power_entry(0.4);
        e.text_params.remove("m");
        let cm = cross_modal_check(&e, &Thresholds::default()).unwrap();
        assert_eq!(cm.params_source, ParamsSource::Mixed);
        assert!((cm.params["m"] - 0.4).abs() < 1e-6);
        assert!(cm.pass);
    }

    #[test]
    fn degenerate_curve_flagged() {
        let mut e = power_entry(0.4);
        e.curve = Some(CreepCurve::new((1..=10).map(|i| (i as f64, 0.01)).collect()).unwrap());
        let r = validate_entry(&e, &Thresholds::default());
        assert_eq!(r.verdict, Verdict::Flagged);
        assert!(r.cross_modal.unwrap().error.unwrap().contains("variance"));
    }

    #[test]
    fn missing_evidence_demotes() {
        let mut e = norton_entry();
        e.evidence = Evidence::default();
        assert_eq!(validate_entry(&e, &Thresholds::default()).verdict, Verdict::Flagged);
    }

    #[test]
    fn verdict_thresholds() {
        let t = Thresholds::default();
        assert_eq!(recommend(0.62, &t), Verdict::Flagged);
        assert_eq!(recommend(0.9, &t), Verdict::Flagged);
        assert_eq!(recommend(0.5, &t), Verdict::Rejected);
        assert_eq!(recommend(0.95, &t), Verdict::Valid);
        assert!(Verdict::Rejected < Verdict::Flagged && Verdict::Flagged < Verdict::Valid);
    }
}
