//! Constitutive-model catalog and numerical engine.
//!
//! Closed-form laws are evaluated directly; rate laws and second-order
//! systems are integrated with fixed-step RK4. Parameter Jacobians come from
//! symbolic differentiation (closed form) or forward sensitivity equations
//! integrated alongside the state (ODE), so they are exact derivatives of the
//! numerical solution.

mod compiled;
mod fit;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{
    parse_equation, parse_expression, units::GAS_CONSTANT, Equation, Expr, Role, SymbolBinding,
};
use compiled::Node;

pub use fit::{fit_parameters, FitOptions, FitResult};

/// Named parameter or condition values in canonical units.
pub type Values = BTreeMap<String, f64>;

/// Minimum number of RK4 steps across the requested time span.
pub const MIN_STEPS_PER_SPAN: usize = 2000;
const MAX_STEPS: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unbound symbol '{0}'")]
    UnboundSymbol(String),
    #[error("invalid time grid: {0}")]
    InvalidTimes(String),
    #[error("numerical overflow while evaluating '{0}'")]
    NumericalOverflow(String),
    #[error("observed values have zero variance")]
    DegenerateObservations,
    #[error("length mismatch: {observed} observed vs {predicted} predicted")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("singular Jacobian: {0}")]
    SingularJacobian(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("unsupported model form: {0}")]
    UnsupportedForm(String),
    #[error("catalog error: {0}")]
    Catalog(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub unit: String,
    pub default: f64,
    #[serde(default)]
    pub lower: Option<f64>,
    #[serde(default)]
    pub upper: Option<f64>,
}

impl ParameterSpec {
    pub fn clamp(&self, value: f64) -> f64 {
        let v = self.lower.map_or(value, |lo| value.max(lo));
        self.upper.map_or(v, |hi| v.min(hi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystem {
    pub states: Vec<String>,
    pub rhs: Vec<Expr>,
    /// Parameter supplying each state's initial value; `None` starts at zero.
    pub initial: Vec<Option<String>>,
    pub observable: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Strain as an explicit function of time.
    ClosedForm { strain: Expr },
    OdeSystem(OdeSystem),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstitutiveModel {
    pub name: String,
    pub title: String,
    /// Textual form with unit bindings, used for homogeneity checks.
    pub equation: Equation,
    pub kind: ModelKind,
    pub time_symbol: String,
    pub strain_symbol: String,
    pub parameters: Vec<ParameterSpec>,
    pub conditions: Vec<String>,
    pub constants: Values,
}

impl ConstitutiveModel {
    /// Build a model from an arbitrary equation whose left side is the strain
    /// symbol or its first time derivative.
    pub fn from_equation(name: &str, equation: Equation) -> Result<Self, ModelError> {
        let by_role = |role: Role| {
            equation
                .bindings
                .iter()
                .filter(|b| b.role == role)
                .map(|b| b.symbol.clone())
                .collect::<Vec<_>>()
        };
        let time_symbol = by_role(Role::Time)
            .into_iter()
            .next()
            .ok_or_else(|| ModelError::UnsupportedForm("no symbol bound with the time role".into()))?;
        let (strain_symbol, kind) = match &equation.lhs {
            Expr::Sym(s) => (
                s.clone(),
                ModelKind::ClosedForm {
                    strain: equation.rhs.clone(),
                },
            ),
            Expr::Derivative { target, wrt, order: 1 } if *wrt == time_symbol => (
                target.clone(),
                ModelKind::OdeSystem(OdeSystem {
                    states: vec![target.clone()],
                    rhs: vec![equation.rhs.clone()],
                    initial: vec![None],
                    observable: Expr::Sym(target.clone()),
                }),
            ),
            other => {
                return Err(ModelError::UnsupportedForm(format!(
                    "left side '{other}' is neither strain nor its first time derivative"
                )))
            }
        };
        let conditions: Vec<String> = equation
            .bindings
            .iter()
            .filter(|b| matches!(b.role, Role::Stress | Role::Temperature))
            .map(|b| b.symbol.clone())
            .collect();
        let constants: Values = by_role(Role::GasConstant)
            .into_iter()
            .map(|s| (s, GAS_CONSTANT))
            .collect();
        let mut parameters = Vec::new();
        for s in equation.rhs.symbols() {
            if s == time_symbol || s == strain_symbol || conditions.contains(&s) || constants.contains_key(&s) {
                continue;
            }
            let unit = equation.binding(&s).map_or("1".to_string(), |b| b.unit.clone());
            parameters.push(ParameterSpec {
                name: s,
                unit,
                default: 1.0,
                lower: None,
                upper: None,
            });
        }
        Ok(ConstitutiveModel {
            name: name.to_string(),
            title: name.to_string(),
            equation,
            kind,
            time_symbol,
            strain_symbol,
            parameters,
            conditions,
            constants,
        })
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    pub fn defaults(&self) -> Values {
        self.parameters.iter().map(|p| (p.name.clone(), p.default)).collect()
    }

    pub fn is_ode(&self) -> bool {
        matches!(self.kind, ModelKind::OdeSystem(_))
    }

    /// Serialized form stored alongside records.
    pub fn form_text(&self) -> String {
        match &self.kind {
            ModelKind::ClosedForm { .. } => self.equation.text(),
            ModelKind::OdeSystem(sys) => {
                let rhs: Vec<String> = sys
                    .states
                    .iter()
                    .zip(&sys.rhs)
                    .map(|(s, r)| format!("d({s})/d({}) = {r}", self.time_symbol))
                    .collect();
                format!("{}; {}; observable = {}", self.equation.text(), rhs.join("; "), sys.observable)
            }
        }
    }
}

/// Slot assignment for compiled expressions.
struct Layout {
    names: Vec<String>,
}

impl Layout {
    fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Everything needed to evaluate one model at fixed parameters and conditions.
struct Prepared<'a> {
    model: &'a ConstitutiveModel,
    layout: Layout,
    base: Vec<f64>,
    state_offset: usize,
}

impl<'a> Prepared<'a> {
    fn new(model: &'a ConstitutiveModel, params: &Values, conditions: &Values) -> Result<Self, ModelError> {
        let mut names = vec![model.time_symbol.clone()];
        let states: Vec<String> = match &model.kind {
            ModelKind::OdeSystem(sys) => sys.states.clone(),
            ModelKind::ClosedForm { .. } => Vec::new(),
        };
        names.extend(states.iter().cloned());
        let mut base = vec![0.0; names.len()];
        for p in &model.parameters {
            let v = *params.get(&p.name).ok_or_else(|| ModelError::UnboundSymbol(p.name.clone()))?;
            names.push(p.name.clone());
            base.push(v);
        }
        for c in &model.conditions {
            let v = *conditions.get(c).ok_or_else(|| ModelError::UnboundSymbol(c.clone()))?;
            names.push(c.clone());
            base.push(v);
        }
        for (k, v) in &model.constants {
            names.push(k.clone());
            base.push(*v);
        }
        Ok(Prepared {
            model,
            layout: Layout { names },
            base,
            state_offset: 1,
        })
    }

    fn compile(&self, e: &Expr) -> Result<Node, ModelError> {
        Node::compile(e, &|s| self.layout.slot(s)).map_err(ModelError::UnboundSymbol)
    }
}

fn check_times(times: &[f64]) -> Result<(), ModelError> {
    for (i, t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(ModelError::InvalidTimes(format!("non-finite time at index {i}")));
        }
        if i > 0 && *t <= times[i - 1] {
            return Err(ModelError::InvalidTimes(format!("times not strictly increasing at index {i}")));
        }
    }
    Ok(())
}

/// Strain at each requested time.
pub fn evaluate(
    model: &ConstitutiveModel,
    params: &Values,
    conditions: &Values,
    times: &[f64],
) -> Result<Vec<f64>, ModelError> {
    Ok(evaluate_with_jacobian(model, params, conditions, times, &[])?.0)
}

/// Strain and its partial derivatives with respect to `wrt` at each time.
/// The Jacobian is row-major: one row per time, one column per entry of `wrt`.
pub fn evaluate_with_jacobian(
    model: &ConstitutiveModel,
    params: &Values,
    conditions: &Values,
    times: &[f64],
    wrt: &[String],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), ModelError> {
    check_times(times)?;
    for w in wrt {
        if model.parameter(w).is_none() {
            return Err(ModelError::UnboundSymbol(w.clone()));
        }
    }
    let prepared = Prepared::new(model, params, conditions)?;
    match &model.kind {
        ModelKind::ClosedForm { strain } => closed_form(&prepared, strain, times, wrt),
        ModelKind::OdeSystem(sys) => ode(&prepared, sys, times, wrt, None).map(|(v, j, _)| (v, j)),
    }
}

fn closed_form(
    prepared: &Prepared,
    strain: &Expr,
    times: &[f64],
    wrt: &[String],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), ModelError> {
    let value = prepared.compile(strain)?;
    let grads = wrt
        .iter()
        .map(|w| prepared.compile(&strain.diff(w)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut vars = prepared.base.clone();
    let mut values = Vec::with_capacity(times.len());
    let mut jac = Vec::with_capacity(times.len());
    for &t in times {
        vars[0] = t;
        let v = value.eval(&vars);
        if !v.is_finite() {
            return Err(ModelError::NumericalOverflow(format!("{strain} at t = {t}")));
        }
        values.push(v);
        let row: Vec<f64> = grads.iter().map(|g| g.eval(&vars)).collect();
        if row.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NumericalOverflow(format!("gradient of {strain} at t = {t}")));
        }
        jac.push(row);
    }
    Ok((values, jac))
}

/// Observable at every RK4 node for `steps` equal steps over `[0, t_end]`.
pub fn integrate_nodes(
    model: &ConstitutiveModel,
    params: &Values,
    conditions: &Values,
    t_end: f64,
    steps: usize,
) -> Result<Vec<f64>, ModelError> {
    let ModelKind::OdeSystem(sys) = &model.kind else {
        return Err(ModelError::UnsupportedForm(format!("{} is not an ODE model", model.name)));
    };
    if !(t_end > 0.0) || steps == 0 {
        return Err(ModelError::InvalidTimes("need t_end > 0 and at least one step".into()));
    }
    let prepared = Prepared::new(model, params, conditions)?;
    let (_, _, nodes) = ode(&prepared, sys, &[t_end], &[], Some(steps))?;
    Ok(nodes)
}

type OdeOutput = (Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

fn ode(
    prepared: &Prepared,
    sys: &OdeSystem,
    times: &[f64],
    wrt: &[String],
    fixed_steps: Option<usize>,
) -> Result<OdeOutput, ModelError> {
    let ns = sys.states.len();
    let nw = wrt.len();
    if times.is_empty() {
        return Ok((Vec::new(), Vec::new(), Vec::new()));
    }
    if times[0] < 0.0 {
        return Err(ModelError::InvalidTimes("ODE models start at t = 0".into()));
    }
    let rhs: Vec<Node> = sys.rhs.iter().map(|e| prepared.compile(e)).collect::<Result<_, _>>()?;
    let jx: Vec<Vec<Node>> = sys
        .rhs
        .iter()
        .map(|e| sys.states.iter().map(|s| prepared.compile(&e.diff(s))).collect())
        .collect::<Result<_, _>>()?;
    let jp: Vec<Vec<Node>> = sys
        .rhs
        .iter()
        .map(|e| wrt.iter().map(|w| prepared.compile(&e.diff(w))).collect())
        .collect::<Result<_, _>>()?;
    let obs = prepared.compile(&sys.observable)?;
    let obs_dx: Vec<Node> = sys
        .states
        .iter()
        .map(|s| prepared.compile(&sys.observable.diff(s)))
        .collect::<Result<_, _>>()?;
    let obs_dp: Vec<Node> = wrt
        .iter()
        .map(|w| prepared.compile(&sys.observable.diff(w)))
        .collect::<Result<_, _>>()?;

    let t_end = *times.last().unwrap();
    let steps = match fixed_steps {
        Some(n) => n,
        None => {
            let span = t_end - times[0];
            let h_max = if span > 0.0 { span } else { t_end } / MIN_STEPS_PER_SPAN as f64;
            if t_end == 0.0 {
                0
            } else {
                let n = (t_end / h_max).ceil() as usize;
                if n > MAX_STEPS {
                    return Err(ModelError::InvalidTimes(format!("{n} RK4 steps exceed the limit")));
                }
                n.max(MIN_STEPS_PER_SPAN)
            }
        }
    };
    let h = if steps == 0 { 0.0 } else { t_end / steps as f64 };

    // Augmented state: x (ns) followed by sensitivities S[i][j] at ns + i*nw + j.
    let dim = ns + ns * nw;
    let mut y = vec![0.0; dim];
    for (i, init) in sys.initial.iter().enumerate() {
        if let Some(p) = init {
            let slot = prepared.layout.slot(p).ok_or_else(|| ModelError::UnboundSymbol(p.clone()))?;
            y[i] = prepared.base[slot];
            if let Some(j) = wrt.iter().position(|w| w == p) {
                y[ns + i * nw + j] = 1.0;
            }
        }
    }
    let offset = prepared.state_offset;
    let mut vars = prepared.base.clone();
    let mut jx_val = vec![0.0; ns * ns];
    let mut deriv = |t: f64, y: &[f64], out: &mut [f64], vars: &mut Vec<f64>| {
        vars[0] = t;
        vars[offset..offset + ns].copy_from_slice(&y[..ns]);
        for i in 0..ns {
            out[i] = rhs[i].eval(vars);
        }
        if nw > 0 {
            for i in 0..ns {
                for l in 0..ns {
                    jx_val[i * ns + l] = jx[i][l].eval(vars);
                }
            }
            for i in 0..ns {
                for j in 0..nw {
                    let mut acc = jp[i][j].eval(vars);
                    for l in 0..ns {
                        acc += jx_val[i * ns + l] * y[ns + l * nw + j];
                    }
                    out[ns + i * nw + j] = acc;
                }
            }
        }
    };

    let observe = |y: &[f64], t: f64, vars: &mut Vec<f64>| -> (f64, Vec<f64>) {
        vars[0] = t;
        vars[offset..offset + ns].copy_from_slice(&y[..ns]);
        let value = obs.eval(vars);
        let dx: Vec<f64> = obs_dx.iter().map(|n| n.eval(vars)).collect();
        let grad = (0..nw)
            .map(|j| {
                let mut acc = obs_dp[j].eval(vars);
                for l in 0..ns {
                    acc += dx[l] * y[ns + l * nw + j];
                }
                acc
            })
            .collect();
        (value, grad)
    };

    let mut node_values = Vec::with_capacity(steps + 1);
    let mut node_states: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    node_values.push(observe(&y, 0.0, &mut vars).0);
    node_states.push(y.clone());
    let mut k = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    let mut tmp = vec![0.0; dim];
    let mut rk4 = |y: &mut [f64], t: f64, h: f64, vars: &mut Vec<f64>| {
        let [k1, k2, k3, k4] = &mut k;
        deriv(t, y, k1, vars);
        for d in 0..dim {
            tmp[d] = y[d] + 0.5 * h * k1[d];
        }
        deriv(t + 0.5 * h, &tmp, k2, vars);
        for d in 0..dim {
            tmp[d] = y[d] + 0.5 * h * k2[d];
        }
        deriv(t + 0.5 * h, &tmp, k3, vars);
        for d in 0..dim {
            tmp[d] = y[d] + h * k3[d];
        }
        deriv(t + h, &tmp, k4, vars);
        for d in 0..dim {
            y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
    };
    for step in 0..steps {
        let t = step as f64 * h;
        rk4(&mut y, t, h, &mut vars);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NumericalOverflow(format!(
                "{} diverged at t = {}",
                prepared.model.name,
                t + h
            )));
        }
        node_values.push(observe(&y, (step + 1) as f64 * h, &mut vars).0);
        node_states.push(y.clone());
    }

    // Off-node times are reached by one partial step from the preceding node,
    // which keeps them at the integrator's order.
    let mut values = Vec::with_capacity(times.len());
    let mut jac = Vec::with_capacity(times.len());
    for &t in times {
        let k = if steps == 0 { 0 } else { ((t / h).floor() as usize).min(steps) };
        let mut state = node_states[k].clone();
        let dt = t - k as f64 * h;
        if dt > 0.0 {
            rk4(&mut state, k as f64 * h, dt, &mut vars);
        }
        let (v, g) = observe(&state, t, &mut vars);
        values.push(v);
        jac.push(g);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NumericalOverflow(prepared.model.name.clone()));
    }
    Ok((values, jac, node_values))
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64, ModelError> {
    if observed.len() != predicted.len() {
        return Err(ModelError::LengthMismatch {
            observed: observed.len(),
            predicted: predicted.len(),
        });
    }
    if observed.len() < 3 {
        return Err(ModelError::InsufficientData {
            needed: 3,
            got: observed.len(),
        });
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    if ss_tot == 0.0 || observed.iter().all(|o| *o == observed[0]) {
        return Err(ModelError::DegenerateObservations);
    }
    let ss_res: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogFile {
    version: u32,
    models: Vec<CatalogEntry>,
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogBinding {
    symbol: String,
    role: Role,
    unit: String,
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogEntry {
    name: String,
    title: String,
    form: String,
    equation: String,
    strain_symbol: String,
    time_symbol: String,
    bindings: Vec<CatalogBinding>,
    #[serde(default)]
    states: Vec<String>,
    #[serde(default)]
    rhs: Vec<String>,
    #[serde(default)]
    initial: BTreeMap<String, String>,
    #[serde(default)]
    observable: Option<String>,
    parameters: Vec<ParameterSpec>,
}

const BUILTIN_CATALOG: &str = include_str!("../../data/catalog.json");

/// Versioned registry of named constitutive forms.
#[derive(Debug, Clone)]
pub struct Catalog {
    pub version: u32,
    models: Vec<ConstitutiveModel>,
}

impl Catalog {
    pub fn builtin() -> Catalog {
        Catalog::from_json(BUILTIN_CATALOG).expect("bundled catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<Catalog, ModelError> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| ModelError::Catalog(e.to_string()))?;
        let models = file
            .models
            .into_iter()
            .map(build_entry)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Catalog {
            version: file.version,
            models,
        })
    }

    pub fn get(&self, name: &str) -> Result<&ConstitutiveModel, ModelError> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| ModelError::UnknownModel(name.to_string()))
    }

    pub fn models(&self) -> &[ConstitutiveModel] {
        &self.models
    }

    pub fn names(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.name.as_str()).collect()
    }
}

fn build_entry(entry: CatalogEntry) -> Result<ConstitutiveModel, ModelError> {
    let err = |msg: String| ModelError::Catalog(format!("{}: {msg}", entry.name));
    let (lhs, rhs) = parse_equation(&entry.equation).map_err(|e| err(e.to_string()))?;
    let bindings = entry
        .bindings
        .iter()
        .map(|b| SymbolBinding::new(&b.symbol, b.role, &b.unit))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| err(e.to_string()))?;
    let equation = Equation::new(lhs, rhs, bindings).map_err(|e| err(e.to_string()))?;
    let conditions: Vec<String> = equation
        .bindings
        .iter()
        .filter(|b| matches!(b.role, Role::Stress | Role::Temperature))
        .map(|b| b.symbol.clone())
        .collect();
    let constants: Values = equation
        .bindings
        .iter()
        .filter(|b| b.role == Role::GasConstant)
        .map(|b| (b.symbol.clone(), GAS_CONSTANT))
        .collect();
    let kind = match entry.form.as_str() {
        "closed" => {
            if equation.lhs != Expr::Sym(entry.strain_symbol.clone()) {
                return Err(err("closed form must have the strain symbol on the left".into()));
            }
            ModelKind::ClosedForm {
                strain: equation.rhs.clone(),
            }
        }
        "rate" => ModelKind::OdeSystem(OdeSystem {
            states: vec![entry.strain_symbol.clone()],
            rhs: vec![equation.rhs.clone()],
            initial: vec![entry.initial.get(&entry.strain_symbol).cloned()],
            observable: Expr::Sym(entry.strain_symbol.clone()),
        }),
        "ode" => {
            if entry.states.len() != entry.rhs.len() || entry.states.is_empty() {
                return Err(err("states and rhs must have equal, non-zero length".into()));
            }
            let rhs = entry
                .rhs
                .iter()
                .map(|r| parse_expression(r))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(e.to_string()))?;
            let observable = parse_expression(entry.observable.as_deref().unwrap_or(&entry.strain_symbol))
                .map_err(|e| err(e.to_string()))?;
            ModelKind::OdeSystem(OdeSystem {
                initial: entry.states.iter().map(|s| entry.initial.get(s).cloned()).collect(),
                states: entry.states.clone(),
                rhs,
                observable,
            })
        }
        other => return Err(err(format!("unknown form '{other}'"))),
    };
    let model = ConstitutiveModel {
        name: entry.name.clone(),
        title: entry.title.clone(),
        equation,
        kind,
        time_symbol: entry.time_symbol.clone(),
        strain_symbol: entry.strain_symbol.clone(),
        parameters: entry.parameters.clone(),
        conditions,
        constants,
    };
    // ODE right-hand sides may reference only state, parameter, condition,
    // constant and time symbols.
    if let ModelKind::OdeSystem(sys) = &model.kind {
        for e in sys.rhs.iter().chain(std::iter::once(&sys.observable)) {
            for s in e.symbols() {
                let known = s == model.time_symbol
                    || sys.states.contains(&s)
                    || model.parameter(&s).is_some()
                    || model.conditions.contains(&s)
                    || model.constants.contains_key(&s);
                if !known {
                    return Err(err(format!("symbol '{s}' is not a state, parameter or condition")));
                }
            }
        }
    }
    Ok(model)
}
