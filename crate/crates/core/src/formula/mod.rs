//! Formula parsing, unit binding and dimensional homogeneity.

mod dimension;
mod expr;
mod parser;
pub mod units;

use std::collections::BTreeMap;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dimension::{small_rational, Dimension, Exponent, BASE_COUNT, BASE_SYMBOLS, MAX_DENOMINATOR};
pub use expr::{num, sym, EvalError, Expr, Func};
pub use parser::{parse_equation, parse_expression, ParseError, MAX_DEPTH};
pub use units::{parse_quantity, parse_unit, standardize, CanonicalValue, UnitError};

/// Physical role a symbol plays in a constitutive law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Strain,
    StrainRate,
    Stress,
    Time,
    Temperature,
    ActivationEnergy,
    GasConstant,
    Parameter,
    Other,
}

impl Role {
    pub const ALL: [Role; 9] = [
        Role::Strain,
        Role::StrainRate,
        Role::Stress,
        Role::Time,
        Role::Temperature,
        Role::ActivationEnergy,
        Role::GasConstant,
        Role::Parameter,
        Role::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Strain => "strain",
            Role::StrainRate => "strain_rate",
            Role::Stress => "stress",
            Role::Time => "time",
            Role::Temperature => "temperature",
            Role::ActivationEnergy => "activation_energy",
            Role::GasConstant => "gas_constant",
            Role::Parameter => "parameter",
            Role::Other => "other",
        }
    }

    pub fn from_str_opt(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

/// A symbol tied to a role and a unit; the dimension always comes from the unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolBinding {
    pub symbol: String,
    pub role: Role,
    pub unit: String,
    pub dimension: Dimension,
}

impl SymbolBinding {
    pub fn new(symbol: &str, role: Role, unit: &str) -> Result<Self, UnitError> {
        let parsed = parse_unit(unit)?;
        Ok(SymbolBinding {
            symbol: symbol.to_string(),
            role,
            unit: unit.to_string(),
            dimension: parsed.dimension,
        })
    }
}

// The serialized dimension is informational; it is re-derived from the unit.
impl<'de> Deserialize<'de> for SymbolBinding {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            symbol: String,
            role: Role,
            unit: String,
        }
        let r = Raw::deserialize(d)?;
        SymbolBinding::new(&r.symbol, r.role, &r.unit).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BindingError {
    #[error("symbol '{0}' bound more than once")]
    Duplicate(String),
    #[error(transparent)]
    Unit(#[from] UnitError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    pub lhs: Expr,
    pub rhs: Expr,
    pub bindings: Vec<SymbolBinding>,
}

impl Equation {
    pub fn new(lhs: Expr, rhs: Expr, bindings: Vec<SymbolBinding>) -> Result<Self, BindingError> {
        let mut seen = std::collections::BTreeSet::new();
        for b in &bindings {
            if !seen.insert(b.symbol.clone()) {
                return Err(BindingError::Duplicate(b.symbol.clone()));
            }
        }
        Ok(Equation { lhs, rhs, bindings })
    }

    pub fn binding(&self, symbol: &str) -> Option<&SymbolBinding> {
        self.bindings.iter().find(|b| b.symbol == symbol)
    }

    /// Symbols appearing in either side with no binding, sorted.
    pub fn unbound_symbols(&self) -> Vec<String> {
        let mut all = self.lhs.symbols();
        all.extend(self.rhs.symbols());
        all.into_iter().filter(|s| self.binding(s).is_none()).collect()
    }

    pub fn text(&self) -> String {
        format!("{} = {}", self.lhs, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimensionError {
    Unbound { symbol: String },
    Mismatch { at: String, left: Dimension, right: Dimension },
    NonDimensionlessArgument { at: String, argument: Dimension },
    UnsupportedExponent { at: String, reason: String },
}

impl DimensionError {
    /// Rendered subtree where the error was detected.
    pub fn location(&self) -> &str {
        match self {
            DimensionError::Unbound { symbol } => symbol,
            DimensionError::Mismatch { at, .. }
            | DimensionError::NonDimensionlessArgument { at, .. }
            | DimensionError::UnsupportedExponent { at, .. } => at,
        }
    }
}

impl std::fmt::Display for DimensionError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DimensionError::Unbound { symbol } => write!(f, "unbound symbol '{symbol}'"),
            DimensionError::Mismatch { at, left, right } => {
                write!(f, "dimension mismatch at '{at}': {left} vs {right}")
            }
            DimensionError::NonDimensionlessArgument { at, argument } => {
                write!(f, "argument of '{at}' must be dimensionless, found {argument}")
            }
            DimensionError::UnsupportedExponent { at, reason } => {
                write!(f, "unsupported exponent at '{at}': {reason}")
            }
        }
    }
}

impl std::error::Error for DimensionError {}

/// Symbol table used during inference.
pub trait DimensionLookup {
    fn dimension_of(&self, symbol: &str) -> Option<Dimension>;
}

impl DimensionLookup for [SymbolBinding] {
    fn dimension_of(&self, symbol: &str) -> Option<Dimension> {
        self.iter().find(|b| b.symbol == symbol).map(|b| b.dimension.clone())
    }
}

impl DimensionLookup for Vec<SymbolBinding> {
    fn dimension_of(&self, symbol: &str) -> Option<Dimension> {
        self.as_slice().dimension_of(symbol)
    }
}

impl DimensionLookup for BTreeMap<String, Dimension> {
    fn dimension_of(&self, symbol: &str) -> Option<Dimension> {
        self.get(symbol).cloned()
    }
}

pub fn infer_dimension(expr: &Expr, bindings: &(impl DimensionLookup + ?Sized)) -> Result<Dimension, DimensionError> {
    match expr {
        Expr::Const(_) => Ok(Dimension::dimensionless()),
        Expr::Sym(s) => bindings
            .dimension_of(s)
            .ok_or_else(|| DimensionError::Unbound { symbol: s.clone() }),
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let left = infer_dimension(a, bindings)?;
            let right = infer_dimension(b, bindings)?;
            if left == right {
                Ok(left)
            } else {
                Err(DimensionError::Mismatch {
                    at: expr.to_string(),
                    left,
                    right,
                })
            }
        }
        Expr::Mul(a, b) => Ok(infer_dimension(a, bindings)?.mul(&infer_dimension(b, bindings)?)),
        Expr::Div(a, b) => Ok(infer_dimension(a, bindings)?.div(&infer_dimension(b, bindings)?)),
        Expr::Neg(a) => infer_dimension(a, bindings),
        Expr::Func(_, a) => {
            let arg = infer_dimension(a, bindings)?;
            if arg.is_dimensionless() {
                Ok(arg)
            } else {
                Err(DimensionError::NonDimensionlessArgument {
                    at: expr.to_string(),
                    argument: arg,
                })
            }
        }
        Expr::Pow(base, exponent) => {
            let exp_dim = infer_dimension(exponent, bindings)?;
            if !exp_dim.is_dimensionless() {
                return Err(DimensionError::NonDimensionlessArgument {
                    at: expr.to_string(),
                    argument: exp_dim,
                });
            }
            let base_dim = infer_dimension(base, bindings)?;
            if base_dim.is_dimensionless() {
                return Ok(base_dim);
            }
            let affine = affine_exponent(exponent).map_err(|reason| DimensionError::UnsupportedExponent {
                at: expr.to_string(),
                reason,
            })?;
            base_dim.pow(&affine).ok_or_else(|| DimensionError::UnsupportedExponent {
                at: expr.to_string(),
                reason: "resulting dimension is not affine in exponent symbols or has denominator > 6".into(),
            })
        }
        Expr::Derivative { target, wrt, order } => {
            let x = bindings
                .dimension_of(target)
                .ok_or_else(|| DimensionError::Unbound { symbol: target.clone() })?;
            let t = bindings
                .dimension_of(wrt)
                .ok_or_else(|| DimensionError::Unbound { symbol: wrt.clone() })?;
            Ok(x.div(&t.powi(*order as i64)))
        }
    }
}

/// Interpret an exponent expression as an affine form over symbols.
fn affine_exponent(e: &Expr) -> Result<Exponent, String> {
    match e {
        Expr::Const(c) => small_rational(*c)
            .map(Exponent::constant)
            .ok_or_else(|| format!("constant exponent {c} is not a ratio with denominator <= {MAX_DENOMINATOR}")),
        Expr::Sym(s) => Ok(Exponent::symbol(s, Rational64::from_integer(1))),
        Expr::Neg(a) => Ok(affine_exponent(a)?.neg()),
        Expr::Add(a, b) => Ok(affine_exponent(a)?.add(&affine_exponent(b)?)),
        Expr::Sub(a, b) => Ok(affine_exponent(a)?.sub(&affine_exponent(b)?)),
        Expr::Mul(a, b) => affine_exponent(a)?
            .mul(&affine_exponent(b)?)
            .ok_or_else(|| "product of two symbolic exponents".to_string()),
        Expr::Div(a, b) => {
            let den = affine_exponent(b)?;
            if !den.is_constant() || den.constant_part() == Rational64::from_integer(0) {
                return Err("exponent divided by a symbol or zero".into());
            }
            Ok(affine_exponent(a)?.scale(den.constant_part().recip()))
        }
        _ => Err(format!("exponent '{e}' is not affine in its symbols")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lhs,
    Rhs,
    Equation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityFailure {
    pub side: Side,
    pub error: DimensionError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub pass: bool,
    pub lhs_dim: Option<Dimension>,
    pub rhs_dim: Option<Dimension>,
    pub failures: Vec<HomogeneityFailure>,
}

pub fn check_homogeneity(eq: &Equation) -> HomogeneityReport {
    let mut failures = Vec::new();
    let mut side_dim = |side: Side, e: &Expr| match infer_dimension(e, &eq.bindings) {
        Ok(d) => Some(d),
        Err(error) => {
            failures.push(HomogeneityFailure { side, error });
            None
        }
    };
    let lhs_dim = side_dim(Side::Lhs, &eq.lhs);
    let rhs_dim = side_dim(Side::Rhs, &eq.rhs);
    if let (Some(l), Some(r)) = (&lhs_dim, &rhs_dim) {
        if l != r {
            failures.push(HomogeneityFailure {
                side: Side::Equation,
                error: DimensionError::Mismatch {
                    at: eq.text(),
                    left: l.clone(),
                    right: r.clone(),
                },
            });
        }
    }
    HomogeneityReport {
        pass: failures.is_empty(),
        lhs_dim,
        rhs_dim,
        failures,
    }
}
