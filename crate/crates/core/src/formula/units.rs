//! Unit-tag vocabulary and conversion to canonical units.
//!
//! Canonical units are K (temperature), MPa (stress), s (time) and plain
//! fractions for strain. Every other dimension is canonical in coherent SI.

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use super::dimension::{small_rational, Dimension, Exponent, BASE_COUNT};

pub const UNIT_TABLE_VERSION: u32 = 1;

/// Universal gas constant, J/(mol·K).
pub const GAS_CONSTANT: f64 = 8.314_462_618;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitDef {
    pub tag: &'static str,
    pub aliases: &'static [&'static str],
    /// Integer exponents over (length, mass, time, temperature, amount).
    pub dims: [i64; BASE_COUNT],
    /// Multiply by this to reach coherent SI.
    pub factor: f64,
    /// Added after scaling; only meaningful for temperatures.
    pub offset: f64,
}

const L: [i64; 5] = [1, 0, 0, 0, 0];
const M: [i64; 5] = [0, 1, 0, 0, 0];
const T: [i64; 5] = [0, 0, 1, 0, 0];
const TH: [i64; 5] = [0, 0, 0, 1, 0];
const N: [i64; 5] = [0, 0, 0, 0, 1];
const ONE: [i64; 5] = [0, 0, 0, 0, 0];
const STRESS: [i64; 5] = [-1, 1, -2, 0, 0];
const FORCE: [i64; 5] = [1, 1, -2, 0, 0];
const ENERGY: [i64; 5] = [2, 1, -2, 0, 0];
const FREQ: [i64; 5] = [0, 0, -1, 0, 0];

const PSI: f64 = 6_894.757_293_168_361;

pub static UNIT_TABLE: &[UnitDef] = &[
    UnitDef { tag: "1", aliases: &["dimensionless", "-", "strain", "fraction", "rad"], dims: ONE, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "%", aliases: &["%strain", "pct", "percent"], dims: ONE, factor: 0.01, offset: 0.0 },
    UnitDef { tag: "m", aliases: &[], dims: L, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "cm", aliases: &[], dims: L, factor: 1e-2, offset: 0.0 },
    UnitDef { tag: "mm", aliases: &[], dims: L, factor: 1e-3, offset: 0.0 },
    UnitDef { tag: "um", aliases: &["µm", "μm"], dims: L, factor: 1e-6, offset: 0.0 },
    UnitDef { tag: "kg", aliases: &[], dims: M, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "g", aliases: &[], dims: M, factor: 1e-3, offset: 0.0 },
    UnitDef { tag: "s", aliases: &["sec"], dims: T, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "ms", aliases: &[], dims: T, factor: 1e-3, offset: 0.0 },
    UnitDef { tag: "min", aliases: &[], dims: T, factor: 60.0, offset: 0.0 },
    UnitDef { tag: "h", aliases: &["hr", "hour"], dims: T, factor: 3600.0, offset: 0.0 },
    UnitDef { tag: "d", aliases: &["day"], dims: T, factor: 86_400.0, offset: 0.0 },
    UnitDef { tag: "K", aliases: &[], dims: TH, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "°C", aliases: &["degC", "C", "℃"], dims: TH, factor: 1.0, offset: 273.15 },
    UnitDef { tag: "°F", aliases: &["degF", "F", "℉"], dims: TH, factor: 5.0 / 9.0, offset: 459.67 * 5.0 / 9.0 },
    UnitDef { tag: "mol", aliases: &[], dims: N, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "N", aliases: &[], dims: FORCE, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "kN", aliases: &[], dims: FORCE, factor: 1e3, offset: 0.0 },
    UnitDef { tag: "Pa", aliases: &[], dims: STRESS, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "kPa", aliases: &[], dims: STRESS, factor: 1e3, offset: 0.0 },
    UnitDef { tag: "MPa", aliases: &[], dims: STRESS, factor: 1e6, offset: 0.0 },
    UnitDef { tag: "GPa", aliases: &[], dims: STRESS, factor: 1e9, offset: 0.0 },
    UnitDef { tag: "bar", aliases: &[], dims: STRESS, factor: 1e5, offset: 0.0 },
    UnitDef { tag: "psi", aliases: &[], dims: STRESS, factor: PSI, offset: 0.0 },
    UnitDef { tag: "ksi", aliases: &[], dims: STRESS, factor: PSI * 1e3, offset: 0.0 },
    UnitDef { tag: "J", aliases: &[], dims: ENERGY, factor: 1.0, offset: 0.0 },
    UnitDef { tag: "kJ", aliases: &[], dims: ENERGY, factor: 1e3, offset: 0.0 },
    UnitDef { tag: "eV", aliases: &[], dims: ENERGY, factor: 1.602_176_634e-19, offset: 0.0 },
    UnitDef { tag: "Hz", aliases: &[], dims: FREQ, factor: 1.0, offset: 0.0 },
];

pub fn lookup_atom(tag: &str) -> Option<&'static UnitDef> {
    UNIT_TABLE
        .iter()
        .find(|u| u.tag == tag || u.aliases.contains(&tag))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UnitError {
    #[error("unknown unit '{0}'")]
    UnknownUnit(String),
    #[error("malformed unit expression '{text}': {message}")]
    Malformed { text: String, message: String },
    #[error("unit '{0}' has symbolic exponents and no numeric conversion factor")]
    SymbolicFactor(String),
    #[error("cannot read a quantity from '{0}'")]
    BadQuantity(String),
}

/// A parsed unit expression such as `J/(mol*K)` or `MPa^-n*s^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitExpr {
    pub text: String,
    pub dimension: Dimension,
    /// Factor to coherent SI; `None` when an exponent is symbolic.
    pub si_factor: Option<f64>,
    /// Offset to SI, only for a bare single atom (°C, °F).
    pub si_offset: f64,
}

impl UnitExpr {
    /// Factor from this unit to the canonical unit of its dimension.
    pub fn canonical_factor(&self) -> Option<f64> {
        let si = self.si_factor?;
        Some(si / canonical_si_factor(&self.dimension))
    }

    pub fn canonical_offset(&self) -> f64 {
        self.si_offset / canonical_si_factor(&self.dimension)
    }
}

/// SI value of one canonical unit for a dimension: 1e6 for stress (MPa), 1 otherwise.
pub fn canonical_si_factor(dimension: &Dimension) -> f64 {
    if *dimension == Dimension::stress() {
        1e6
    } else {
        1.0
    }
}

pub fn canonical_tag(dimension: &Dimension) -> String {
    if dimension.is_dimensionless() {
        "1".into()
    } else if *dimension == Dimension::stress() {
        "MPa".into()
    } else if *dimension == Dimension::temperature() {
        "K".into()
    } else if *dimension == Dimension::time() {
        "s".into()
    } else {
        dimension.to_string()
    }
}

pub fn parse_unit(text: &str) -> Result<UnitExpr, UnitError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(UnitError::UnknownUnit(text.to_string()));
    }
    // Whole-string lookup first so tags containing operators ("%strain") work.
    if let Some(def) = lookup_atom(trimmed) {
        return Ok(UnitExpr {
            text: trimmed.to_string(),
            dimension: Dimension::from_integers(def.dims),
            si_factor: Some(def.factor),
            si_offset: def.offset,
        });
    }
    let mut parser = UnitParser {
        text: trimmed,
        chars: trimmed.char_indices().collect(),
        pos: 0,
    };
    let (dimension, factor) = parser.product()?;
    parser.skip_ws();
    if parser.pos < parser.chars.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(UnitExpr {
        text: trimmed.to_string(),
        dimension,
        si_factor: factor,
        si_offset: 0.0,
    })
}

struct UnitParser<'a> {
    text: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
}

type UnitValue = (Dimension, Option<f64>);

impl UnitParser<'_> {
    fn error(&self, message: &str) -> UnitError {
        UnitError::Malformed {
            text: self.text.to_string(),
            message: format!("{message} at position {}", self.pos),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|(_, c)| *c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn product(&mut self) -> Result<UnitValue, UnitError> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('*') | Some('·') | Some('.') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = combine(acc, rhs, false);
                }
                Some('/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    acc = combine(acc, rhs, true);
                }
                // juxtaposition "N m" multiplies
                Some(c) if is_unit_char(c) || c == '(' => {
                    let rhs = self.factor()?;
                    acc = combine(acc, rhs, false);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<UnitValue, UnitError> {
        self.skip_ws();
        let base = match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.product()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                inner
            }
            Some(c) if is_unit_char(c) => {
                let start = self.pos;
                while self.peek().is_some_and(is_unit_char) {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().map(|(_, c)| *c).collect();
                if name == "1" {
                    (Dimension::dimensionless(), Some(1.0))
                } else {
                    let def = lookup_atom(&name).ok_or(UnitError::UnknownUnit(name.clone()))?;
                    (Dimension::from_integers(def.dims), Some(def.factor))
                }
            }
            _ => return Err(self.error("expected a unit")),
        };
        self.skip_ws();
        if self.peek() == Some('^') {
            self.pos += 1;
            let exponent = self.exponent()?;
            let dimension = base
                .0
                .pow(&exponent)
                .ok_or_else(|| self.error("exponent not representable"))?;
            let factor = match (base.1, exponent.is_constant()) {
                (Some(f), true) => Some(f.powf(exponent.constant_part().to_f64().unwrap_or(f64::NAN))),
                (Some(f), false) if f == 1.0 => Some(1.0),
                _ => None,
            };
            return Ok((dimension, factor));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Exponent, UnitError> {
        self.skip_ws();
        let mut sign = 1i64;
        if self.peek() == Some('-') {
            sign = -1;
            self.pos += 1;
        } else if self.peek() == Some('+') {
            self.pos += 1;
        }
        self.skip_ws();
        if self.peek() == Some('(') {
            self.pos += 1;
            let inner = self.exponent_sum()?;
            if self.peek() != Some(')') {
                return Err(self.error("expected ')' in exponent"));
            }
            self.pos += 1;
            return Ok(inner.scale(Rational64::from_integer(sign)));
        }
        let atom = self.exponent_atom()?;
        Ok(atom.scale(Rational64::from_integer(sign)))
    }

    fn exponent_sum(&mut self) -> Result<Exponent, UnitError> {
        let mut acc = self.exponent()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    let rhs = self.exponent()?;
                    acc = acc.add(&rhs);
                }
                Some('-') => {
                    self.pos += 1;
                    let rhs = self.exponent()?;
                    acc = acc.sub(&rhs);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn exponent_atom(&mut self) -> Result<Exponent, UnitError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek().is_some_and(|c| c.is_ascii_digit()) {
            while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                self.pos += 1;
            }
            let num: String = self.chars[start..self.pos].iter().map(|(_, c)| *c).collect();
            let value: f64 = num.parse().map_err(|_| self.error("bad exponent"))?;
            let mut ratio = small_rational(value).ok_or_else(|| self.error("exponent denominator too large"))?;
            if self.peek() == Some('/') {
                // "1/2" as an exponent
                let save = self.pos;
                self.pos += 1;
                let dstart = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                if self.pos == dstart {
                    self.pos = save;
                } else {
                    let den: String = self.chars[dstart..self.pos].iter().map(|(_, c)| *c).collect();
                    let den: i64 = den.parse().map_err(|_| self.error("bad exponent"))?;
                    if den == 0 {
                        return Err(self.error("zero denominator"));
                    }
                    ratio /= Rational64::from_integer(den);
                }
            }
            // "2n" style coefficient on a symbol
            if self.peek().is_some_and(|c| c.is_alphabetic()) {
                let sym = self.symbol_name();
                return Ok(Exponent::symbol(&sym, ratio));
            }
            return Ok(Exponent::constant(ratio));
        }
        if self.peek().is_some_and(|c| c.is_alphabetic() || c == '_') {
            let sym = self.symbol_name();
            return Ok(Exponent::symbol(&sym, Rational64::from_integer(1)));
        }
        Err(self.error("expected exponent"))
    }

    fn symbol_name(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().map(|(_, c)| *c).collect()
    }
}

fn is_unit_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '%' | '°' | 'µ' | 'μ' | '℃' | '℉' | '_')
}

fn combine(a: UnitValue, b: UnitValue, divide: bool) -> UnitValue {
    let dimension = if divide { a.0.div(&b.0) } else { a.0.mul(&b.0) };
    let factor = match (a.1, b.1) {
        (Some(x), Some(y)) => Some(if divide { x / y } else { x * y }),
        _ => None,
    };
    (dimension, factor)
}

/// A value expressed in canonical units together with its dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalValue {
    pub value: f64,
    pub unit: String,
    pub dimension: Dimension,
}

/// Convert `value` in `unit` to the canonical unit of its dimension.
pub fn standardize(value: f64, unit: &str) -> Result<CanonicalValue, UnitError> {
    let parsed = parse_unit(unit)?;
    let factor = parsed
        .canonical_factor()
        .ok_or_else(|| UnitError::SymbolicFactor(unit.to_string()))?;
    Ok(CanonicalValue {
        value: value * factor + parsed.canonical_offset(),
        unit: canonical_tag(&parsed.dimension),
        dimension: parsed.dimension,
    })
}

/// Parse text like `31.6 MPa`, `σ = 31.6 MPa` or `600°C` into a canonical value.
pub fn parse_quantity(text: &str) -> Result<CanonicalValue, UnitError> {
    let body = match text.rsplit_once('=') {
        Some((_, rhs)) => rhs,
        None => text,
    }
    .trim();
    let split = body
        .char_indices()
        .map(|(i, c)| i + c.len_utf8())
        .filter(|end| body[..*end].trim().parse::<f64>().is_ok())
        .last()
        .ok_or_else(|| UnitError::BadQuantity(text.to_string()))?;
    let (num, unit) = body.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| UnitError::BadQuantity(text.to_string()))?;
    let unit = unit.trim();
    standardize(value, if unit.is_empty() { "1" } else { unit })
}

/// The versioned unit table as comma-separated text
/// (`tag,aliases,L,M,T,Θ,N,factor,offset`), factors relative to canonical units.
pub fn unit_table_csv() -> String {
    let mut out = format!("# unit table version {UNIT_TABLE_VERSION}\n");
    out.push_str("tag,aliases,length,mass,time,temperature,amount,factor,offset,canonical\n");
    for def in UNIT_TABLE {
        let dim = Dimension::from_integers(def.dims);
        let canon = canonical_si_factor(&dim);
        let [l, m, t, th, n] = def.dims;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            def.tag,
            def.aliases.join(" "),
            l,
            m,
            t,
            th,
            n,
            def.factor / canon,
            def.offset / canon,
            canonical_tag(&dim)
        ));
    }
    out
}

/// True when two canonical values agree in dimension and value (relative 1e-9).
pub fn same_quantity(a: &CanonicalValue, b: &CanonicalValue) -> bool {
    if a.dimension != b.dimension {
        return false;
    }
    let scale = a.value.abs().max(b.value.abs());
    if scale.is_zero() {
        return true;
    }
    (a.value - b.value).abs() <= 1e-9 * scale
}
