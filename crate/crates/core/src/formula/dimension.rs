use std::collections::BTreeMap;
use std::fmt;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Largest exponent denominator a dimension may carry.
pub const MAX_DENOMINATOR: i64 = 6;

/// Number of base dimensions: length, mass, time, temperature, amount.
pub const BASE_COUNT: usize = 5;

pub const BASE_SYMBOLS: [&str; BASE_COUNT] = ["m", "kg", "s", "K", "mol"];

/// An exponent that is affine in dimensionless symbols, e.g. `-n` or `2n - 1`.
///
/// Fitted exponents of creep laws (the `n` in `sigma^n`) are symbols, so the
/// dimension of `A` in `A*sigma^n` is only expressible with symbolic exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Exponent {
    constant: Rational64,
    symbolic: BTreeMap<String, Rational64>,
}

impl Exponent {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: Rational64) -> Self {
        Exponent {
            constant: value,
            symbolic: BTreeMap::new(),
        }
    }

    pub fn integer(value: i64) -> Self {
        Self::constant(Rational64::from_integer(value))
    }

    pub fn symbol(name: &str, coefficient: Rational64) -> Self {
        let mut symbolic = BTreeMap::new();
        if !coefficient.is_zero() {
            symbolic.insert(name.to_string(), coefficient);
        }
        Exponent {
            constant: Rational64::zero(),
            symbolic,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant.is_zero() && self.symbolic.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.symbolic.is_empty()
    }

    pub fn constant_part(&self) -> Rational64 {
        self.constant
    }

    pub fn symbolic_terms(&self) -> &BTreeMap<String, Rational64> {
        &self.symbolic
    }

    pub fn add(&self, other: &Exponent) -> Exponent {
        let mut out = self.clone();
        out.constant += other.constant;
        for (name, coeff) in &other.symbolic {
            let entry = out.symbolic.entry(name.clone()).or_insert_with(Rational64::zero);
            *entry += coeff;
        }
        out.symbolic.retain(|_, c| !c.is_zero());
        out
    }

    pub fn neg(&self) -> Exponent {
        self.scale(-Rational64::one())
    }

    pub fn sub(&self, other: &Exponent) -> Exponent {
        self.add(&other.neg())
    }

    pub fn scale(&self, factor: Rational64) -> Exponent {
        if factor.is_zero() {
            return Exponent::zero();
        }
        Exponent {
            constant: self.constant * factor,
            symbolic: self
                .symbolic
                .iter()
                .map(|(k, v)| (k.clone(), *v * factor))
                .collect(),
        }
    }

    /// Product of two exponents; defined only while the result stays affine.
    pub fn mul(&self, other: &Exponent) -> Option<Exponent> {
        if self.is_constant() {
            Some(other.scale(self.constant))
        } else if other.is_constant() {
            Some(self.scale(other.constant))
        } else {
            None
        }
    }

    /// Numeric value with every symbol substituted.
    pub fn evaluate(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Option<f64> {
        let mut total = self.constant.to_f64()?;
        for (name, coeff) in &self.symbolic {
            total += coeff.to_f64()? * lookup(name)?;
        }
        Some(total)
    }

    fn denominators_ok(&self) -> bool {
        std::iter::once(&self.constant)
            .chain(self.symbolic.values())
            .all(|r| r.denom().abs() <= MAX_DENOMINATOR)
    }
}

fn fmt_ratio(r: &Rational64) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "{}", fmt_ratio(&self.constant));
        }
        let mut parts = Vec::new();
        for (name, coeff) in &self.symbolic {
            let term = if coeff.is_one() {
                name.clone()
            } else if *coeff == -Rational64::one() {
                format!("-{name}")
            } else {
                format!("{}{}", fmt_ratio(coeff), name)
            };
            parts.push(term);
        }
        if !self.constant.is_zero() {
            parts.push(fmt_ratio(&self.constant));
        }
        let mut text = String::new();
        for (i, part) in parts.iter().enumerate() {
            if i > 0 && !part.starts_with('-') {
                text.push('+');
            }
            text.push_str(part);
        }
        write!(f, "({text})")
    }
}

/// Exponent vector over the five base dimensions. The zero vector is
/// dimensionless.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Dimension {
    exponents: [Exponent; BASE_COUNT],
}

impl Dimension {
    pub fn dimensionless() -> Self {
        Self::default()
    }

    pub fn from_integers(exps: [i64; BASE_COUNT]) -> Self {
        Dimension {
            exponents: exps.map(Exponent::integer),
        }
    }

    pub fn length() -> Self {
        Self::from_integers([1, 0, 0, 0, 0])
    }
    pub fn mass() -> Self {
        Self::from_integers([0, 1, 0, 0, 0])
    }
    pub fn time() -> Self {
        Self::from_integers([0, 0, 1, 0, 0])
    }
    pub fn temperature() -> Self {
        Self::from_integers([0, 0, 0, 1, 0])
    }
    pub fn amount() -> Self {
        Self::from_integers([0, 0, 0, 0, 1])
    }
    pub fn stress() -> Self {
        Self::from_integers([-1, 1, -2, 0, 0])
    }
    pub fn energy() -> Self {
        Self::from_integers([2, 1, -2, 0, 0])
    }

    pub fn exponents(&self) -> &[Exponent; BASE_COUNT] {
        &self.exponents
    }

    pub fn is_dimensionless(&self) -> bool {
        self.exponents.iter().all(Exponent::is_zero)
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.iter().all(Exponent::is_constant)
    }

    /// Constant integer exponents, if every exponent is a constant integer.
    pub fn as_integers(&self) -> Option<[i64; BASE_COUNT]> {
        let mut out = [0i64; BASE_COUNT];
        for (slot, e) in out.iter_mut().zip(&self.exponents) {
            if !e.is_constant() || !e.constant.is_integer() {
                return None;
            }
            *slot = e.constant.to_integer();
        }
        Some(out)
    }

    pub fn mul(&self, other: &Dimension) -> Dimension {
        let mut out = self.clone();
        for (a, b) in out.exponents.iter_mut().zip(&other.exponents) {
            *a = a.add(b);
        }
        out
    }

    pub fn div(&self, other: &Dimension) -> Dimension {
        let mut out = self.clone();
        for (a, b) in out.exponents.iter_mut().zip(&other.exponents) {
            *a = a.sub(b);
        }
        out
    }

    pub fn inverse(&self) -> Dimension {
        Dimension::dimensionless().div(self)
    }

    /// Raise to an affine exponent. Fails when the result would need a product
    /// of two symbols, or a denominator larger than [`MAX_DENOMINATOR`].
    pub fn pow(&self, exponent: &Exponent) -> Option<Dimension> {
        let mut out = Dimension::dimensionless();
        for (slot, e) in out.exponents.iter_mut().zip(&self.exponents) {
            let scaled = e.mul(exponent)?;
            if !scaled.denominators_ok() {
                return None;
            }
            *slot = scaled;
        }
        Some(out)
    }

    pub fn powi(&self, k: i64) -> Dimension {
        self.pow(&Exponent::integer(k))
            .expect("integer power of a dimension is always affine")
    }

    /// Conversion factor between two unit systems whose base units differ by
    /// `scales` (new = old * scale per base unit). Symbols in exponents are
    /// resolved through `lookup`.
    pub fn scale_factor(
        &self,
        scales: &[f64; BASE_COUNT],
        lookup: &dyn Fn(&str) -> Option<f64>,
    ) -> Option<f64> {
        let mut factor = 1.0;
        for (e, s) in self.exponents.iter().zip(scales) {
            factor *= s.powf(e.evaluate(lookup)?);
        }
        Some(factor)
    }
}

/// Best rational approximation of `value` with denominator at most
/// [`MAX_DENOMINATOR`], if one lies within `1e-9`.
pub fn small_rational(value: f64) -> Option<Rational64> {
    if !value.is_finite() {
        return None;
    }
    for denom in 1..=MAX_DENOMINATOR {
        let numer = (value * denom as f64).round();
        if (numer / denom as f64 - value).abs() <= 1e-9 * value.abs().max(1.0) && numer.abs() < 1e12 {
            return Some(Rational64::new(numer as i64, denom));
        }
    }
    None
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return write!(f, "1");
        }
        let mut first = true;
        for (e, sym) in self.exponents.iter().zip(BASE_SYMBOLS) {
            if e.is_zero() {
                continue;
            }
            if !first {
                write!(f, "·")?;
            }
            first = false;
            if e.is_constant() && e.constant.is_one() {
                write!(f, "{sym}")?;
            } else {
                write!(f, "{sym}^{e}")?;
            }
        }
        Ok(())
    }
}

impl Serialize for Dimension {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_dimension_display(&text).ok_or_else(|| {
            serde::de::Error::custom(format!("unrecognised dimension '{text}'"))
        })
    }
}

/// Inverse of the `Display` form for constant dimensions (`kg·m^-1·s^-2`).
fn parse_dimension_display(text: &str) -> Option<Dimension> {
    if text.trim() == "1" {
        return Some(Dimension::dimensionless());
    }
    let mut out = Dimension::dimensionless();
    for part in text.split('·') {
        let (sym, exp) = match part.split_once('^') {
            Some((s, e)) => (s, e),
            None => (part, "1"),
        };
        let idx = BASE_SYMBOLS.iter().position(|b| *b == sym)?;
        let exp = if let Some((n, d)) = exp.split_once('/') {
            Rational64::new(n.parse().ok()?, d.parse().ok()?)
        } else {
            Rational64::from_integer(exp.parse().ok()?)
        };
        out.exponents[idx] = Exponent::constant(exp);
    }
    Some(out)
}
