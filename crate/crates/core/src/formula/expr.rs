use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Func {
    Exp,
    Ln,
    Log10,
    Sin,
    Cos,
    Sinh,
    Cosh,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Exp,
        Func::Ln,
        Func::Log10,
        Func::Sin,
        Func::Cos,
        Func::Sinh,
        Func::Cosh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Log10 => "log10",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Log10 => x.log10(),
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Sinh => x.sinh(),
            Func::Cosh => x.cosh(),
        }
    }
}

/// Expression tree for extracted formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Sym(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Func(Func, Box<Expr>),
    Derivative { target: String, wrt: String, order: u32 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound symbol '{0}'")]
    UnboundSymbol(String),
    #[error("non-finite result in '{0}'")]
    NumericalOverflow(String),
    #[error("derivative d({target})/d({wrt}) cannot be evaluated directly")]
    Derivative { target: String, wrt: String },
}

pub fn sym(name: &str) -> Expr {
    Expr::Sym(name.to_string())
}

pub fn num(value: f64) -> Expr {
    Expr::Const(value)
}

// Smart constructors fold the trivial identities that symbolic differentiation
// produces; they never change the value of the expression.
impl Expr {
    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), _) if x == 0.0 => Expr::Const(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        match b.as_const() {
            Some(y) if y == 1.0 => a,
            Some(y) if y == 0.0 => Expr::Const(1.0),
            _ => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(x) => Expr::Const(-x),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn func(f: Func, a: Expr) -> Expr {
        Expr::Func(f, Box::new(a))
    }

    /// Every symbol in the tree, including derivative targets and variables.
    pub fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Sym(s) => {
                out.insert(s.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.collect_symbols(out);
                b.collect_symbols(out);
            }
            Expr::Neg(a) | Expr::Func(_, a) => a.collect_symbols(out),
            Expr::Derivative { target, wrt, .. } => {
                out.insert(target.clone());
                out.insert(wrt.clone());
            }
        }
    }

    /// Derivative nodes anywhere in the tree, as (target, wrt, order).
    pub fn derivatives(&self) -> Vec<(String, String, u32)> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Derivative { target, wrt, order } = e {
                out.push((target.clone(), wrt.clone(), *order));
            }
        });
        out
    }

    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Neg(a) | Expr::Func(_, a) => a.visit(f),
            _ => {}
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Sym(_) | Expr::Derivative { .. } => 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                1 + a.depth().max(b.depth())
            }
            Expr::Neg(a) | Expr::Func(_, a) => 1 + a.depth(),
        }
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<f64>) -> Result<f64, EvalError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Sym(s) => env(s).ok_or_else(|| EvalError::UnboundSymbol(s.clone()))?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => a.eval(env)? / b.eval(env)?,
            Expr::Pow(a, b) => pow_value(a.eval(env)?, b.eval(env)?),
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Func(f, a) => f.apply(a.eval(env)?),
            Expr::Derivative { target, wrt, .. } => {
                return Err(EvalError::Derivative {
                    target: target.clone(),
                    wrt: wrt.clone(),
                })
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(EvalError::NumericalOverflow(self.to_string()))
        }
    }

    /// Symbolic partial derivative with respect to `var`.
    pub fn diff(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => num(0.0),
            Expr::Sym(s) => num(if s == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => Expr::add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => Expr::sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(var), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => {
                let da = a.diff(var);
                let db = b.diff(var);
                Expr::sub(
                    Expr::div(da, (**b).clone()),
                    Expr::div(
                        Expr::mul((**a).clone(), db),
                        Expr::pow((**b).clone(), num(2.0)),
                    ),
                )
            }
            Expr::Pow(base, exponent) => {
                let db = base.diff(var);
                let de = exponent.diff(var);
                let de_zero = matches!(de, Expr::Const(c) if c == 0.0);
                if de_zero {
                    // c * u^(c-1) * u'
                    Expr::mul(
                        Expr::mul(
                            (**exponent).clone(),
                            Expr::pow((**base).clone(), Expr::sub((**exponent).clone(), num(1.0))),
                        ),
                        db,
                    )
                } else {
                    // u^v * (v' ln u + v u'/u)
                    Expr::mul(
                        self.clone(),
                        Expr::add(
                            Expr::mul(de, Expr::func(Func::Ln, (**base).clone())),
                            Expr::div(Expr::mul((**exponent).clone(), db), (**base).clone()),
                        ),
                    )
                }
            }
            Expr::Neg(a) => Expr::neg(a.diff(var)),
            Expr::Func(f, a) => {
                let inner = a.diff(var);
                if matches!(inner, Expr::Const(c) if c == 0.0) {
                    return num(0.0);
                }
                let a = (**a).clone();
                let outer = match f {
                    Func::Exp => Expr::func(Func::Exp, a),
                    Func::Ln => Expr::div(num(1.0), a),
                    Func::Log10 => Expr::div(num(1.0), Expr::mul(a, num(std::f64::consts::LN_10))),
                    Func::Sin => Expr::func(Func::Cos, a),
                    Func::Cos => Expr::neg(Expr::func(Func::Sin, a)),
                    Func::Sinh => Expr::func(Func::Cosh, a),
                    Func::Cosh => Expr::func(Func::Sinh, a),
                };
                Expr::mul(outer, inner)
            }
            // Derivative nodes are opaque quantities for partial differentiation.
            Expr::Derivative { .. } => num(0.0),
        }
    }

    /// Replace symbols by expressions.
    pub fn substitute(&self, f: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Sym(s) => f(s).unwrap_or_else(|| self.clone()),
            Expr::Const(_) | Expr::Derivative { .. } => self.clone(),
            Expr::Add(a, b) => Expr::Add(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Div(a, b) => Expr::Div(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Pow(a, b) => Expr::Pow(Box::new(a.substitute(f)), Box::new(b.substitute(f))),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute(f))),
            Expr::Func(g, a) => Expr::Func(*g, Box::new(a.substitute(f))),
        }
    }
}

fn pow_value(base: f64, exponent: f64) -> f64 {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        base.powi(exponent as i32)
    } else {
        base.powf(exponent)
    }
}

// Rendering precedence: sums 1, products 2, negation 3, powers 4, atoms 5.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 || c.is_sign_negative() => 3,
        _ => 5,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Sym(s) => write!(f, "{s}"),
            Expr::Add(a, b) => {
                write!(f, "{a} + ")?;
                // a + (b + c) needs parentheses to keep its shape
                if precedence(b) <= 1 {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Expr::Sub(a, b) => {
                write!(f, "{a} - ")?;
                if precedence(b) <= 1 {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                let op = if matches!(self, Expr::Mul(..)) { "*" } else { "/" };
                if precedence(a) <= 3 {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, "{op}")?;
                if precedence(b) <= 3 {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Expr::Pow(a, b) => {
                if precedence(a) <= 4 || matches!(**a, Expr::Derivative { .. }) {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, "^")?;
                if precedence(b) < 4 && !matches!(**b, Expr::Neg(_)) {
                    write!(f, "({b})")
                } else if let Expr::Neg(inner) = &**b {
                    if precedence(inner) >= 4 && !matches!(**inner, Expr::Derivative { .. }) {
                        write!(f, "-{inner}")
                    } else {
                        write!(f, "-({inner})")
                    }
                } else if matches!(**b, Expr::Derivative { .. }) {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
            Expr::Neg(a) => {
                if precedence(a) <= 1 || matches!(**a, Expr::Neg(_)) {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Derivative { target, wrt, order } => {
                if *order == 1 {
                    write!(f, "d({target})/d({wrt})")
                } else {
                    write!(f, "d^{order}({target})/d({wrt})^{order}")
                }
            }
        }
    }
}
