use crate::formula::{Expr, Func};

/// Expression with symbols resolved to slots of a value vector.
#[derive(Debug, Clone)]
pub(crate) enum Node {
    Const(f64),
    Var(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Neg(Box<Node>),
    Func(Func, Box<Node>),
}

impl Node {
    /// Fails with the first symbol that has no slot.
    pub fn compile(expr: &Expr, slot: &dyn Fn(&str) -> Option<usize>) -> Result<Node, String> {
        let c = |e: &Expr| Node::compile(e, slot).map(Box::new);
        Ok(match expr {
            Expr::Const(v) => Node::Const(*v),
            Expr::Sym(s) => Node::Var(slot(s).ok_or_else(|| s.clone())?),
            Expr::Add(a, b) => Node::Add(c(a)?, c(b)?),
            Expr::Sub(a, b) => Node::Sub(c(a)?, c(b)?),
            Expr::Mul(a, b) => Node::Mul(c(a)?, c(b)?),
            Expr::Div(a, b) => Node::Div(c(a)?, c(b)?),
            Expr::Pow(a, b) => Node::Pow(c(a)?, c(b)?),
            Expr::Neg(a) => Node::Neg(c(a)?),
            Expr::Func(f, a) => Node::Func(*f, c(a)?),
            Expr::Derivative { target, .. } => return Err(format!("d({target})")),
        })
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Node::Const(v) => *v,
            Node::Var(i) => vars[*i],
            Node::Add(a, b) => a.eval(vars) + b.eval(vars),
            Node::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Node::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Node::Div(a, b) => a.eval(vars) / b.eval(vars),
            Node::Pow(a, b) => {
                let base = a.eval(vars);
                match **b {
                    Node::Const(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(vars)),
                }
            }
            Node::Neg(a) => -a.eval(vars),
            Node::Func(f, a) => f.apply(a.eval(vars)),
        }
    }
}
