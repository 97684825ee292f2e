//! Recursive-descent parser for extracted formulas.
//!
//! Grammar (implicit multiplication is rejected):
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := '-' term | product
//! product  := power (('*' | '/') operand)*
//! operand  := '-' operand | power
//! power    := primary ('^' exponent)?
//! exponent := '-' exponent | primary ('^' exponent)?
//! primary  := number | symbol | func '(' expr ')' | '(' expr ')'
//!           | 'd' ['^' k] '(' symbol ')' '/' 'd' '(' symbol ')' ['^' k]
//! ```

use thiserror::Error;

use super::expr::{Expr, Func};

pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at position {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser::new(text);
    let expr = parser.expr(0)?;
    parser.skip_ws();
    if let Some(c) = parser.peek() {
        return Err(parser.trailing_error(c));
    }
    if expr.depth() > MAX_DEPTH {
        return Err(ParseError {
            position: 0,
            message: format!("expression deeper than {MAX_DEPTH} levels"),
        });
    }
    Ok(expr)
}

/// Split `lhs = rhs` and parse both sides.
pub fn parse_equation(text: &str) -> Result<(Expr, Expr), ParseError> {
    let mut parts = text.splitn(2, '=');
    let lhs_text = parts.next().unwrap_or_default();
    let Some(rhs_text) = parts.next() else {
        return Err(ParseError {
            position: text.chars().count(),
            message: "expected '=' in equation".into(),
        });
    };
    let offset = lhs_text.chars().count() + 1;
    let lhs = parse_expression(lhs_text)?;
    let rhs = parse_expression(rhs_text).map_err(|e| ParseError {
        position: e.position + offset,
        message: e.message,
    })?;
    Ok((lhs, rhs))
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser {
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.into(),
        }
    }

    fn trailing_error(&self, c: char) -> ParseError {
        if is_ident_start(c) || c.is_ascii_digit() || c == '(' || c == '.' {
            self.error("implicit multiplication is not allowed; use '*'")
        } else {
            self.error(format!("unexpected '{c}'"))
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected '{c}'")))
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.peek() {
            None => self.error(format!("{expected}, found end of input")),
            Some(c) => self.error(format!("{expected}, found '{c}'")),
        }
    }

    fn guard(&self, depth: usize) -> Result<(), ParseError> {
        if depth > MAX_DEPTH {
            Err(self.error(format!("expression deeper than {MAX_DEPTH} levels")))
        } else {
            Ok(())
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Expr, ParseError> {
        self.guard(depth)?;
        let mut acc = self.term(depth + 1)?;
        loop {
            if self.eat('+') {
                let rhs = self.term(depth + 1)?;
                acc = Expr::Add(Box::new(acc), Box::new(rhs));
            } else if self.eat('-') {
                let rhs = self.term(depth + 1)?;
                acc = Expr::Sub(Box::new(acc), Box::new(rhs));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self, depth: usize) -> Result<Expr, ParseError> {
        self.guard(depth)?;
        if self.eat('-') {
            let inner = self.term(depth + 1)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.product(depth + 1)
    }

    fn product(&mut self, depth: usize) -> Result<Expr, ParseError> {
        self.guard(depth)?;
        let mut acc = self.power(depth + 1)?;
        loop {
            if self.eat('*') {
                let rhs = self.operand(depth + 1)?;
                acc = Expr::Mul(Box::new(acc), Box::new(rhs));
            } else if self.eat('/') {
                let rhs = self.operand(depth + 1)?;
                acc = Expr::Div(Box::new(acc), Box::new(rhs));
            } else {
                self.skip_ws();
                if let Some(c) = self.peek() {
                    if is_ident_start(c) || c.is_ascii_digit() || c == '(' || c == '.' {
                        return Err(self.error("implicit multiplication is not allowed; use '*'"));
                    }
                }
                return Ok(acc);
            }
        }
    }

    fn operand(&mut self, depth: usize) -> Result<Expr, ParseError> {
        self.guard(depth)?;
        if self.eat('-') {
            let inner = self.operand(depth + 1)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power(depth + 1)
    }

    fn power(&mut self, depth: usize) -> Result<Expr, ParseError> {
        self.guard(depth)?;
        let base = self.primary(depth + 1)?;
        if self.eat('^') {
            let exponent = self.exponent(depth + 1)?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn exponent(&mut self, depth: usize) -> Result<Expr, ParseError> {
        self.guard(depth)?;
        if self.eat('-') {
            let inner = self.exponent(depth + 1)?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power(depth + 1)
    }

    fn primary(&mut self, depth: usize) -> Result<Expr, ParseError> {
        self.guard(depth)?;
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr(depth + 1)?;
                self.expect(')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if is_ident_start(c) => {
                let start = self.pos;
                let name = self.ident();
                if name == "d" {
                    let after = self.pos;
                    match self.derivative() {
                        Ok(Some(d)) => return Ok(d),
                        Ok(None) => self.pos = after,
                        Err(e) => return Err(e),
                    }
                }
                let save = self.pos;
                self.skip_ws();
                if self.peek() == Some('(') {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError {
                            position: start,
                            message: format!("unknown function '{name}'"),
                        });
                    };
                    self.pos += 1;
                    let arg = self.expr(depth + 1)?;
                    self.expect(')')?;
                    return Ok(Expr::Func(func, Box::new(arg)));
                }
                self.pos = save;
                Ok(Expr::Sym(name))
            }
            Some(c) => Err(self.error(format!("unexpected '{c}'"))),
        }
    }

    /// Parses the remainder of `d(x)/d(t)` or `d^k(x)/d(t)^k` after the
    /// leading `d`. `Ok(None)` means this `d` is a plain symbol.
    fn derivative(&mut self) -> Result<Option<Expr>, ParseError> {
        let start = self.pos;
        let mut order = 1u32;
        self.skip_ws();
        if self.peek() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            match self.integer() {
                Some(k) if k >= 1 => order = k,
                _ => {
                    self.pos = start;
                    return Ok(None);
                }
            }
            self.skip_ws();
            if self.peek() != Some('(') {
                self.pos = start;
                return Ok(None);
            }
        }
        self.skip_ws();
        if self.peek() != Some('(') {
            self.pos = start;
            return Ok(None);
        }
        self.pos += 1;
        self.skip_ws();
        if !self.peek().is_some_and(is_ident_start) {
            return Err(self.unexpected("expected a symbol inside d(...)"));
        }
        let target = self.ident();
        self.expect(')')?;
        self.expect('/')?;
        self.skip_ws();
        if self.ident() != "d" {
            return Err(self.error("expected 'd(' after '/' in derivative"));
        }
        self.expect('(')?;
        self.skip_ws();
        if !self.peek().is_some_and(is_ident_start) {
            return Err(self.unexpected("expected a symbol inside d(...)"));
        }
        let wrt = self.ident();
        self.expect(')')?;
        if order > 1 {
            self.expect('^')?;
            self.skip_ws();
            match self.integer() {
                Some(k) if k == order => {}
                _ => return Err(self.error(format!("derivative order mismatch, expected ^{order}"))),
            }
        } else {
            let save = self.pos;
            if self.eat('^') {
                self.pos = save;
                return Err(self.error("derivative order mismatch: use d^k(x)/d(t)^k"));
            }
        }
        Ok(Some(Expr::Derivative { target, wrt, order }))
    }

    fn integer(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        self.chars[start..self.pos].iter().collect::<String>().parse().ok()
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.peek().is_some_and(is_ident_continue) {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some('.') {
            self.pos += 1;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|c| c.is_ascii_digit()) {
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        let value: f64 = text.parse().map_err(|_| ParseError {
            position: start,
            message: format!("malformed number '{text}'"),
        })?;
        Ok(Expr::Const(value))
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::expr::{num, sym};

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn norton_structure() {
        let e = parse_expression("A*sigma^n*exp(-Q/(R*T))").unwrap();
        let expected = Expr::Mul(
            b(Expr::Mul(b(sym("A")), b(Expr::Pow(b(sym("sigma")), b(sym("n")))))),
            b(Expr::Func(
                Func::Exp,
                b(Expr::Neg(b(Expr::Div(
                    b(sym("Q")),
                    b(Expr::Mul(b(sym("R")), b(sym("T")))),
                )))),
            )),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn derivative_notation() {
        assert_eq!(
            parse_expression("d(eps)/d(t)").unwrap(),
            Expr::Derivative { target: "eps".into(), wrt: "t".into(), order: 1 }
        );
        assert_eq!(
            parse_expression("d^2(x)/d(t)^2").unwrap(),
            Expr::Derivative { target: "x".into(), wrt: "t".into(), order: 2 }
        );
        assert!(parse_expression("d^2(x)/d(t)^3").is_err());
    }

    #[test]
    fn dangling_operator_position() {
        let err = parse_expression("1 + ").unwrap_err();
        assert_eq!(err.position, 4);
    }

    #[test]
    fn implicit_multiplication_rejected() {
        let err = parse_expression("2x").unwrap_err();
        assert!(err.message.contains("implicit"));
        assert_eq!(err.position, 1);
        assert!(parse_expression("2 x").is_err());
        assert!(parse_expression("a (b)").is_err());
    }

    #[test]
    fn symbol_named_d_still_works() {
        assert_eq!(
            parse_expression("d^2").unwrap(),
            Expr::Pow(b(sym("d")), b(num(2.0)))
        );
    }

    #[test]
    fn unknown_function() {
        let err = parse_expression("tanh(x)").unwrap_err();
        assert_eq!(err.position, 0);
    }

    #[test]
    fn unary_minus_binds_looser_than_product() {
        assert_eq!(
            parse_expression("-a*b").unwrap(),
            Expr::Neg(b(Expr::Mul(b(sym("a")), b(sym("b")))))
        );
        assert_eq!(
            parse_expression("a*-b").unwrap(),
            Expr::Mul(b(sym("a")), b(Expr::Neg(b(sym("b")))))
        );
        assert_eq!(
            parse_expression("a^-b^c").unwrap(),
            Expr::Pow(b(sym("a")), b(Expr::Neg(b(Expr::Pow(b(sym("b")), b(sym("c")))))))
        );
    }

    #[test]
    fn depth_limit() {
        let deep = format!("{}x{}", "(".repeat(100), ")".repeat(100));
        assert!(parse_expression(&deep).is_err());
    }

    #[test]
    fn equation_split() {
        let (l, r) = parse_equation("eps = sigma/E").unwrap();
        assert_eq!(l, sym("eps"));
        assert_eq!(r, Expr::Div(b(sym("sigma")), b(sym("E"))));
        assert_eq!(parse_equation("eps = ").unwrap_err().position, 6);
    }

    #[test]
    fn render_roundtrip_examples() {
        for text in [
            "A*sigma^n*exp(-Q/(R*T))",
            "theta1*(1 - exp(-theta2*t)) + theta3*(exp(theta4*t) - 1)",
            "d^2(x)/d(t)^2 + delta*d(x)/d(t) + alpha*x + beta*x^3",
            "a - (b - c)",
            "(a/b)/(c*d)",
            "-(a + b)*c",
            "a^(b^c)",
            "(a^b)^c",
            "2^-x",
            "x*-y",
        ] {
            let e = parse_expression(text).unwrap();
            let again = parse_expression(&e.to_string()).unwrap();
            assert_eq!(e, again, "{text} rendered as {e}");
        }
    }
}
