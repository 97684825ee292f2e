use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BooleanQuery {
    Term(String),
    And(Vec<BooleanQuery>),
    Or(Vec<BooleanQuery>),
    Not(Box<BooleanQuery>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("query syntax error at {position}: {message}")]
pub struct QuerySyntaxError {
    pub position: usize,
    pub message: String,
}

/// Lowercased word tokens: alphanumeric runs, keeping internal hyphens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        let internal_hyphen = c == '-'
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || internal_hyphen {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

impl BooleanQuery {
    pub fn term(text: &str) -> Result<Self, QuerySyntaxError> {
        if tokenize(text).is_empty() {
            return Err(QuerySyntaxError {
                position: 0,
                message: format!("empty term '{text}'"),
            });
        }
        Ok(BooleanQuery::Term(text.trim().to_string()))
    }

    pub fn and(children: Vec<BooleanQuery>) -> Self {
        Self::nary(children, true)
    }

    pub fn or(children: Vec<BooleanQuery>) -> Self {
        Self::nary(children, false)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: BooleanQuery) -> Self {
        BooleanQuery::Not(Box::new(child))
    }

    fn nary(children: Vec<BooleanQuery>, and: bool) -> Self {
        let mut flat = Vec::new();
        for c in children {
            match c {
                BooleanQuery::And(inner) if and => flat.extend(inner),
                BooleanQuery::Or(inner) if !and => flat.extend(inner),
                other => flat.push(other),
            }
        }
        assert!(!flat.is_empty(), "connective needs at least one child");
        if flat.len() == 1 {
            return flat.pop().unwrap();
        }
        if and {
            BooleanQuery::And(flat)
        } else {
            BooleanQuery::Or(flat)
        }
    }

    /// Structural invariants: no empty term, connectives with at least two children.
    pub fn is_well_formed(&self) -> bool {
        match self {
            BooleanQuery::Term(t) => !tokenize(t).is_empty(),
            BooleanQuery::And(c) | BooleanQuery::Or(c) => c.len() >= 2 && c.iter().all(|q| q.is_well_formed()),
            BooleanQuery::Not(c) => c.is_well_formed(),
        }
    }

    /// Evaluate against a document token set. A multi-word term needs all its words.
    pub fn matches(&self, tokens: &BTreeSet<String>) -> bool {
        match self {
            BooleanQuery::Term(t) => tokenize(t).iter().all(|w| tokens.contains(w)),
            BooleanQuery::And(c) => c.iter().all(|q| q.matches(tokens)),
            BooleanQuery::Or(c) => c.iter().any(|q| q.matches(tokens)),
            BooleanQuery::Not(c) => !c.matches(tokens),
        }
    }

    pub fn terms(&self) -> Vec<String> {
        match self {
            BooleanQuery::Term(t) => vec![t.clone()],
            BooleanQuery::And(c) | BooleanQuery::Or(c) => c.iter().flat_map(|q| q.terms()).collect(),
            BooleanQuery::Not(c) => c.terms(),
        }
    }
}

impl fmt::Display for BooleanQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let child = |q: &BooleanQuery, f: &mut fmt::Formatter<'_>| match q {
            BooleanQuery::And(_) | BooleanQuery::Or(_) => write!(f, "({q})"),
            _ => write!(f, "{q}"),
        };
        match self {
            BooleanQuery::Term(t) => {
                let simple = tokenize(t).len() == 1 && !matches!(t.as_str(), "AND" | "OR" | "NOT");
                if simple && t.chars().all(|c| c.is_alphanumeric() || c == '-') {
                    write!(f, "{t}")
                } else {
                    write!(f, "\"{}\"", t.replace('"', ""))
                }
            }
            BooleanQuery::And(c) | BooleanQuery::Or(c) => {
                let op = if matches!(self, BooleanQuery::And(_)) { " AND " } else { " OR " };
                for (i, q) in c.iter().enumerate() {
                    if i > 0 {
                        f.write_str(op)?;
                    }
                    child(q, f)?;
                }
                Ok(())
            }
            BooleanQuery::Not(c) => {
                f.write_str("NOT ")?;
                child(c, f)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Phrase(String),
    And,
    Or,
    Not,
    Open,
    Close,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, QuerySyntaxError> {
    let mut out = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some(&(i, c)) = it.peek() {
        if c.is_whitespace() {
            it.next();
        } else if c == '(' {
            it.next();
            out.push((i, Tok::Open));
        } else if c == ')' {
            it.next();
            out.push((i, Tok::Close));
        } else if c == '"' {
            it.next();
            let mut s = String::new();
            let mut closed = false;
            for (_, c) in it.by_ref() {
                if c == '"' {
                    closed = true;
                    break;
                }
                s.push(c);
            }
            if !closed {
                return Err(QuerySyntaxError {
                    position: i,
                    message: "unterminated phrase".into(),
                });
            }
            out.push((i, Tok::Phrase(s)));
        } else {
            let mut s = String::new();
            while let Some(&(_, c)) = it.peek() {
                if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                    break;
                }
                s.push(c);
                it.next();
            }
            let tok = match s.as_str() {
                "AND" => Tok::And,
                "OR" => Tok::Or,
                "NOT" => Tok::Not,
                _ => Tok::Word(s),
            };
            out.push((i, tok));
        }
    }
    Ok(out)
}

/// Parse `AND`/`OR`/`NOT` syntax with parentheses and quoted phrases.
/// Juxtaposed operands are joined with AND; AND binds tighter than OR.
pub fn parse_query(text: &str) -> Result<BooleanQuery, QuerySyntaxError> {
    let toks = lex(text)?;
    let mut p = QueryParser {
        toks,
        pos: 0,
        end: text.len(),
        depth: 0,
    };
    if p.toks.is_empty() {
        return Err(QuerySyntaxError {
            position: 0,
            message: "empty query".into(),
        });
    }
    let q = p.or()?;
    if p.pos < p.toks.len() {
        return Err(p.error("unexpected token"));
    }
    Ok(q)
}

struct QueryParser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    depth: usize,
}

impl QueryParser {
    fn error(&self, message: &str) -> QuerySyntaxError {
        QuerySyntaxError {
            position: self.toks.get(self.pos).map_or(self.end, |t| t.0),
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn or(&mut self) -> Result<BooleanQuery, QuerySyntaxError> {
        let mut items = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            items.push(self.and()?);
        }
        Ok(BooleanQuery::or(items))
    }

    fn and(&mut self) -> Result<BooleanQuery, QuerySyntaxError> {
        let mut items = vec![self.unary()?];
        loop {
            match self.peek() {
                Some(Tok::And) => {
                    self.pos += 1;
                    items.push(self.unary()?);
                }
                Some(Tok::Word(_)) | Some(Tok::Phrase(_)) | Some(Tok::Not) | Some(Tok::Open) => {
                    items.push(self.unary()?);
                }
                _ => break,
            }
        }
        Ok(BooleanQuery::and(items))
    }

    fn unary(&mut self) -> Result<BooleanQuery, QuerySyntaxError> {
        self.depth += 1;
        if self.depth > 64 {
            return Err(self.error("query nested too deeply"));
        }
        let r = match self.peek().cloned() {
            Some(Tok::Not) => {
                self.pos += 1;
                Ok(BooleanQuery::not(self.unary()?))
            }
            Some(Tok::Open) => {
                self.pos += 1;
                let q = self.or()?;
                if self.peek() != Some(&Tok::Close) {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(q)
            }
            Some(Tok::Word(w)) | Some(Tok::Phrase(w)) => {
                let at = self.toks[self.pos].0;
                self.pos += 1;
                BooleanQuery::term(&w).map_err(|e| QuerySyntaxError { position: at, ..e })
            }
            _ => Err(self.error("expected a term")),
        };
        self.depth -= 1;
        r
    }
}
