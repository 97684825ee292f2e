//! Output schemas (the hard constraint of a skill) and a tolerant reader for
//! backend replies.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::corpus::parse_query;
use crate::formula::units::parse_unit;

const MAX_NESTING: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub schema: OutputSchema,
    #[serde(default = "yes")]
    pub required: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputSchema {
    Record {
        fields: Vec<FieldSpec>,
    },
    List {
        items: Box<OutputSchema>,
        #[serde(default)]
        min_items: usize,
    },
    Number,
    Integer,
    Boolean,
    Text {
        #[serde(default)]
        non_empty: bool,
    },
    /// Number with a unit; with `unit` set the dimension must match it.
    Quantity {
        #[serde(default)]
        unit: Option<String>,
    },
    Enumeration {
        values: Vec<String>,
    },
    /// Text in the Boolean retrieval syntax.
    BooleanQuery,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "<root>" } else { &self.path };
        write!(f, "{path}: {}", self.message)
    }
}

pub fn field(name: &str, schema: OutputSchema) -> FieldSpec {
    FieldSpec {
        name: name.into(),
        schema,
        required: true,
    }
}

pub fn optional(name: &str, schema: OutputSchema) -> FieldSpec {
    FieldSpec {
        name: name.into(),
        schema,
        required: false,
    }
}

impl OutputSchema {
    pub fn record(fields: Vec<FieldSpec>) -> Self {
        OutputSchema::Record { fields }
    }

    pub fn list(items: OutputSchema) -> Self {
        OutputSchema::List {
            items: Box::new(items),
            min_items: 0,
        }
    }

    pub fn text() -> Self {
        OutputSchema::Text { non_empty: false }
    }

    pub fn quantity(unit: &str) -> Self {
        OutputSchema::Quantity {
            unit: Some(unit.into()),
        }
    }

    pub fn enumeration(values: &[&str]) -> Self {
        OutputSchema::Enumeration {
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    /// Every enumeration non-empty, every record field name unique.
    pub fn is_well_formed(&self) -> bool {
        match self {
            OutputSchema::Record { fields } => {
                let mut names: Vec<&str> = fields.iter().map(|f| f.name.as_str()).collect();
                names.sort();
                names.dedup();
                names.len() == fields.len() && fields.iter().all(|f| f.schema.is_well_formed())
            }
            OutputSchema::List { items, .. } => items.is_well_formed(),
            OutputSchema::Enumeration { values } => !values.is_empty(),
            OutputSchema::Quantity { unit: Some(u) } => parse_unit(u).is_ok(),
            _ => true,
        }
    }

    /// Compact description sent to backends.
    pub fn describe(&self) -> String {
        match self {
            OutputSchema::Record { fields } => {
                let parts: Vec<String> = fields
                    .iter()
                    .map(|f| format!("{}{}: {}", f.name, if f.required { "" } else { "?" }, f.schema.describe()))
                    .collect();
                format!("{{{}}}", parts.join(", "))
            }
            OutputSchema::List { items, .. } => format!("[{}]", items.describe()),
            OutputSchema::Number => "number".into(),
            OutputSchema::Integer => "integer".into(),
            OutputSchema::Boolean => "boolean".into(),
            OutputSchema::Text { .. } => "text".into(),
            OutputSchema::Quantity { unit: Some(u) } => format!("quantity[{u}]"),
            OutputSchema::Quantity { unit: None } => "quantity".into(),
            OutputSchema::Enumeration { values } => values.join("|"),
            OutputSchema::BooleanQuery => "boolean-query".into(),
        }
    }

    /// Check and normalize a parsed value. Unknown record fields are dropped.
    pub fn check(&self, value: &Value) -> Result<Value, Vec<Violation>> {
        let mut violations = Vec::new();
        let out = self.check_at(value, "", &mut violations);
        if violations.is_empty() {
            Ok(out)
        } else {
            Err(violations)
        }
    }

    fn check_at(&self, value: &Value, path: &str, out: &mut Vec<Violation>) -> Value {
        let mut fail = |msg: String| {
            out.push(Violation {
                path: path.to_string(),
                message: msg,
            });
            Value::Null
        };
        match self {
            OutputSchema::Record { fields } => {
                let Some(obj) = value.as_object() else {
                    return fail(format!("expected record, got {}", kind(value)));
                };
                let mut res = Map::new();
                for f in fields {
                    let p = if path.is_empty() { f.name.clone() } else { format!("{path}.{}", f.name) };
                    match obj.get(&f.name) {
                        None | Some(Value::Null) => {
                            if f.required {
                                out.push(Violation {
                                    path: p,
                                    message: "required field missing".into(),
                                });
                            }
                        }
                        Some(v) => {
                            let checked = f.schema.check_at(v, &p, out);
                            res.insert(f.name.clone(), checked);
                        }
                    }
                }
                Value::Object(res)
            }
            OutputSchema::List { items, min_items } => {
                let Some(arr) = value.as_array() else {
                    return fail(format!("expected list, got {}", kind(value)));
                };
                if arr.len() < *min_items {
                    out.push(Violation {
                        path: path.to_string(),
                        message: format!("expected at least {min_items} items, got {}", arr.len()),
                    });
                }
                Value::Array(
                    arr.iter()
                        .enumerate()
                        .map(|(i, v)| items.check_at(v, &format!("{path}[{i}]"), out))
                        .collect(),
                )
            }
            OutputSchema::Number => match as_number(value) {
                Some(n) => json_number(n),
                None => fail(format!("expected number, got {}", kind(value))),
            },
            OutputSchema::Integer => match as_number(value) {
                Some(n) if n.fract() == 0.0 && n.abs() < 9.0e15 => Value::from(n as i64),
                _ => fail(format!("expected integer, got {}", kind(value))),
            },
            OutputSchema::Boolean => match value {
                Value::Bool(b) => Value::Bool(*b),
                Value::String(s) if s.eq_ignore_ascii_case("true") || s.eq_ignore_ascii_case("yes") => Value::Bool(true),
                Value::String(s) if s.eq_ignore_ascii_case("false") || s.eq_ignore_ascii_case("no") => Value::Bool(false),
                _ => fail(format!("expected boolean, got {}", kind(value))),
            },
            OutputSchema::Text { non_empty } => match value {
                Value::String(s) if *non_empty && s.trim().is_empty() => fail("text must not be empty".into()),
                Value::String(s) => Value::String(s.clone()),
                Value::Number(n) => Value::String(n.to_string()),
                _ => fail(format!("expected text, got {}", kind(value))),
            },
            OutputSchema::Enumeration { values } => match value.as_str() {
                Some(s) if values.iter().any(|v| v == s) => Value::String(s.to_string()),
                _ => fail(format!("expected one of {}, got {value}", values.join("|"))),
            },
            OutputSchema::BooleanQuery => match value.as_str().map(parse_query) {
                Some(Ok(_)) => value.clone(),
                Some(Err(e)) => fail(e.to_string()),
                None => fail(format!("expected query text, got {}", kind(value))),
            },
            OutputSchema::Quantity { unit } => {
                let parsed = match value {
                    Value::String(s) => split_quantity(s),
                    Value::Object(o) => match (o.get("value").and_then(as_number), o.get("unit").and_then(|u| u.as_str())) {
                        (Some(v), Some(u)) => Some((v, u.trim().to_string())),
                        _ => None,
                    },
                    _ => None,
                };
                let Some((v, u)) = parsed else {
                    return fail(format!("expected number with unit, got {value}"));
                };
                let u = if u.is_empty() { "1".to_string() } else { u };
                let Ok(got) = parse_unit(&u) else {
                    return fail(format!("unknown unit '{u}'"));
                };
                if let Some(want) = unit.as_deref().and_then(|w| parse_unit(w).ok()) {
                    if want.dimension != got.dimension {
                        return fail(format!("unit '{u}' is not a {} quantity", unit.as_deref().unwrap_or("")));
                    }
                }
                let mut m = Map::new();
                m.insert("value".into(), json_number(v));
                m.insert("unit".into(), Value::String(u));
                Value::Object(m)
            }
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "text",
        Value::Array(_) => "list",
        Value::Object(_) => "record",
    }
}

fn as_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|x: &f64| x.is_finite())
}

fn json_number(n: f64) -> Value {
    Number::from_f64(n).map_or(Value::Null, Value::Number)
}

/// Split "873.15 K" into its number and unit text.
fn split_quantity(s: &str) -> Option<(f64, String)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .map(|(i, c)| i + c.len_utf8())
        .filter(|e| s[..*e].parse::<f64>().is_ok())
        .last()?;
    let v: f64 = s[..end].parse().ok()?;
    v.is_finite().then(|| (v, s[end..].trim().to_string()))
}

/// Parse backend output: strict JSON first, then a tolerant reading that
/// accepts code fences, unquoted keys, single quotes and bare values.
pub fn parse_relaxed(raw: &str) -> Result<Value, String> {
    let body = strip_fences(raw);
    if let Ok(v) = serde_json::from_str::<Value>(body.trim()) {
        return Ok(v);
    }
    let start = body
        .find(['{', '['])
        .ok_or_else(|| "no record or list found in output".to_string())?;
    let mut r = Relaxed {
        s: body[start..].as_bytes(),
        text: &body[start..],
        pos: 0,
        depth: 0,
    };
    let v = r.value(&[])?;
    Ok(v)
}

fn strip_fences(raw: &str) -> &str {
    let Some(open) = raw.find("```") else { return raw };
    let after = &raw[open + 3..];
    let body_start = after.find('\n').map_or(0, |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

struct Relaxed<'a> {
    s: &'a [u8],
    text: &'a str,
    pos: usize,
    depth: usize,
}

impl Relaxed<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn err(&self, msg: &str) -> String {
        format!("{msg} at offset {}", self.pos)
    }

    fn value(&mut self, stops: &[u8]) -> Result<Value, String> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(self.err("output nested too deeply"));
        }
        self.skip_ws();
        let v = match self.s.get(self.pos) {
            None => Err(self.err("unexpected end of output")),
            Some(b'{') => self.object(),
            Some(b'[') => self.array(),
            Some(b'"') | Some(b'\'') => self.string().map(Value::String),
            Some(_) => Ok(self.bare(stops)),
        };
        self.depth -= 1;
        v
    }

    fn object(&mut self) -> Result<Value, String> {
        self.pos += 1;
        let mut map = Map::new();
        loop {
            self.skip_ws();
            match self.s.get(self.pos) {
                None => return Err(self.err("unterminated record")),
                Some(b'}') => {
                    self.pos += 1;
                    return Ok(Value::Object(map));
                }
                Some(b',') => {
                    self.pos += 1;
                    continue;
                }
                _ => {}
            }
            let key = match self.s[self.pos] {
                b'"' | b'\'' => self.string()?,
                _ => {
                    let start = self.pos;
                    while self.pos < self.s.len() && !matches!(self.s[self.pos], b':' | b',' | b'}' | b'\n') {
                        self.pos += 1;
                    }
                    self.text[start..self.pos].trim().to_string()
                }
            };
            self.skip_ws();
            if self.s.get(self.pos) != Some(&b':') {
                return Err(self.err(&format!("expected ':' after key '{key}'")));
            }
            self.pos += 1;
            let v = self.value(b",}\n")?;
            map.insert(key, v);
        }
    }

    fn array(&mut self) -> Result<Value, String> {
        self.pos += 1;
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.s.get(self.pos) {
                None => return Err(self.err("unterminated list")),
                Some(b']') => {
                    self.pos += 1;
                    return Ok(Value::Array(items));
                }
                Some(b',') => {
                    self.pos += 1;
                }
                _ => items.push(self.value(b",]\n")?),
            }
        }
    }

    fn string(&mut self) -> Result<String, String> {
        let quote = self.s[self.pos];
        let start = self.pos;
        self.pos += 1;
        while self.pos < self.s.len() {
            match self.s[self.pos] {
                b'\\' => self.pos += 2,
                c if c == quote => {
                    self.pos += 1;
                    let inner = &self.text[start + 1..self.pos - 1];
                    if quote == b'"' {
                        return serde_json::from_str::<String>(&self.text[start..self.pos])
                            .or_else(|_| Ok(inner.to_string()));
                    }
                    return Ok(inner.replace("\\'", "'"));
                }
                _ => self.pos += 1,
            }
        }
        Err(self.err("unterminated string"))
    }

    fn bare(&mut self, stops: &[u8]) -> Value {
        let start = self.pos;
        while self.pos < self.s.len() && !stops.contains(&self.s[self.pos]) {
            self.pos += 1;
        }
        let token = self.text[start..self.pos].trim();
        match token {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            "null" => Value::Null,
            _ => match token.parse::<f64>() {
                Ok(n) if n.is_finite() => json_number(n),
                _ => Value::String(token.to_string()),
            },
        }
    }
}

/// Parse and check backend output against a schema.
pub fn validate_output(schema: &OutputSchema, raw: &str) -> Result<Value, Vec<Violation>> {
    let value = parse_relaxed(raw).map_err(|e| {
        vec![Violation {
            path: String::new(),
            message: format!("unparseable output: {e}"),
        }]
    })?;
    schema.check(&value)
}
