//! Skills: instruction template, scoped tools and output schema executed
//! against a reasoning backend.

mod catalog;
pub mod schema;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::backend::{BackendError, BackendRequest, ReasoningBackend};
pub use catalog::{
    data_serializer, domain_filter, multimodal_parser, navigator, physics_guardrail, pipeline_skills, CATEGORY_VOCABULARY,
};
pub use schema::{parse_relaxed, validate_output, FieldSpec, OutputSchema, Violation};

/// Tool names any skill may be scoped to.
pub const REGISTERED_TOOLS: [&str; 7] = [
    "corpus_lookup",
    "read_pages",
    "figure_info",
    "parse_formula",
    "check_units",
    "evaluate_model",
    "store_write",
];

/// Tool calls allowed per invocation before the attempt counts as failed.
pub const MAX_TOOL_ROUNDS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SkillError {
    #[error("context lacks placeholder '{0}'")]
    MissingPlaceholder(String),
    #[error("tool '{0}' is not registered")]
    UnknownTool(String),
    #[error("output schema is malformed")]
    MalformedSchema,
    #[error("output violated the schema after {attempts} attempts: {}", join(.violations))]
    SchemaViolation { attempts: u32, violations: Vec<Violation> },
    #[error("backend requested tool '{tool}' outside the skill scope ({attempts} attempts)")]
    ToolScopeViolation { tool: String, attempts: u32 },
    #[error(transparent)]
    BackendFailure(#[from] BackendError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub persona: String,
    pub instruction_template: String,
    pub allowed_tools: BTreeSet<String>,
    pub output_schema: OutputSchema,
    pub max_retries: u32,
}

impl Skill {
    pub fn new(
        name: &str,
        persona: &str,
        instruction_template: &str,
        allowed_tools: &[&str],
        output_schema: OutputSchema,
        max_retries: u32,
    ) -> Result<Skill, SkillError> {
        for t in allowed_tools {
            if !REGISTERED_TOOLS.contains(t) {
                return Err(SkillError::UnknownTool(t.to_string()));
            }
        }
        if !output_schema.is_well_formed() {
            return Err(SkillError::MalformedSchema);
        }
        Ok(Skill {
            name: name.into(),
            persona: persona.into(),
            instruction_template: instruction_template.into(),
            allowed_tools: allowed_tools.iter().map(|t| t.to_string()).collect(),
            output_schema,
            max_retries,
        })
    }

    pub fn with_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    /// Names written as `{name}` in the template.
    pub fn placeholders(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut rest = self.instruction_template.as_str();
        while let Some(open) = rest.find('{') {
            rest = &rest[open + 1..];
            if let Some(close) = rest.find('}') {
                let name = &rest[..close];
                if !name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    out.push(name.to_string());
                    rest = &rest[close + 1..];
                }
            }
        }
        out
    }

    pub fn render(&self, context: &Value) -> Result<String, SkillError> {
        let mut text = self.instruction_template.clone();
        for p in self.placeholders() {
            let v = context.get(&p).ok_or_else(|| SkillError::MissingPlaceholder(p.clone()))?;
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            text = text.replace(&format!("{{{p}}}"), &s);
        }
        Ok(text)
    }
}

pub type ToolFn<'a> = Box<dyn Fn(&Value) -> Result<Value, String> + Send + Sync + 'a>;

/// Executable tools offered to one invocation.
#[derive(Default)]
pub struct ToolBox<'a> {
    tools: BTreeMap<String, ToolFn<'a>>,
}

impl<'a> ToolBox<'a> {
    pub fn new() -> Self {
        ToolBox { tools: BTreeMap::new() }
    }

    pub fn with(mut self, name: &str, f: impl Fn(&Value) -> Result<Value, String> + Send + Sync + 'a) -> Self {
        self.tools.insert(name.to_string(), Box::new(f));
        self
    }

    fn run(&self, name: &str, args: &Value) -> Value {
        match self.tools.get(name) {
            Some(f) => f(args).unwrap_or_else(|e| json!({ "error": e })),
            None => json!({ "error": format!("tool '{name}' unavailable in this context") }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRecord {
    pub skill: String,
    pub key: String,
    pub tool: String,
    pub executed: bool,
}

/// Append-only log of tool requests across a run.
#[derive(Debug, Default)]
pub struct ExecutionLog {
    records: Mutex<Vec<ToolRecord>>,
}

impl ExecutionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, skill: &str, key: &str, tool: &str, executed: bool) {
        self.records.lock().expect("log poisoned").push(ToolRecord {
            skill: skill.into(),
            key: key.into(),
            tool: tool.into(),
            executed,
        });
    }

    pub fn records(&self) -> Vec<ToolRecord> {
        self.records.lock().expect("log poisoned").clone()
    }

    /// Executed tool names per skill.
    pub fn executed_by_skill(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in self.records().into_iter().filter(|r| r.executed) {
            out.entry(r.skill).or_default().insert(r.tool);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendExchange {
    pub request: BackendRequest,
    pub response: String,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub value: Value,
    pub attempts: u32,
    pub exchanges: Vec<BackendExchange>,
}

fn tool_call(raw: &str) -> Option<(String, Value)> {
    let v = parse_relaxed(raw).ok()?;
    let call = v.get("tool_call")?;
    let name = call.get("name")?.as_str()?.to_string();
    Some((name, call.get("arguments").cloned().unwrap_or(Value::Null)))
}

/// Run a skill until its output satisfies the schema or retries run out.
/// Violations from a failed attempt are appended to the next instruction.
/// Allowed tool calls are executed and do not consume an attempt; a call
/// outside the skill's scope is refused and counts as a failed attempt.
pub fn invoke_skill(
    skill: &Skill,
    context: &Value,
    backend: &dyn ReasoningBackend,
    tools: &ToolBox,
    log: &ExecutionLog,
) -> Result<Invocation, SkillError> {
    let base = skill.render(context)?;
    let key = crate::backend::ScriptedBackend::key_of(context);
    let mut ctx: Map<String, Value> = match context {
        Value::Object(m) => m.clone(),
        other => {
            let mut m = Map::new();
            m.insert("input".into(), other.clone());
            m
        }
    };
    let mut exchanges = Vec::new();
    let mut note = String::new();
    let mut attempt = 1u32;
    let mut tool_rounds = 0usize;
    let mut tool_results: Vec<Value> = Vec::new();
    loop {
        if !tool_results.is_empty() {
            ctx.insert("tool_results".into(), Value::Array(tool_results.clone()));
        }
        let request = BackendRequest {
            skill: skill.name.clone(),
            instruction: format!("{base}{note}"),
            context: Value::Object(ctx.clone()),
            tools: skill.allowed_tools.iter().cloned().collect(),
            schema: skill.output_schema.describe(),
            attempt,
            exchange: exchanges.len() as u32,
        };
        let response = backend.complete(&request)?;
        exchanges.push(BackendExchange {
            request,
            response: response.clone(),
            attempt,
        });
        let failure = if let Some((tool, args)) = tool_call(&response) {
            if !skill.allowed_tools.contains(&tool) {
                log.record(&skill.name, &key, &tool, false);
                note = format!("\n\nTool '{tool}' is not available to this skill. Reply with the final output.");
                SkillError::ToolScopeViolation { tool, attempts: attempt }
            } else if tool_rounds >= MAX_TOOL_ROUNDS {
                note = "\n\nTool budget exhausted. Reply with the final output.".into();
                SkillError::SchemaViolation {
                    attempts: attempt,
                    violations: vec![Violation {
                        path: String::new(),
                        message: format!("more than {MAX_TOOL_ROUNDS} tool calls"),
                    }],
                }
            } else {
                tool_rounds += 1;
                log.record(&skill.name, &key, &tool, true);
                let result = tools.run(&tool, &args);
                tool_results.push(json!({ "tool": tool, "arguments": args, "result": result }));
                continue;
            }
        } else {
            match validate_output(&skill.output_schema, &response) {
                Ok(value) => {
                    return Ok(Invocation {
                        value,
                        attempts: attempt,
                        exchanges,
                    })
                }
                Err(violations) => {
                    note = format!(
                        "\n\nThe previous output was rejected: {}. Reply again following the schema exactly.",
                        join(&violations)
                    );
                    SkillError::SchemaViolation {
                        attempts: attempt,
                        violations,
                    }
                }
            }
        };
        if attempt > skill.max_retries {
            return Err(failure);
        }
        attempt += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::schema::field;
    use super::*;
    use crate::backend::ScriptedBackend;

    fn skill(retries: u32) -> Skill {
        Skill::new(
            "probe",
            "Probe",
            "Report the temperature of {bundle_id}.",
            &["read_pages"],
            OutputSchema::record(vec![field("temp", OutputSchema::quantity("K"))]),
            retries,
        )
        .unwrap()
    }

    fn scripted(responses: Vec<Value>) -> ScriptedBackend {
        let mut b = ScriptedBackend::new();
        b.insert("probe", "d1", responses);
        b
    }

    fn ctx() -> Value {
        json!({"bundle_id": "d1"})
    }

    #[test]
    fn happy_path() {
        let b = scripted(vec![json!({"temp": "873.15 K"})]);
        let out = invoke_skill(&skill(2), &ctx(), &b, &ToolBox::new(), &ExecutionLog::new()).unwrap();
        assert_eq!(out.attempts, 1);
    }

    #[test]
    fn retries_then_succeeds() {
        let b = scripted(vec![json!("garbage"), json!("still garbage"), json!({"temp": "600 degC"})]);
        let out = invoke_skill(&skill(2), &ctx(), &b, &ToolBox::new(), &ExecutionLog::new()).unwrap();
        assert_eq!(out.attempts, 3);
        assert!(out.exchanges[1].request.instruction.contains("rejected"));
    }

    #[test]
    fn exhaustion() {
        let b = scripted(vec![json!("garbage")]);
        let err = invoke_skill(&skill(1), &ctx(), &b, &ToolBox::new(), &ExecutionLog::new()).unwrap_err();
        assert!(matches!(err, SkillError::SchemaViolation { attempts: 2, .. }));
    }

    #[test]
    fn out_of_scope_tool_refused() {
        let b = scripted(vec![
            json!({"tool_call": {"name": "store_write", "arguments": {}}}),
            json!({"temp": "10 K"}),
        ]);
        let log = ExecutionLog::new();
        let called = std::sync::atomic::AtomicBool::new(false);
        let tools = ToolBox::new().with("store_write", |_| {
            called.store(true, std::sync::atomic::Ordering::SeqCst);
            Ok(Value::Null)
        });
        let out = invoke_skill(&skill(1), &ctx(), &b, &tools, &log).unwrap();
        assert_eq!(out.attempts, 2);
        assert!(!called.load(std::sync::atomic::Ordering::SeqCst));
        assert!(log.executed_by_skill().is_empty());
        let err = invoke_skill(&skill(0), &ctx(), &b, &tools, &log).unwrap_err();
        assert!(matches!(err, SkillError::ToolScopeViolation { .. }));
    }

    #[test]
    fn allowed_tool_does_not_consume_attempt() {
        let b = scripted(vec![
            json!({"tool_call": {"name": "read_pages", "arguments": {"page": 1}}}),
            json!({"temp": "10 K"}),
        ]);
        let log = ExecutionLog::new();
        let tools = ToolBox::new().with("read_pages", |_| Ok(json!("page text")));
        let out = invoke_skill(&skill(0), &ctx(), &b, &tools, &log).unwrap();
        assert_eq!(out.attempts, 1);
        assert_eq!(out.exchanges.len(), 2);
        assert!(out.exchanges[1].request.context["tool_results"][0]["result"] == json!("page text"));
        assert_eq!(log.executed_by_skill()["probe"], BTreeSet::from(["read_pages".to_string()]));
    }

    #[test]
    fn backend_failure_propagates() {
        let b = scripted(vec![json!({"$error": "offline"})]);
        let err = invoke_skill(&skill(3), &ctx(), &b, &ToolBox::new(), &ExecutionLog::new()).unwrap_err();
        assert!(matches!(err, SkillError::BackendFailure(_)));
    }

    #[test]
    fn missing_placeholder_and_unknown_tool() {
        let err = invoke_skill(&skill(0), &json!({}), &scripted(vec![]), &ToolBox::new(), &ExecutionLog::new()).unwrap_err();
        assert_eq!(err, SkillError::MissingPlaceholder("bundle_id".into()));
        assert!(matches!(
            Skill::new("x", "X", "", &["launch"], OutputSchema::Number, 0),
            Err(SkillError::UnknownTool(_))
        ));
    }
}
