//! Reason-act loop: the model alternates between tool calls and a final answer.
//!
//! Wire format, one JSON object per model turn:
//! `{"thought": "...", "action": "<tool>", "args": {...}}` or
//! `{"thought": "...", "final": ...}`. A turn with neither is taken as a
//! plain-prose final answer.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::structured::json_candidates;
use super::{ChatRequest, LlmBackend, LlmError, Message};

pub const DEFAULT_MAX_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Text,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    pub kind: ParamKind,
    pub description: String,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ToolParam>,
}

impl ToolSpec {
    fn signature(&self) -> String {
        let params: Vec<String> = self
            .parameters
            .iter()
            .map(|p| {
                let kind = match p.kind {
                    ParamKind::Text => "text",
                    ParamKind::Integer => "integer",
                };
                let opt = if p.required { "" } else { ", optional" };
                format!("{} ({kind}{opt}): {}", p.name, p.description)
            })
            .collect();
        format!("- {}: {}\n  args: {}", self.name, self.description, params.join("; "))
    }

    /// Check argument presence and types against the declared parameters.
    pub fn check_args(&self, args: &Value) -> Result<(), String> {
        let empty = serde_json::Map::new();
        let map = match args {
            Value::Object(m) => m,
            Value::Null => &empty,
            _ => return Err("args must be a JSON object".into()),
        };
        for p in &self.parameters {
            match (map.get(&p.name), p.kind) {
                (None, _) if p.required => return Err(format!("missing argument '{}'", p.name)),
                (None, _) => {}
                (Some(v), ParamKind::Text) if !v.is_string() => {
                    return Err(format!("argument '{}' must be text", p.name))
                }
                (Some(v), ParamKind::Integer) if !(v.is_u64() || v.is_i64()) => {
                    return Err(format!("argument '{}' must be an integer", p.name))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// A callable tool. Failures are reported back to the model as observations.
pub trait Tool: Send + Sync {
    fn spec(&self) -> ToolSpec;
    fn call(&self, args: &Value) -> Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactStep {
    pub thought: String,
    pub action: String,
    pub args: Value,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactTrace {
    pub steps: Vec<ReactStep>,
    #[serde(rename = "final")]
    pub final_answer: String,
    pub truncated: bool,
}

enum Turn {
    Act {
        thought: String,
        action: String,
        args: Value,
    },
    Final(String),
}

fn parse_turn(text: &str) -> Turn {
    for c in json_candidates(text) {
        let Value::Object(map) = c else { continue };
        let thought = map.get("thought").and_then(Value::as_str).unwrap_or("").to_string();
        if let Some(f) = map.get("final") {
            return Turn::Final(match f {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            });
        }
        if let Some(action) = map.get("action").and_then(Value::as_str) {
            return Turn::Act {
                thought,
                action: action.to_string(),
                args: map.get("args").cloned().unwrap_or(Value::Null),
            };
        }
    }
    Turn::Final(text.trim().to_string())
}

fn protocol(tools: &[Arc<dyn Tool>]) -> String {
    let listing: Vec<String> = tools.iter().map(|t| t.spec().signature()).collect();
    format!(
        "You can use the following tools:\n{}\n\n\
         Work step by step. On each turn reply with exactly one JSON object, either\n\
         {{\"thought\": \"<reasoning>\", \"action\": \"<tool name>\", \"args\": {{...}}}}\n\
         to call a tool, or\n\
         {{\"thought\": \"<reasoning>\", \"final\": <your final answer>}}\n\
         when you are done. Tool results arrive as messages starting with \"Observation:\".",
        listing.join("\n")
    )
}

/// Run the loop for at most `max_steps` model turns.
///
/// A turn with a final answer ends the loop. When the budget runs out the
/// trace is marked truncated and the last assistant text becomes the answer.
/// Tool failures are fed back as observations; backend failures abort.
pub fn react_loop(
    backend: &dyn LlmBackend,
    model_id: &str,
    temperature: f64,
    system: &str,
    user: &str,
    tools: &[Arc<dyn Tool>],
    max_steps: usize,
) -> Result<ReactTrace, LlmError> {
    if max_steps == 0 {
        return Err(LlmError::InvalidTools("max_steps must be at least 1".into()));
    }
    let mut by_name: BTreeMap<String, &Arc<dyn Tool>> = BTreeMap::new();
    for t in tools {
        let name = t.spec().name;
        if by_name.insert(name.clone(), t).is_some() {
            return Err(LlmError::InvalidTools(format!("duplicate tool name '{name}'")));
        }
    }

    let system = if tools.is_empty() {
        system.to_string()
    } else {
        format!("{system}\n\n{}", protocol(tools))
    };
    let mut request = ChatRequest::new(model_id, system, user).with_temperature(temperature);
    let mut steps = Vec::new();
    let mut last_text = String::new();

    for _ in 0..max_steps {
        let text = backend.complete(&request)?;
        last_text = text.clone();
        match parse_turn(&text) {
            Turn::Final(answer) => {
                return Ok(ReactTrace {
                    steps,
                    final_answer: answer,
                    truncated: false,
                })
            }
            Turn::Act { thought, action, args } => {
                let observation = match by_name.get(&action) {
                    None => format!(
                        "error: unknown tool '{action}'. Available tools: {}",
                        by_name.keys().cloned().collect::<Vec<_>>().join(", ")
                    ),
                    Some(tool) => match tool.spec().check_args(&args).and_then(|_| tool.call(&args)) {
                        Ok(obs) => obs,
                        Err(e) => format!("error: {e}"),
                    },
                };
                request.messages.push(Message::assistant(text));
                request
                    .messages
                    .push(Message::tool(format!("Observation: {observation}")));
                steps.push(ReactStep {
                    thought,
                    action,
                    args,
                    observation,
                });
            }
        }
    }
    Ok(ReactTrace {
        steps,
        final_answer: last_text,
        truncated: true,
    })
}
