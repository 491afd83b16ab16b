//! Prompt templates: `[system]` and `[user]` sections with `{{name}}`
//! placeholders.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use super::AgentError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub system: String,
    pub user: String,
}

fn placeholders(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    out.insert(name.to_string());
                }
                rest = &after[end + 2..];
            }
            None => break,
        }
    }
    out
}

fn substitute(text: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}").map(|end| (&after[..end], end)) {
            Some((name, end)) if vars.contains_key(name) => {
                out.push_str(&vars[name]);
                rest = &after[end + 2..];
            }
            _ => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

impl PromptTemplate {
    /// Parse the `[system]` / `[user]` file format.
    pub fn parse(name: &str, text: &str) -> Result<Self, AgentError> {
        let bad = |m: &str| AgentError::Template {
            name: name.to_string(),
            message: m.to_string(),
        };
        let text = text.replace("\r\n", "\n");
        let sys_at = text.find("[system]\n").ok_or_else(|| bad("missing [system] section"))?;
        let user_at = text.find("\n[user]\n").ok_or_else(|| bad("missing [user] section"))?;
        if user_at < sys_at {
            return Err(bad("[system] must come before [user]"));
        }
        Ok(Self {
            name: name.to_string(),
            system: text[sys_at + "[system]\n".len()..user_at].trim().to_string(),
            user: text[user_at + "\n[user]\n".len()..].trim().to_string(),
        })
    }

    /// Placeholder names used in either section.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut v = placeholders(&self.system);
        v.extend(placeholders(&self.user));
        v
    }

    /// Fill every placeholder; a missing variable is an error. Values are
    /// inserted verbatim, so placeholders inside values are left alone.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<(String, String), AgentError> {
        let missing: Vec<String> = self
            .variables()
            .into_iter()
            .filter(|v| !vars.contains_key(v.as_str()))
            .collect();
        if !missing.is_empty() {
            return Err(AgentError::Template {
                name: self.name.clone(),
                message: format!("unfilled placeholders: {}", missing.join(", ")),
            });
        }
        Ok((substitute(&self.system, vars), substitute(&self.user, vars)))
    }
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        const BUILTIN: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../../../prompts/", $name, ".txt"))),)*
        ];
    };
}

builtin!(
    "zero_shot_proposer",
    "factor_proposer",
    "summarizer",
    "iterative_proposer",
    "planner",
    "grouper",
    "researcher",
    "builder",
    "model_evaluator",
    "error_evaluator",
);

/// Agent names with a prompt file.
pub const AGENT_NAMES: [&str; 10] = [
    "zero_shot_proposer",
    "factor_proposer",
    "summarizer",
    "iterative_proposer",
    "planner",
    "grouper",
    "researcher",
    "builder",
    "model_evaluator",
    "error_evaluator",
];

/// One template per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl PromptSet {
    /// Templates compiled into the binary from the repository's `prompts/`.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(n, t)| {
                (
                    n.to_string(),
                    PromptTemplate::parse(n, t).expect("builtin prompt parses"),
                )
            })
            .collect();
        Self { templates }
    }

    /// Built-in templates, overridden by any `<agent>.txt` in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, AgentError> {
        let mut set = Self::builtin();
        for name in AGENT_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| AgentError::Template {
                    name: name.to_string(),
                    message: format!("{}: {e}", path.display()),
                })?;
                set.templates
                    .insert(name.to_string(), PromptTemplate::parse(name, &text)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> &PromptTemplate {
        self.templates
            .get(name)
            .unwrap_or_else(|| panic!("no prompt template named {name}"))
    }

    pub fn render(&self, name: &str, vars: &[(&'static str, String)]) -> Result<(String, String), AgentError> {
        let map: BTreeMap<&str, String> = vars.iter().cloned().collect();
        self.get(name).render(&map)
    }
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}
