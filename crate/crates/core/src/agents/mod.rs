//! The agent roles: proposers, planner, grouper, researcher/builder and
//! evaluators. Each is a prompt template, a backend call and a schema check.

mod build;
mod evaluate;
mod plan;
mod prompt;
mod propose;
mod tools;

use std::sync::Arc;

use thiserror::Error;

use crate::domain::{DomainError, TaskSpec, TrialRecord};
use crate::llm::{LlmBackend, LlmError, Tool, DEFAULT_MAX_RETRIES, DEFAULT_MAX_STEPS};
use crate::retrieval::KnowledgeBase;

pub use build::build_features;
pub use evaluate::{EvaluatorInput, MisclassifiedExample};
pub use plan::repair_groups;
pub use prompt::{PromptSet, PromptTemplate, AGENT_NAMES};
pub use propose::uniquify;
pub use tools::{
    trial_tools, AuditLog, ObservedDocument, ToolObservation, GET_TRIAL_SUMMARY, MAX_TOOL_K, SEARCH_PUBMED,
    SEARCH_TRIALS,
};

/// The model-based evaluator returns at most this many suggestions.
pub const MAX_MODEL_SUGGESTIONS: usize = 3;
pub const DEFAULT_MAX_GROUP_SIZE: usize = 4;
pub const DEFAULT_WORKERS: usize = 4;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("prompt template '{name}': {message}")]
    Template { name: String, message: String },
    #[error("the proposers produced no feature ideas")]
    EmptyProposal,
    #[error("proposal targets a feature that does not exist: {0}")]
    InvalidTarget(String),
    #[error("plan for '{feature}' failed validation: {}", violations.join("; "))]
    InvalidPlan { feature: String, violations: Vec<String> },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

impl AgentError {
    /// Errors that must stop the run rather than skip one step.
    pub fn is_fatal(&self) -> bool {
        match self {
            AgentError::Llm(e) => e.is_fatal(),
            AgentError::Template { .. } => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub react_max_steps: usize,
    pub max_group_size: usize,
    /// Concurrent feature-building calls.
    pub workers: usize,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_retries: DEFAULT_MAX_RETRIES,
            react_max_steps: DEFAULT_MAX_STEPS,
            max_group_size: DEFAULT_MAX_GROUP_SIZE,
            workers: DEFAULT_WORKERS,
        }
    }
}

/// Everything the agents share: backend, prompts, settings, task and the
/// knowledge base behind their tools.
#[derive(Clone)]
pub struct Agents {
    pub backend: Arc<dyn LlmBackend>,
    pub prompts: PromptSet,
    pub settings: AgentSettings,
    pub task: TaskSpec,
    pub kb: Arc<KnowledgeBase>,
    pub audit: Option<Arc<AuditLog>>,
}

impl Agents {
    pub fn new(backend: Arc<dyn LlmBackend>, task: TaskSpec, kb: Arc<KnowledgeBase>) -> Self {
        Self {
            backend,
            prompts: PromptSet::builtin(),
            settings: AgentSettings::default(),
            task,
            kb,
            audit: None,
        }
    }

    pub fn with_settings(mut self, settings: AgentSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub(crate) fn tools_for(&self, trial: &TrialRecord) -> Vec<Arc<dyn Tool>> {
        trial_tools(self.kb.clone(), trial, self.audit.clone())
    }

    pub(crate) fn request(
        &self,
        agent: &str,
        vars: &[(&'static str, String)],
    ) -> Result<crate::llm::ChatRequest, AgentError> {
        let (system, user) = self.prompts.render(agent, vars)?;
        Ok(crate::llm::ChatRequest::new(&self.settings.model_id, system, user)
            .with_temperature(self.settings.temperature))
    }

    pub(crate) fn react(
        &self,
        agent: &str,
        vars: &[(&'static str, String)],
        trial: &TrialRecord,
    ) -> Result<crate::llm::ReactTrace, AgentError> {
        let (system, user) = self.prompts.render(agent, vars)?;
        Ok(crate::llm::react_loop(
            self.backend.as_ref(),
            &self.settings.model_id,
            self.settings.temperature,
            &system,
            &user,
            &self.tools_for(trial),
            self.settings.react_max_steps,
        )?)
    }
}
