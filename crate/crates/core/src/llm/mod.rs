//! Chat-completion backends, the record/replay cache, structured output
//! parsing and the ReAct tool loop.

mod cache;
mod http;
mod react;
mod structured;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, CacheMode, CacheVerification, CachedBackend, LlmCache};
pub use http::{HttpBackend, KEY_ENV, URL_ENV};
pub use react::{react_loop, ParamKind, ReactStep, ReactTrace, Tool, ToolParam, ToolSpec, DEFAULT_MAX_STEPS};
pub use structured::{
    complete_parsed, complete_structured, extract_json, json_candidates, Schema, DEFAULT_MAX_RETRIES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub model_id: String,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            messages: vec![Message::user(user)],
            temperature: 0.0,
            model_id: model_id.into(),
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    /// Text of the first user message.
    pub fn user_text(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn last_message(&self) -> Option<&Message> {
        self.messages.last()
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    /// Transport or provider failure; aborts the pipeline.
    #[error("backend failure: {0}")]
    Backend(String),
    /// Replay-only cache had no response for this request; aborts the pipeline.
    #[error("no cached response for request {0}")]
    CacheMiss(String),
    #[error("model output unusable after {} attempt(s): {last_error}", responses.len())]
    UnparseableOutput { responses: Vec<String>, last_error: String },
    #[error("invalid tool setup: {0}")]
    InvalidTools(String),
    #[error("cache {path}: {message}")]
    Cache { path: String, message: String },
}

impl LlmError {
    /// Errors that should stop the whole run rather than one agent call.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            LlmError::Backend(_) | LlmError::CacheMiss(_) | LlmError::Cache { .. }
        )
    }
}

/// A chat-completion provider. Implementations must tolerate concurrent calls.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        (**self).complete(request)
    }
}

/// Call counters shared by cached backends.
#[derive(Debug, Default)]
pub struct CallStats {
    pub requests: AtomicU64,
    pub cache_hits: AtomicU64,
    pub upstream_calls: AtomicU64,
}

impl CallStats {
    pub fn snapshot(&self) -> CallCounts {
        CallCounts {
            requests: self.requests.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
            upstream_calls: self.upstream_calls.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CallCounts {
    pub requests: u64,
    pub cache_hits: u64,
    pub upstream_calls: u64,
}
