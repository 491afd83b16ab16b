//! End-to-end runs: configuration, sampling, the search environment backed by
//! the agents and models, the run directory, and reports.

mod config;
mod env;
mod report;
mod run;
mod sample;
mod store;

use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::agents::{AgentError, AuditLog};
use crate::domain::DomainError;
use crate::llm::{CacheVerification, LlmBackend, LlmCache, LlmError};
use crate::modeling::ModelError;
use crate::retrieval::{read_corpus, EmbedderSpec, KnowledgeBase, RetrievalError, DEFAULT_EMBED_DIM};
use crate::search::SearchTree;

pub use config::{DataSection, LlmSection, RunConfig, SamplingSection, DEFAULT_SAMPLE_SIZE};
pub use report::{
    build_report, find_trial, render_svg, render_text, render_trial, write_report, BestSummary, MetricSummary, NodeRow,
    RunReport, TrialShap,
};
pub use run::{run, RunSummary};
pub use sample::{class_quotas, stratified_sample, SampleError};
pub use store::{
    stop_label, write_atomic, BestModel, Manifest, RunDir, RunLock, RunStats, Samples, RUN_FORMAT_VERSION,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("corrupt run directory {path}: {message}")]
    CorruptRun { path: String, message: String },
    #[error("run directory {path} is in use by process {pid}")]
    Locked { path: String, pid: u32 },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("search: {0}")]
    Search(String),
}

impl From<DomainError> for PipelineError {
    fn from(e: DomainError) -> Self {
        PipelineError::Agent(AgentError::Domain(e))
    }
}

impl From<LlmError> for PipelineError {
    fn from(e: LlmError) -> Self {
        PipelineError::Agent(AgentError::Llm(e))
    }
}

impl PipelineError {
    /// True for failures of the language-model backend or its cache.
    pub fn is_fatal_backend(&self) -> bool {
        matches!(self, PipelineError::Agent(e) if e.is_fatal())
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Sample(_) => 2,
            e if e.is_fatal_backend() => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunPhase {
    Search,
    TestEvaluation,
    Report,
}

/// Hooks into a running pipeline; used for progress display and tests.
pub trait RunObserver: Send + Sync {
    fn phase(&self, _phase: RunPhase) {}
    fn checkpoint(&self, _tree: &SearchTree, _rollout: usize) {}
}

/// Injected collaborators of a run.
#[derive(Clone, Default)]
pub struct RunOptions {
    /// Backend behind the cache; when absent and the cache mode needs one,
    /// an HTTP backend is configured from the environment.
    pub upstream: Option<Arc<dyn LlmBackend>>,
    pub observer: Option<Arc<dyn RunObserver>>,
    pub audit: Option<Arc<AuditLog>>,
}

/// Index a JSONL corpus into `out` with the default hashing embedder.
pub fn ingest(corpus: &Path, out: &Path) -> Result<KnowledgeBase, PipelineError> {
    let f = fs::File::open(corpus)
        .map_err(|e| PipelineError::Config(format!("cannot open corpus {}: {e}", corpus.display())))?;
    let docs = read_corpus(BufReader::new(f))?;
    let kb = KnowledgeBase::ingest(docs, &EmbedderSpec::Hashing { dim: DEFAULT_EMBED_DIM })?;
    kb.save(out)?;
    tracing::info!(pubmed = kb.pubmed.len(), nct = kb.nct.len(), out = %out.display(), "corpus indexed");
    Ok(kb)
}

/// Verify a response cache, given either the cache itself or a run
/// directory containing `llm-cache/`.
pub fn verify_cache(dir: &Path) -> Result<CacheVerification, PipelineError> {
    let nested = dir.join("llm-cache");
    let target = if nested.is_dir() { nested } else { dir.to_path_buf() };
    LlmCache::new(target)
        .verify()
        .map_err(|e| PipelineError::Config(e.to_string()))
}
