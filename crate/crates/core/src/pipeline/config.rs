use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::agents::{AgentSettings, DEFAULT_MAX_GROUP_SIZE, DEFAULT_WORKERS};
use crate::domain::{MetricKind, SearchConfig, TaskSpec};
use crate::llm::{CacheMode, DEFAULT_MAX_RETRIES, DEFAULT_MAX_STEPS};

pub const DEFAULT_SAMPLE_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub task: String,
    #[serde(default)]
    pub metric: MetricKind,
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    /// Directory written by `autoct ingest`.
    pub index: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub model_id: String,
    pub temperature: f64,
    pub cache: CacheMode,
    /// Defaults to `<out_dir>/llm-cache`.
    pub cache_dir: Option<PathBuf>,
    pub url_env: String,
    pub key_env: String,
    pub max_retries: usize,
    pub react_max_steps: usize,
    pub max_group_size: usize,
    pub workers: usize,
    /// Directory of `<agent>.txt` files overriding the built-in prompts.
    pub prompts: Option<PathBuf>,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o-mini".into(),
            temperature: 0.0,
            cache: CacheMode::Record,
            cache_dir: None,
            url_env: crate::llm::URL_ENV.into(),
            key_env: crate::llm::KEY_ENV.into(),
            max_retries: DEFAULT_MAX_RETRIES,
            react_max_steps: DEFAULT_MAX_STEPS,
            max_group_size: DEFAULT_MAX_GROUP_SIZE,
            workers: DEFAULT_WORKERS,
            prompts: None,
        }
    }
}

impl LlmSection {
    pub fn agent_settings(&self) -> AgentSettings {
        AgentSettings {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            max_retries: self.max_retries,
            react_max_steps: self.react_max_steps,
            max_group_size: self.max_group_size,
            workers: self.workers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            train: DEFAULT_SAMPLE_SIZE,
            valid: DEFAULT_SAMPLE_SIZE,
            test: DEFAULT_SAMPLE_SIZE,
            seed: 0,
        }
    }
}

/// A run configuration with every path resolved against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub sampling: SamplingSection,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parse TOML text; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        for p in [
            &mut cfg.data.train,
            &mut cfg.data.valid,
            &mut cfg.data.test,
            &mut cfg.data.index,
            &mut cfg.data.out_dir,
        ] {
            resolve(base, p);
        }
        if let Some(p) = cfg.llm.cache_dir.as_mut() {
            resolve(base, p);
        }
        if let Some(p) = cfg.llm.prompts.as_mut() {
            resolve(base, p);
        }
        Ok(cfg)
    }

    /// Read, parse and check a config file.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::parse(&text, base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Static checks: referenced inputs exist and settings are in range.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.task()?;
        self.search
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for (what, p) in [
            ("train", &self.data.train),
            ("valid", &self.data.valid),
            ("test", &self.data.test),
        ] {
            if !p.is_file() {
                return bad(format!("{what} dataset {} does not exist", p.display()));
            }
        }
        if !self.data.index.join("manifest.json").is_file() {
            return bad(format!(
                "corpus index {} does not exist or is not an index",
                self.data.index.display()
            ));
        }
        if let Some(p) = &self.llm.prompts {
            if !p.is_dir() {
                return bad(format!("prompt directory {} does not exist", p.display()));
            }
        }
        if !(self.llm.temperature >= 0.0) {
            return bad("llm.temperature must be non-negative".into());
        }
        if self.llm.react_max_steps == 0 {
            return bad("llm.react_max_steps must be at least 1".into());
        }
        if self.llm.max_group_size == 0 {
            return bad("llm.max_group_size must be at least 1".into());
        }
        if self.sampling.train < 2 || self.sampling.valid < 2 || self.sampling.test < 2 {
            return bad("sample sizes must be at least 2".into());
        }
        Ok(())
    }

    pub fn task(&self) -> Result<TaskSpec, PipelineError> {
        TaskSpec::new(self.data.task.clone(), self.data.metric).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.llm
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.data.out_dir.join("llm-cache"))
    }

    /// Same run modulo where it is written.
    pub fn same_run_as(&self, other: &RunConfig) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.data.out_dir = PathBuf::new();
        b.data.out_dir = PathBuf::new();
        a == b
    }
}
