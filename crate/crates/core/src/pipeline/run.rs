use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use super::config::RunConfig;
use super::env::Workspace;
use super::report::{build_report, write_report, RunReport};
use super::sample::stratified_sample;
use super::store::{stop_label, unix_now, BestModel, RunDir, RunLock, RunStats, Samples};
use super::{PipelineError, RunOptions, RunPhase};
use crate::agents::{Agents, PromptSet};
use crate::domain::load_trials;
use crate::llm::{CacheMode, CachedBackend, HttpBackend, LlmBackend, LlmCache};
use crate::modeling::encode;
use crate::retrieval::KnowledgeBase;
use crate::search::{run_search, SearchError};

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub report: RunReport,
    pub stats: RunStats,
}

fn config_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Config(e.to_string())
}

fn sample(config: &RunConfig) -> Result<Samples, PipelineError> {
    let s = &config.sampling;
    let load = |p: &Path| load_trials(p).map_err(|e| config_err(format!("{}: {e}", p.display())));
    Ok(Samples {
        train: stratified_sample(&load(&config.data.train)?, s.train, s.seed)?,
        valid: stratified_sample(&load(&config.data.valid)?, s.valid, s.seed.wrapping_add(1))?,
        test: stratified_sample(&load(&config.data.test)?, s.test, s.seed.wrapping_add(2))?,
    })
}

fn upstream(config: &RunConfig, options: &RunOptions) -> Result<Option<Arc<dyn LlmBackend>>, PipelineError> {
    if config.llm.cache == CacheMode::Replay {
        return Ok(None);
    }
    if let Some(u) = &options.upstream {
        return Ok(Some(u.clone()));
    }
    let http = HttpBackend::from_env(&config.llm.url_env, &config.llm.key_env).map_err(config_err)?;
    Ok(Some(Arc::new(http)))
}

/// Open the directory of a resumed run, or create a fresh one.
fn open_dir(config: &RunConfig, resume: Option<&Path>, samples: &Samples) -> Result<RunDir, PipelineError> {
    let Some(root) = resume else {
        let dir = RunDir::create(&config.data.out_dir)?;
        dir.write_bytes("config.toml", toml::to_string(config).map_err(config_err)?.as_bytes())?;
        dir.write_json("config.json", config)?;
        dir.write_json("samples.json", samples)?;
        return Ok(dir);
    };
    let dir = RunDir::open(root)?;
    let previous: RunConfig = dir
        .read_json("config.json")?
        .ok_or_else(|| dir.corrupt("config.json is missing"))?;
    if !previous.same_run_as(config) {
        return Err(config_err(format!(
            "{} was created with a different configuration",
            root.display()
        )));
    }
    let stored: Samples = dir
        .read_json("samples.json")?
        .ok_or_else(|| dir.corrupt("samples.json is missing"))?;
    if &stored != samples {
        return Err(dir.corrupt("sampled trials differ from the recorded samples"));
    }
    if let Some(tree) = dir.load_tree()? {
        tracing::info!(
            nodes = tree.nodes.len(),
            "resuming; replaying the search against the response cache"
        );
    }
    Ok(dir)
}

/// Execute a run, or resume the one in `resume`.
///
/// A resumed run is replayed from the start; responses already in the cache
/// are not requested again and stored feature values are reused, so it ends
/// where an uninterrupted run would have.
pub fn run(config: &RunConfig, resume: Option<&Path>, options: RunOptions) -> Result<RunSummary, PipelineError> {
    let started = Instant::now();
    let started_unix = unix_now();
    config.validate()?;
    let task = config.task()?;
    let samples = sample(config)?;
    let kb = Arc::new(KnowledgeBase::load(&config.data.index).map_err(config_err)?);
    let prompts = match &config.llm.prompts {
        Some(dir) => PromptSet::with_overrides(dir).map_err(config_err)?,
        None => PromptSet::builtin(),
    };
    let upstream = upstream(config, &options)?;

    let dir = open_dir(config, resume, &samples)?;
    let _lock = RunLock::acquire(dir.root())?;
    let cache_dir = config.llm.cache_dir.clone().unwrap_or_else(|| dir.path("llm-cache"));
    let backend = Arc::new(CachedBackend::new(LlmCache::new(cache_dir), upstream, config.llm.cache));

    let mut agents = Agents::new(backend.clone(), task, kb)
        .with_settings(config.llm.agent_settings())
        .with_prompts(prompts);
    if let Some(audit) = &options.audit {
        agents = agents.with_audit(audit.clone());
    }
    let observer = options.observer.clone();
    let phase = |p: RunPhase| {
        if let Some(o) = &observer {
            o.phase(p);
        }
    };

    let stats = |completed: bool, rollouts_run: usize, skipped: usize, stop: Option<String>| RunStats {
        started_unix,
        finished_unix: unix_now(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        llm: backend.counts(),
        rollouts_run,
        skipped_expansions: skipped,
        stop,
        completed,
    };

    phase(RunPhase::Search);
    let mut ws = Workspace::new(agents, &dir, &config.search, &samples, observer.clone());
    let outcome = match run_search(&config.search, &mut ws) {
        Ok(o) => o,
        Err(e) => {
            dir.write_json("run_stats.json", &stats(false, 0, 0, None))?;
            return Err(match e {
                SearchError::Environment(e) => e,
                other => PipelineError::Search(other.to_string()),
            });
        }
    };
    dir.save_tree(&outcome.tree)?;
    let best = BestModel {
        node: outcome.tree.best.node,
        plan_set_hash: outcome.best_plans.content_hash(),
        models: outcome.best_model.clone(),
    };
    dir.write_json("best_model.json", &best)?;

    if let Some(fatal) = outcome.fatal {
        // Keep what was found: the tree, the best model and a report without
        // test metrics.
        write_report(&dir, &build_report(&dir)?)?;
        dir.write_json(
            "run_stats.json",
            &stats(false, outcome.rollouts_run, outcome.skipped, None),
        )?;
        return Err(fatal);
    }

    phase(RunPhase::TestEvaluation);
    let test_result = ws
        .ensure_values(&outcome.best_plans, &samples.test)
        .and_then(|()| ws.value_sets(&outcome.best_plans, &samples.test));
    let test_sets = match test_result {
        Ok(s) => s,
        Err(e) => {
            write_report(&dir, &build_report(&dir)?)?;
            dir.write_json(
                "run_stats.json",
                &stats(false, outcome.rollouts_run, outcome.skipped, None),
            )?;
            return Err(e);
        }
    };
    let xtest = encode(&outcome.best_plans, &test_sets);
    let mut csv = Vec::new();
    xtest.write_csv(&mut csv)?;
    dir.write_bytes(&RunDir::features_rel(&best.plan_set_hash, true), &csv)?;

    phase(RunPhase::Report);
    let report = build_report(&dir)?;
    write_report(&dir, &report)?;
    let stats = stats(
        true,
        outcome.rollouts_run,
        outcome.skipped,
        Some(stop_label(&outcome.stop)),
    );
    dir.write_json("run_stats.json", &stats)?;
    tracing::info!(
        best_node = report.best_node,
        best_score = report.best_score,
        requests = stats.llm.requests,
        cache_hits = stats.llm.cache_hits,
        "run finished"
    );
    Ok(RunSummary {
        run_dir: dir.root().to_path_buf(),
        report,
        stats,
    })
}
