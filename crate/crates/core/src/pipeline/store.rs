//! Run directory layout and its content-addressed stores.
//!
//! ```text
//! <run>/manifest.json          format version, creation time
//! <run>/config.toml            resolved configuration snapshot
//! <run>/config.json            same, as compared on resume
//! <run>/samples.json           sampled train/valid/test trials
//! <run>/tree.json              search tree, rewritten after every rollout
//! <run>/plans/<hash>.json      plan sets by content hash
//! <run>/values/<hash>.json     built values of one plan, by plan hash
//! <run>/features/<hash>.csv    train+valid design matrix of a plan set
//! <run>/features/<hash>.test.csv
//! <run>/best_model.json
//! <run>/report/                report.txt, report.json, shap/<nct>.{json,svg}
//! <run>/run_stats.json         wall clock and call counters
//! <run>/llm-cache/             default response cache
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::domain::{FeatureEntry, PlanSet, TrialRecord};
use crate::llm::CallCounts;
use crate::modeling::TrainedModels;
use crate::search::{SearchTree, StopReason};

pub const RUN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub created_unix: u64,
}

/// The sampled datasets, each in NCT order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Samples {
    pub train: Vec<TrialRecord>,
    pub valid: Vec<TrialRecord>,
    pub test: Vec<TrialRecord>,
}

impl Samples {
    pub fn label(&self, nct_id: &str) -> Option<bool> {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .find(|t| t.nct_id == nct_id)
            .map(TrialRecord::is_positive)
    }
}

/// The best node's models, as selected on validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestModel {
    pub node: usize,
    pub plan_set_hash: String,
    pub models: TrainedModels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub started_unix: u64,
    pub finished_unix: u64,
    pub wall_clock_secs: f64,
    pub llm: CallCounts,
    pub rollouts_run: usize,
    pub skipped_expansions: usize,
    pub stop: Option<String>,
    pub completed: bool,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Write via a temporary file in the same directory and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = parent.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Create a fresh run directory. Fails if it exists and is not empty.
    pub fn create(root: &Path) -> Result<Self, PipelineError> {
        if root.exists() {
            let non_empty = fs::read_dir(root).map_err(|e| io_err(root, e))?.next().is_some();
            if non_empty {
                return Err(PipelineError::Config(format!(
                    "run directory {} already exists; pass --resume to continue it",
                    root.display()
                )));
            }
        }
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let dir = Self {
            root: root.to_path_buf(),
        };
        dir.write_json(
            "manifest.json",
            &Manifest {
                format_version: RUN_FORMAT_VERSION,
                created_unix: unix_now(),
            },
        )?;
        Ok(dir)
    }

    /// Open an existing run directory, checking its format version.
    pub fn open(root: &Path) -> Result<Self, PipelineError> {
        let dir = Self {
            root: root.to_path_buf(),
        };
        let manifest: Manifest = dir
            .read_json("manifest.json")?
            .ok_or_else(|| dir.corrupt("manifest.json is missing"))?;
        if manifest.format_version > RUN_FORMAT_VERSION {
            return Err(dir.corrupt(format!(
                "run format version {} is newer than supported version {RUN_FORMAT_VERSION}",
                manifest.format_version
            )));
        }
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn corrupt(&self, message: impl Into<String>) -> PipelineError {
        PipelineError::CorruptRun {
            path: self.root.display().to_string(),
            message: message.into(),
        }
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        write_atomic(&self.path(rel), bytes)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), PipelineError> {
        self.write_bytes(rel, &pretty(value))
    }

    /// `Ok(None)` when the file does not exist; unparsable content is corruption.
    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<Option<T>, PipelineError> {
        let path = self.path(rel);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| self.corrupt(format!("{rel}: {e}")))
    }

    pub fn save_plans(&self, plans: &PlanSet) -> Result<String, PipelineError> {
        let hash = plans.content_hash();
        let rel = format!("plans/{hash}.json");
        if !self.path(&rel).exists() {
            self.write_json(&rel, plans)?;
        }
        Ok(hash)
    }

    /// Load a plan set and check that it hashes to its file name.
    pub fn load_plans(&self, hash: &str) -> Result<PlanSet, PipelineError> {
        let rel = format!("plans/{hash}.json");
        let plans: PlanSet = self
            .read_json(&rel)?
            .ok_or_else(|| self.corrupt(format!("tree references plan set {hash} but {rel} is missing")))?;
        let actual = plans.content_hash();
        if actual != hash {
            return Err(self.corrupt(format!("{rel} hashes to {actual}")));
        }
        Ok(plans)
    }

    pub fn save_values(&self, plan_hash: &str, values: &BTreeMap<String, FeatureEntry>) -> Result<(), PipelineError> {
        self.write_json(&format!("values/{plan_hash}.json"), values)
    }

    pub fn load_values(&self, plan_hash: &str) -> Result<Option<BTreeMap<String, FeatureEntry>>, PipelineError> {
        self.read_json(&format!("values/{plan_hash}.json"))
    }

    pub fn save_tree(&self, tree: &SearchTree) -> Result<(), PipelineError> {
        let mut text = tree.to_json();
        text.push('\n');
        self.write_bytes("tree.json", text.as_bytes())
    }

    pub fn load_tree(&self) -> Result<Option<SearchTree>, PipelineError> {
        let path = self.path("tree.json");
        match fs::read_to_string(&path) {
            Ok(t) => SearchTree::from_json(&t)
                .map(Some)
                .map_err(|e| self.corrupt(format!("tree.json: {e}"))),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path, e)),
        }
    }

    pub fn features_rel(hash: &str, test: bool) -> String {
        if test {
            format!("features/{hash}.test.csv")
        } else {
            format!("features/{hash}.csv")
        }
    }
}

pub fn stop_label(stop: &StopReason) -> String {
    match stop {
        StopReason::BudgetSpent => "budget_spent",
        StopReason::Exhausted => "exhausted",
        StopReason::TargetReached => "target_reached",
    }
    .to_string()
}

/// Exclusive ownership of a run directory for the life of the value.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

fn process_alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new(&format!("/proc/{pid}")).exists()
    } else {
        true
    }
}

impl RunLock {
    /// Take `<root>/.lock`. A lock left by a process that no longer exists
    /// is taken over.
    pub fn acquire(root: &Path) -> Result<Self, PipelineError> {
        let path = root.join(".lock");
        for _ in 0..2 {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id()).map_err(|e| io_err(&path, e))?;
                    return Ok(Self { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    let holder = fs::read_to_string(&path)
                        .ok()
                        .and_then(|s| s.trim().parse::<u32>().ok());
                    match holder {
                        Some(pid) if process_alive(pid) => {
                            return Err(PipelineError::Locked {
                                path: root.display().to_string(),
                                pid,
                            })
                        }
                        _ => {
                            tracing::warn!(path = %path.display(), "removing stale lock");
                            fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
                        }
                    }
                }
                Err(e) => return Err(io_err(&path, e)),
            }
        }
        Err(io_err(&path, "could not take the lock"))
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
