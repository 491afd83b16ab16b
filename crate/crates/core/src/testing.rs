//! Deterministic fakes for tests: a scenario backend that answers every
//! agent prompt, scripted and failing backends, and synthetic datasets.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::domain::{write_trials, TrialRecord};
use crate::hashing::sha256_hex;
use crate::llm::{json_candidates, ChatRequest, LlmBackend, LlmError};
use crate::retrieval::{Document, Source};

/// Name of the feature whose built value equals the label.
pub const PLANTED_FEATURE: &str = "planted_signal";
/// Features whose values are hashed noise.
pub const NOISE_FEATURES: [&str; 2] = ["enrollment_size", "sponsor_experience"];

/// Which agent a request came from, recognised by its system prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AgentKind {
    ZeroShot,
    Factor,
    Summarizer,
    Iterative,
    Planner,
    Grouper,
    Researcher,
    Builder,
    ModelEvaluator,
    ErrorEvaluator,
}

impl AgentKind {
    pub fn detect(system: &str) -> Option<Self> {
        const MARKERS: [(&str, AgentKind); 10] = [
            ("comprehensive list of feature ideas", AgentKind::ZeroShot),
            ("deduce key factors", AgentKind::Factor),
            ("Merge them into one final list", AgentKind::Summarizer),
            ("Turn the suggestion into exactly one proposal", AgentKind::Iterative),
            ("defining a feature schema", AgentKind::Planner),
            ("Cluster them into logical groups", AgentKind::Grouper),
            ("do deep research", AgentKind::Researcher),
            ("CORRECTLY construct", AgentKind::Builder),
            ("limit to a maximum of 2-3 suggestions", AgentKind::ModelEvaluator),
            ("example of an incorrect prediction", AgentKind::ErrorEvaluator),
        ];
        MARKERS.iter().find(|(m, _)| system.contains(m)).map(|(_, k)| *k)
    }
}

/// Every `NCT` followed by eight digits in `text`.
pub fn nct_ids_in(text: &str) -> BTreeSet<String> {
    let b = text.as_bytes();
    let mut out = BTreeSet::new();
    let mut i = 0;
    while i + 11 <= b.len() {
        if &b[i..i + 3] == b"NCT" && b[i + 3..i + 11].iter().all(u8::is_ascii_digit) {
            out.insert(text[i..i + 11].to_string());
            i += 11;
        } else {
            i += 1;
        }
    }
    out
}

fn line_after<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

fn json_after(text: &str, marker: &str) -> Option<Value> {
    let start = text.find(marker)? + marker.len();
    json_candidates(&text[start..]).into_iter().next()
}

/// First backtick-quoted token.
fn quoted(text: &str) -> Option<&str> {
    let start = text.find('`')? + 1;
    let len = text[start..].find('`')?;
    Some(&text[start..start + len])
}

/// Uniform value in [0, 1) derived from a trial and a feature name.
pub fn noise_value(nct_id: &str, feature: &str) -> f64 {
    let h = sha256_hex(format!("{nct_id}/{feature}").as_bytes());
    let n = u64::from_str_radix(&h[..13], 16).expect("hex digits");
    n as f64 / (1u64 << 52) as f64
}

/// A fake model for the planted-separator scenario.
///
/// The initial proposers yield two noise features. The root model-based
/// evaluator's first suggestion is to add [`PLANTED_FEATURE`], whose built
/// value is the trial's label, so one Add reaches a perfect score.
/// Trial ids can be sealed; any prompt mentioning a sealed id is recorded
/// as a violation.
pub struct PlantedScenario {
    labels: BTreeMap<String, u8>,
    sealed: Mutex<BTreeSet<String>>,
    violations: Mutex<Vec<String>>,
    calls: Mutex<BTreeMap<AgentKind, u64>>,
}

impl PlantedScenario {
    pub fn new<'a>(trials: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        Self {
            labels: trials.into_iter().map(|t| (t.nct_id.clone(), t.label)).collect(),
            sealed: Mutex::new(BTreeSet::new()),
            violations: Mutex::new(Vec::new()),
            calls: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn seal<'a>(&self, trials: impl IntoIterator<Item = &'a TrialRecord>) {
        self.sealed
            .lock()
            .unwrap()
            .extend(trials.into_iter().map(|t| t.nct_id.clone()));
    }

    pub fn unseal(&self) {
        self.sealed.lock().unwrap().clear();
    }

    /// Sealed ids seen in requests, in arrival order.
    pub fn violations(&self) -> Vec<String> {
        self.violations.lock().unwrap().clone()
    }

    pub fn calls(&self) -> BTreeMap<AgentKind, u64> {
        self.calls.lock().unwrap().clone()
    }

    pub fn total_calls(&self) -> u64 {
        self.calls.lock().unwrap().values().sum()
    }

    fn ideas(names: &[&str]) -> Value {
        Value::Array(
            names
                .iter()
                .map(|n| json!({"feature_name": n, "description": format!("{} of the trial", n.replace('_', " "))}))
                .collect(),
        )
    }

    fn plan(name: &str, idea: &str) -> Value {
        let ty = if name.starts_with(PLANTED_FEATURE) {
            "boolean"
        } else {
            "float"
        };
        json!({
            "feature_name": name,
            "feature_idea": idea,
            "feature_type": {"value": ty},
            "data_sources": ["current_trial_summary"],
            "example_values": [],
            "possible_values": {},
            "feature_instructions": format!("Report the {} for the trial.", name.replace('_', " ")),
        })
    }

    fn tool_call(tool: &str, query: &str) -> String {
        json!({"thought": "Look this up first.", "action": tool, "args": {"query": query}}).to_string()
    }

    fn build(&self, user: &str) -> Result<Value, LlmError> {
        let nct =
            line_after(user, "NCT ID:").ok_or_else(|| LlmError::Backend("builder prompt without NCT ID".into()))?;
        let names = line_after(user, "Feature Plans:").unwrap_or("");
        let mut values = serde_json::Map::new();
        for name in names.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            let v = if name.starts_with(PLANTED_FEATURE) {
                let label = self
                    .labels
                    .get(nct)
                    .ok_or_else(|| LlmError::Backend(format!("unknown trial {nct}")))?;
                json!(*label == 1)
            } else {
                json!(noise_value(nct, name))
            };
            values.insert(name.to_string(), v);
        }
        Ok(json!({"feature_values": values, "explanations": {}}))
    }

    fn model_suggestions(user: &str) -> Vec<String> {
        let current: Vec<String> = json_after(user, "current_features_with_plan:")
            .and_then(|v| v.as_object().map(|m| m.keys().cloned().collect()))
            .unwrap_or_default();
        let noise: Vec<&String> = current.iter().filter(|n| !n.starts_with(PLANTED_FEATURE)).collect();
        let mut out = Vec::new();
        if !current.iter().any(|n| n.starts_with(PLANTED_FEATURE)) {
            out.push(format!(
                "Add a feature `{PLANTED_FEATURE}` recording whether the trial's pre-registered efficacy signal was met."
            ));
        }
        if let Some(first) = noise.first() {
            out.push(format!("Refine `{first}` to use the registry record only."));
        }
        if let Some(last) = noise.last() {
            out.push(format!("Remove `{last}`, it carries little signal."));
        }
        out
    }

    fn iterative(user: &str) -> Value {
        let suggestion = line_after(user, "Suggestion:").unwrap_or("");
        let name = quoted(suggestion).unwrap_or("unknown_feature");
        let action = suggestion.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
        json!({"action": action, "feature_name": name, "description": suggestion})
    }

    fn respond(&self, kind: AgentKind, request: &ChatRequest) -> Result<String, LlmError> {
        let user = request.user_text();
        let first_turn = request.messages.len() == 1;
        let text = match kind {
            AgentKind::ZeroShot => Self::ideas(&NOISE_FEATURES[..1]).to_string(),
            AgentKind::Factor if first_turn => Self::tool_call("search_pubmed", "trial outcome predictors"),
            AgentKind::Factor => {
                json!({"thought": "The sponsor matters.", "final": Self::ideas(&NOISE_FEATURES[1..])}).to_string()
            }
            AgentKind::Summarizer => Self::ideas(&NOISE_FEATURES).to_string(),
            AgentKind::Iterative => Self::iterative(user).to_string(),
            AgentKind::Planner => {
                let name = line_after(user, "Feature name:").unwrap_or("unknown_feature");
                let idea = line_after(user, "Idea:").unwrap_or("");
                Self::plan(name, idea).to_string()
            }
            AgentKind::Grouper => {
                let names: Vec<String> = json_after(user, "Feature plans:")
                    .and_then(|v| v.as_object().map(|m| m.keys().cloned().collect()))
                    .unwrap_or_default();
                json!([names]).to_string()
            }
            AgentKind::Researcher if first_turn => Self::tool_call("search_trials", "randomized trial enrollment"),
            AgentKind::Researcher => {
                json!({"thought": "The registry record suffices.", "final": "Nothing further found."}).to_string()
            }
            AgentKind::Builder => self.build(user)?.to_string(),
            AgentKind::ModelEvaluator => json!(Self::model_suggestions(user)).to_string(),
            AgentKind::ErrorEvaluator if first_turn => Self::tool_call("get_trial_summary", "summary"),
            AgentKind::ErrorEvaluator => {
                let planted = json_after(user, "current_features_with_plan:")
                    .and_then(|v| v.as_object().map(|m| m.contains_key(PLANTED_FEATURE)))
                    .unwrap_or(false);
                let list: Vec<String> = if planted {
                    vec![]
                } else {
                    vec![format!(
                        "Add a feature `{PLANTED_FEATURE}` capturing the efficacy signal this trial missed."
                    )]
                };
                json!({"thought": "Compared with similar trials.", "final": list}).to_string()
            }
        };
        Ok(text)
    }
}

impl LlmBackend for PlantedScenario {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let kind = AgentKind::detect(&request.system)
            .ok_or_else(|| LlmError::Backend("request matches no known agent prompt".into()))?;
        *self.calls.lock().unwrap().entry(kind).or_insert(0) += 1;
        {
            let sealed = self.sealed.lock().unwrap();
            if !sealed.is_empty() {
                // Only the prompt itself: tool observations may cite other registry records.
                let text = format!("{}\n{}", request.system, request.user_text());
                let hits: Vec<String> = nct_ids_in(&text).into_iter().filter(|id| sealed.contains(id)).collect();
                self.violations.lock().unwrap().extend(hits);
            }
        }
        self.respond(kind, request)
    }
}

/// Replies from a fixed script in order; records every request.
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<String>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.requests.lock().unwrap().push(request.clone());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| LlmError::Backend("script exhausted".into()))
    }
}

/// Fails every call; stands in for a network client that must not be used.
#[derive(Default)]
pub struct GuardBackend {
    calls: AtomicU64,
}

impl GuardBackend {
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmBackend for GuardBackend {
    fn complete(&self, _: &ChatRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(LlmError::Backend("network access attempted".into()))
    }
}

/// Forwards the first `limit` calls, then fails as if the process died.
pub struct FailAfter<B> {
    inner: B,
    limit: u64,
    calls: AtomicU64,
}

impl<B> FailAfter<B> {
    pub fn new(inner: B, limit: u64) -> Self {
        Self {
            inner,
            limit,
            calls: AtomicU64::new(0),
        }
    }
}

impl<B: LlmBackend> LlmBackend for FailAfter<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.limit {
            return Err(LlmError::Backend("connection reset".into()));
        }
        self.inner.complete(request)
    }
}

/// `n` trials with ids `NCT{first..}`, exactly `round(n·rate)` positives in
/// shuffled order and start dates spread over 2005 to 2019.
pub fn synthetic_trials(n: usize, positive_rate: f64, first_id: u32, seed: u64) -> Vec<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positives = (n as f64 * positive_rate).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < positives)).collect();
    labels.shuffle(&mut rng);
    let base = NaiveDate::from_ymd_opt(2005, 1, 1).expect("valid date");
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let day = rng.gen_range(0..15 * 365);
            TrialRecord::new(
                format!("NCT{:08}", first_id as usize + i),
                label,
                base + Duration::days(day),
            )
        })
        .collect()
}

/// Registry records for `trials` plus `n_articles` PubMed abstracts dated
/// across 2000 to 2024.
pub fn synthetic_corpus(trials: &[TrialRecord], n_articles: usize, seed: u64) -> Vec<Document> {
    const TOPICS: [&str; 6] = ["oncology", "cardiology", "vaccine", "diabetes", "dengue", "asthma"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs: Vec<Document> = trials
        .iter()
        .map(|t| {
            let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
            Document {
                doc_id: t.nct_id.clone(),
                source: Source::Nct,
                title: format!("A {topic} study"),
                body: format!("Interventional {topic} trial {} with randomized allocation.", t.nct_id),
                date: t.start_date,
                nct_id: Some(t.nct_id.clone()),
            }
        })
        .collect();
    let base = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    for i in 0..n_articles {
        let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
        docs.push(Document {
            doc_id: format!("PMID{:07}", i + 1),
            source: Source::Pubmed,
            title: format!("Outcomes in {topic}"),
            body: format!("We review {topic} trial outcomes and enrollment patterns, report {i}."),
            date: base + Duration::days(rng.gen_range(0..25 * 365)),
            nct_id: None,
        });
    }
    docs
}

/// Files of a synthetic scenario on disk.
#[derive(Debug, Clone)]
pub struct ScenarioFiles {
    pub dir: PathBuf,
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub corpus: PathBuf,
    pub trials: Vec<TrialRecord>,
}

impl ScenarioFiles {
    /// Write balanced train/valid/test CSVs of `n` trials each and a corpus.
    pub fn write(dir: &Path, n: usize, seed: u64) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let splits = [
            synthetic_trials(n, 0.5, 1, seed),
            synthetic_trials(n, 0.5, 100_001, seed + 1),
            synthetic_trials(n, 0.5, 200_001, seed + 2),
        ];
        let paths = [dir.join("train.csv"), dir.join("valid.csv"), dir.join("test.csv")];
        for (trials, path) in splits.iter().zip(&paths) {
            let f = std::fs::File::create(path)?;
            write_trials(f, trials).map_err(std::io::Error::other)?;
        }
        let trials: Vec<TrialRecord> = splits.concat();
        let corpus = dir.join("corpus.jsonl");
        let mut f = std::io::BufWriter::new(std::fs::File::create(&corpus)?);
        for d in synthetic_corpus(&trials, 50, seed) {
            writeln!(f, "{}", serde_json::to_string(&d).expect("document serializes"))?;
        }
        f.flush()?;
        let [train, valid, test] = paths;
        Ok(Self {
            dir: dir.to_path_buf(),
            train,
            valid,
            test,
            corpus,
            trials,
        })
    }

    /// A run configuration over these files. `index` is the ingested
    /// corpus directory and `out` the run directory.
    pub fn config_toml(&self, index: &Path, out: &Path, rollouts: usize, cache_mode: &str) -> String {
        format!(
            r#"[data]
task = "Predict whether the clinical trial will meet its primary outcome."
metric = "roc_auc"
train = "{}"
valid = "{}"
test = "{}"
index = "{}"
out_dir = "{}"

[search]
rollouts = {rollouts}
seed = 7

[llm]
cache = "{cache_mode}"
workers = 4

[sampling]
train = 100
valid = 100
test = 100
seed = 7
"#,
            self.train.display(),
            self.valid.display(),
            self.test.display(),
            index.display(),
            out.display(),
        )
    }
}
