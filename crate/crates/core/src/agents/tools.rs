//! Retrieval tools exposed to agents, each bound to one subject trial's
//! start date.

use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::TrialRecord;
use crate::llm::{ParamKind, Tool, ToolParam, ToolSpec};
use crate::retrieval::{nct_exclusion_search, Document, Hit, KnowledgeBase, DEFAULT_TOP_K};

pub const SEARCH_PUBMED: &str = "search_pubmed";
pub const SEARCH_TRIALS: &str = "search_trials";
pub const GET_TRIAL_SUMMARY: &str = "get_trial_summary";

/// Upper bound on `k` accepted from an agent.
pub const MAX_TOOL_K: usize = 20;
const MAX_BODY_CHARS: usize = 1500;

/// One document shown to an agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedDocument {
    pub doc_id: String,
    pub date: NaiveDate,
    /// The subject trial's own registry record, exempt from the cutoff.
    pub own_record: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolObservation {
    pub tool: String,
    pub subject: String,
    pub cutoff: NaiveDate,
    pub documents: Vec<ObservedDocument>,
}

impl ToolObservation {
    /// Documents dated on or after the cutoff, other than the own record.
    pub fn violations(&self) -> Vec<&ObservedDocument> {
        self.documents
            .iter()
            .filter(|d| !d.own_record && d.date >= self.cutoff)
            .collect()
    }
}

/// Shared record of every document returned by any tool.
#[derive(Debug, Default)]
pub struct AuditLog {
    entries: Mutex<Vec<ToolObservation>>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, obs: ToolObservation) {
        self.entries.lock().expect("audit lock").push(obs);
    }

    pub fn entries(&self) -> Vec<ToolObservation> {
        self.entries.lock().expect("audit lock").clone()
    }

    pub fn violation_count(&self) -> usize {
        self.entries
            .lock()
            .expect("audit lock")
            .iter()
            .map(|o| o.violations().len())
            .sum()
    }
}

#[derive(Clone)]
struct Binding {
    kb: Arc<KnowledgeBase>,
    subject: String,
    cutoff: NaiveDate,
    audit: Option<Arc<AuditLog>>,
}

impl Binding {
    fn log(&self, tool: &str, docs: &[&Document], own: bool) {
        if let Some(a) = &self.audit {
            a.record(ToolObservation {
                tool: tool.to_string(),
                subject: self.subject.clone(),
                cutoff: self.cutoff,
                documents: docs
                    .iter()
                    .map(|d| ObservedDocument {
                        doc_id: d.doc_id.clone(),
                        date: d.date,
                        own_record: own,
                    })
                    .collect(),
            });
        }
    }
}

fn render_doc(d: &Document) -> String {
    let mut body: String = d.body.chars().take(MAX_BODY_CHARS).collect();
    if body.len() < d.body.len() {
        body.push_str(" ...");
    }
    let id = match &d.nct_id {
        Some(n) if *n != d.doc_id => format!("{} / {n}", d.doc_id),
        _ => d.doc_id.clone(),
    };
    format!("[{id}] ({}) {}\n{}", d.date, d.title, body)
}

fn search_args(args: &Value) -> (String, usize) {
    let query = args.get("query").and_then(Value::as_str).unwrap_or("").to_string();
    let k = args
        .get("k")
        .and_then(Value::as_u64)
        .map(|k| (k as usize).clamp(1, MAX_TOOL_K))
        .unwrap_or(DEFAULT_TOP_K);
    (query, k)
}

fn query_params() -> Vec<ToolParam> {
    vec![
        ToolParam {
            name: "query".into(),
            kind: ParamKind::Text,
            description: "free-text search query".into(),
            required: true,
        },
        ToolParam {
            name: "k".into(),
            kind: ParamKind::Integer,
            description: format!("number of results (default {DEFAULT_TOP_K}, at most {MAX_TOOL_K})"),
            required: false,
        },
    ]
}

fn format_hits(b: &Binding, tool: &str, hits: &[Hit], lookup: impl Fn(&str) -> Option<Document>) -> String {
    let docs: Vec<Document> = hits.iter().filter_map(|h| lookup(&h.doc_id)).collect();
    b.log(tool, &docs.iter().collect::<Vec<_>>(), false);
    if docs.is_empty() {
        return "No results.".into();
    }
    docs.iter().map(render_doc).collect::<Vec<_>>().join("\n\n")
}

struct SearchPubmed(Binding);

impl Tool for SearchPubmed {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: SEARCH_PUBMED.into(),
            description: "Search PubMed abstracts published before the trial started.".into(),
            parameters: query_params(),
        }
    }

    fn call(&self, args: &Value) -> Result<String, String> {
        let (query, k) = search_args(args);
        let idx = &self.0.kb.pubmed;
        let hits = idx.hybrid_search(&query, k, self.0.cutoff).map_err(|e| e.to_string())?;
        Ok(format_hits(&self.0, SEARCH_PUBMED, &hits, |id| idx.get(id).cloned()))
    }
}

struct SearchTrials(Binding);

impl Tool for SearchTrials {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: SEARCH_TRIALS.into(),
            description: "Search ClinicalTrials.gov records of trials that started before this trial.".into(),
            parameters: query_params(),
        }
    }

    fn call(&self, args: &Value) -> Result<String, String> {
        let (query, k) = search_args(args);
        let idx = &self.0.kb.nct;
        let hits = nct_exclusion_search(idx, &query, k, self.0.cutoff).map_err(|e| e.to_string())?;
        Ok(format_hits(&self.0, SEARCH_TRIALS, &hits, |id| idx.get(id).cloned()))
    }
}

struct TrialSummary(Binding);

impl Tool for TrialSummary {
    fn spec(&self) -> ToolSpec {
        ToolSpec {
            name: GET_TRIAL_SUMMARY.into(),
            description: "Return the ClinicalTrials.gov registration record of the trial under study.".into(),
            parameters: vec![],
        }
    }

    fn call(&self, _args: &Value) -> Result<String, String> {
        match self.0.kb.nct.find_trial(&self.0.subject) {
            Some(d) => {
                self.0.log(GET_TRIAL_SUMMARY, &[d], true);
                Ok(render_doc(d))
            }
            None => {
                self.0.log(GET_TRIAL_SUMMARY, &[], true);
                Ok(format!("No registry record found for {}.", self.0.subject))
            }
        }
    }
}

/// The three tools, all cut off at `trial.start_date`.
pub fn trial_tools(kb: Arc<KnowledgeBase>, trial: &TrialRecord, audit: Option<Arc<AuditLog>>) -> Vec<Arc<dyn Tool>> {
    let b = Binding {
        kb,
        subject: trial.nct_id.clone(),
        cutoff: trial.start_date,
        audit,
    };
    vec![
        Arc::new(SearchPubmed(b.clone())),
        Arc::new(SearchTrials(b.clone())),
        Arc::new(TrialSummary(b)),
    ]
}
