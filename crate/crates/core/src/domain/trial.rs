use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DomainError;

/// Trial phase as registered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    I,
    II,
    III,
    IV,
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix("phase").unwrap_or(&t).trim();
        match t {
            "i" | "1" => Ok(Phase::I),
            "ii" | "2" => Ok(Phase::II),
            "iii" | "3" => Ok(Phase::III),
            "iv" | "4" => Ok(Phase::IV),
            _ => Err(format!("unknown phase '{s}'")),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::I => "I",
            Phase::II => "II",
            Phase::III => "III",
            Phase::IV => "IV",
        };
        f.write_str(s)
    }
}

/// One labelled trial. The agents only ever see the identifier; the label
/// is used for training, scoring and the factor-based proposer samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub nct_id: String,
    pub label: u8,
    pub start_date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
}

impl TrialRecord {
    pub fn new(nct_id: impl Into<String>, label: u8, start_date: NaiveDate) -> Self {
        Self {
            nct_id: nct_id.into(),
            label,
            start_date,
            phase: None,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// Which metric drives model selection and the search reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    RocAuc,
    PrAuc,
    F1,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::RocAuc => "roc_auc",
            MetricKind::PrAuc => "pr_auc",
            MetricKind::F1 => "f1",
        }
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "roc_auc" => Ok(MetricKind::RocAuc),
            "pr_auc" => Ok(MetricKind::PrAuc),
            "f1" => Ok(MetricKind::F1),
            other => Err(format!("unknown metric '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub description: String,
    #[serde(default)]
    pub metric: MetricKind,
}

impl TaskSpec {
    pub fn new(description: impl Into<String>, metric: MetricKind) -> Result<Self, DomainError> {
        let description = description.into();
        if description.trim().is_empty() {
            return Err(DomainError::EmptyTask);
        }
        Ok(Self { description, metric })
    }
}

/// Parse a trial dataset: header `nct_id,label,start_date[,phase]`.
pub fn read_trials<R: std::io::Read>(reader: R) -> Result<Vec<TrialRecord>, DomainError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DomainError::Dataset {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let want = ["nct_id", "label", "start_date"];
    if cols.len() < 3 || cols[..3] != want || (cols.len() == 4 && cols[3] != "phase") || cols.len() > 4 {
        return Err(DomainError::Dataset {
            line: 1,
            message: format!(
                "expected header nct_id,label,start_date[,phase], got {}",
                cols.join(",")
            ),
        });
    }

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| DomainError::Dataset { line, message };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let nct_id = row.get(0).unwrap_or("").to_string();
        if nct_id.is_empty() {
            return Err(bad("empty nct_id".into()));
        }
        let label = match row.get(1).unwrap_or("") {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label must be 0 or 1, got '{other}'"))),
        };
        let raw_date = row.get(2).unwrap_or("");
        if raw_date.is_empty() {
            return Err(bad(format!("trial {nct_id} has no start_date")));
        }
        let start_date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| bad(format!("bad start_date '{raw_date}': {e}")))?;
        let phase = match row.get(3) {
            Some(p) if !p.is_empty() => Some(p.parse::<Phase>().map_err(bad)?),
            _ => None,
        };
        if !seen.insert(nct_id.clone()) {
            return Err(bad(format!("duplicate nct_id {nct_id}")));
        }
        out.push(TrialRecord {
            nct_id,
            label,
            start_date,
            phase,
        });
    }
    Ok(out)
}

pub fn load_trials(path: &Path) -> Result<Vec<TrialRecord>, DomainError> {
    let f = std::fs::File::open(path).map_err(|e| DomainError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_trials(f)
}

pub fn write_trials<W: std::io::Write>(writer: W, trials: &[TrialRecord]) -> Result<(), DomainError> {
    let mut w = csv::Writer::from_writer(writer);
    let with_phase = trials.iter().any(|t| t.phase.is_some());
    let io = |e: csv::Error| DomainError::Dataset {
        line: 0,
        message: e.to_string(),
    };
    if with_phase {
        w.write_record(["nct_id", "label", "start_date", "phase"]).map_err(io)?;
    } else {
        w.write_record(["nct_id", "label", "start_date"]).map_err(io)?;
    }
    for t in trials {
        let label = t.label.to_string();
        let date = t.start_date.format("%Y-%m-%d").to_string();
        if with_phase {
            let phase = t.phase.map(|p| p.to_string()).unwrap_or_default();
            w.write_record([t.nct_id.as_str(), &label, &date, &phase]).map_err(io)?;
        } else {
            w.write_record([t.nct_id.as_str(), &label, &date]).map_err(io)?;
        }
    }
    w.flush().map_err(|e| DomainError::Dataset {
        line: 0,
        message: e.to_string(),
    })
}
