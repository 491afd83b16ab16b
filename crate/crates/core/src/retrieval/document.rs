use std::fmt;
use std::io::BufRead;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::RetrievalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Pubmed,
    Nct,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Pubmed => "pubmed",
            Source::Nct => "nct",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A dated corpus record. `date` is the publication date for PubMed
/// articles and the trial start date for registry records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub source: Source,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nct_id: Option<String>,
}

impl Document {
    /// The text that is tokenized and embedded.
    pub fn text(&self) -> String {
        if self.title.is_empty() {
            self.body.clone()
        } else if self.body.is_empty() {
            self.title.clone()
        } else {
            format!("{}\n{}", self.title, self.body)
        }
    }
}

/// Lowercase, split on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Read a JSON-Lines corpus. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>, RetrievalError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| RetrievalError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| RetrievalError::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        if doc.doc_id.is_empty() {
            return Err(RetrievalError::MalformedRecord {
                line: line_no,
                message: "empty doc_id".into(),
            });
        }
        if doc.source == Source::Pubmed && doc.nct_id.is_some() {
            return Err(RetrievalError::MalformedRecord {
                line: line_no,
                message: "nct_id is only allowed on nct records".into(),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}
