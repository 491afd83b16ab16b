//! Local knowledge bases with hybrid lexical and vector search.
//!
//! Every search takes a cutoff date and only returns documents dated
//! strictly before it. Agents query the PubMed and NCT bases through
//! tools bound to the subject trial's start date.

mod bm25;
mod document;
mod embed;
mod fusion;
mod index;

use thiserror::Error;

pub use bm25::{bm25_idf, bm25_term_score, Bm25Params};
pub use document::{read_corpus, tokenize, Document, Source};
pub use embed::{Embedder, EmbedderSpec, HashingEmbedder, RemoteEmbedder, DEFAULT_EMBED_DIM};
pub use fusion::{reciprocal_rank_fusion, RRF_K};
pub use index::{nct_exclusion_search, Hit, KnowledgeBase, RetrievalIndex, DEFAULT_TOP_K};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate doc_id '{doc_id}' in {source_kind} corpus")]
    DuplicateDocId { doc_id: String, source_kind: Source },
    #[error("corpus line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("expected a {expected} index, got {actual}")]
    WrongSource { expected: Source, actual: Source },
    #[error("embedding has dimension {got}, index expects {want}")]
    Dimension { want: usize, got: usize },
    #[error("index format: {0}")]
    Format(String),
    #[error("embedding service: {0}")]
    Embedding(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RetrievalError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        RetrievalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
