use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::document::tokenize;
use super::RetrievalError;

pub const DEFAULT_EMBED_DIM: usize = 256;

/// Text to unit-norm vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError>;
    /// Serializable description used to reconstruct the embedder on load.
    fn spec(&self) -> EmbedderSpec;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hashing { dim: usize },
    Remote { model: String, dim: usize },
}

impl EmbedderSpec {
    pub fn dimension(&self) -> usize {
        match self {
            EmbedderSpec::Hashing { dim } | EmbedderSpec::Remote { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>, RetrievalError> {
        match self {
            EmbedderSpec::Hashing { dim } => Ok(Box::new(HashingEmbedder::new(*dim))),
            EmbedderSpec::Remote { model, dim } => Ok(Box::new(RemoteEmbedder::from_env(model.clone(), *dim)?)),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

/// Signed feature hashing of token unigrams, L2-normalized.
///
/// Text without any token maps to the zero vector, which matches nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBED_DIM)
    }
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(text) {
            let h = fnv1a(tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        Ok(normalize(v))
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::Hashing { dim: self.dim }
    }
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
///
/// Base URL and key come from `AUTOCT_EMBED_URL` / `AUTOCT_EMBED_KEY`.
pub struct RemoteEmbedder {
    base_url: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, model: impl Into<String>, dim: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            dim,
            agent,
        }
    }

    pub fn from_env(model: String, dim: usize) -> Result<Self, RetrievalError> {
        let url = std::env::var("AUTOCT_EMBED_URL")
            .map_err(|_| RetrievalError::Embedding("AUTOCT_EMBED_URL is not set".into()))?;
        Ok(Self::new(url, std::env::var("AUTOCT_EMBED_KEY").ok(), model, dim))
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, RetrievalError> {
        let body = serde_json::json!({ "model": self.model, "input": text });
        let mut req = self.agent.post(format!("{}/embeddings", self.base_url));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| RetrievalError::Embedding(e.to_string()))?;
        let json: serde_json::Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| RetrievalError::Embedding(e.to_string()))?;
        let arr = json
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| RetrievalError::Embedding("response has no data[0].embedding".into()))?;
        let v: Vec<f64> = arr.iter().filter_map(|x| x.as_f64()).collect();
        if v.len() != self.dim {
            return Err(RetrievalError::Dimension {
                want: self.dim,
                got: v.len(),
            });
        }
        Ok(normalize(v))
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::Remote {
            model: self.model.clone(),
            dim: self.dim,
        }
    }
}
