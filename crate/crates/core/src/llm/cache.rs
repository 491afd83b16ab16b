//! Content-addressed record/replay store for chat completions.
//!
//! Layout: `<dir>/<first two hex digits>/<digest>.json`, one file per
//! request holding the request and the recorded response. Writes go to a
//! temporary file in the same directory and are renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CallCounts, CallStats, ChatRequest, LlmBackend, LlmError};
use crate::hashing::{canonical_json, sha256_hex};

/// SHA-256 of the canonical (sorted-key) JSON of a request. Content fields
/// are hashed verbatim.
pub fn cache_key(request: &ChatRequest) -> String {
    sha256_hex(canonical_json(request).as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    request: ChatRequest,
    response: String,
}

#[derive(Debug, Clone)]
pub struct LlmCache {
    dir: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl LlmCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn err(path: &Path, message: impl ToString) -> LlmError {
        LlmError::Cache {
            path: path.display().to_string(),
            message: message.to_string(),
        }
    }

    pub fn get(&self, request: &ChatRequest) -> Result<Option<String>, LlmError> {
        let key = cache_key(request);
        let path = self.path_for(&key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(Self::err(&path, e)),
        };
        let record: CacheRecord = serde_json::from_str(&text).map_err(|e| Self::err(&path, e))?;
        if record.key != key {
            return Err(Self::err(&path, "stored key does not match file name"));
        }
        Ok(Some(record.response))
    }

    pub fn put(&self, request: &ChatRequest, response: &str) -> Result<(), LlmError> {
        let key = cache_key(request);
        let path = self.path_for(&key);
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(|e| Self::err(parent, e))?;
        let record = CacheRecord {
            key: key.clone(),
            request: request.clone(),
            response: response.to_string(),
        };
        let text = serde_json::to_string(&record).map_err(|e| Self::err(&path, e))?;
        let tmp = parent.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp).map_err(|e| Self::err(&tmp, e))?;
        f.write_all(text.as_bytes())
            .and_then(|_| f.write_all(b"\n"))
            .map_err(|e| Self::err(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, &path).map_err(|e| Self::err(&path, e))
    }

    /// Re-hash every stored request and compare with its file name.
    pub fn verify(&self) -> Result<CacheVerification, LlmError> {
        let mut report = CacheVerification::default();
        if !self.dir.exists() {
            return Err(Self::err(&self.dir, "cache directory does not exist"));
        }
        let mut shards: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| Self::err(&self.dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        shards.sort();
        for shard in shards {
            let mut files: Vec<PathBuf> = fs::read_dir(&shard)
                .map_err(|e| Self::err(&shard, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for file in files {
                report.entries += 1;
                let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
                let ok = fs::read_to_string(&file)
                    .ok()
                    .and_then(|t| serde_json::from_str::<CacheRecord>(&t).ok())
                    .is_some_and(|r| {
                        let k = cache_key(&r.request);
                        k == stem && r.key == stem && shard.ends_with(&stem[..2.min(stem.len())])
                    });
                if !ok {
                    report.corrupt.push(file.display().to_string());
                }
            }
        }
        Ok(report)
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CacheVerification {
    pub entries: usize,
    pub corrupt: Vec<String>,
}

impl CacheVerification {
    pub fn is_clean(&self) -> bool {
        self.corrupt.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Serve from the cache; forward misses upstream and record them.
    #[default]
    Record,
    /// Serve from the cache only; a miss is a fatal error.
    Replay,
    /// Always forward upstream; never read or write the cache.
    Live,
}

/// Backend wrapper implementing record/replay over an [`LlmCache`].
pub struct CachedBackend {
    cache: LlmCache,
    upstream: Option<Arc<dyn LlmBackend>>,
    mode: CacheMode,
    stats: CallStats,
}

impl CachedBackend {
    pub fn new(cache: LlmCache, upstream: Option<Arc<dyn LlmBackend>>, mode: CacheMode) -> Self {
        Self {
            cache,
            upstream,
            mode,
            stats: CallStats::default(),
        }
    }

    pub fn replay(cache: LlmCache) -> Self {
        Self::new(cache, None, CacheMode::Replay)
    }

    pub fn record(cache: LlmCache, upstream: Arc<dyn LlmBackend>) -> Self {
        Self::new(cache, Some(upstream), CacheMode::Record)
    }

    pub fn counts(&self) -> CallCounts {
        self.stats.snapshot()
    }

    pub fn cache(&self) -> &LlmCache {
        &self.cache
    }

    fn forward(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let upstream = self
            .upstream
            .as_ref()
            .ok_or_else(|| LlmError::CacheMiss(cache_key(request)))?;
        self.stats.upstream_calls.fetch_add(1, Ordering::Relaxed);
        upstream.complete(request)
    }
}

impl LlmBackend for CachedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        self.stats.requests.fetch_add(1, Ordering::Relaxed);
        match self.mode {
            CacheMode::Live => self.forward(request),
            CacheMode::Replay => match self.cache.get(request)? {
                Some(r) => {
                    self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                    Ok(r)
                }
                None => Err(LlmError::CacheMiss(cache_key(request))),
            },
            CacheMode::Record => {
                if let Some(r) = self.cache.get(request)? {
                    self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(r);
                }
                let response = self.forward(request)?;
                self.cache.put(request, &response)?;
                Ok(response)
            }
        }
    }
}
