//! Content-addressed replay cache for external calls.
//!
//! Every outbound request (LLM, search, scorer, Wikidata) is described twice:
//! once as the concrete [`HttpRequest`] that would go on the wire, and once
//! as a canonical JSON payload that identifies it. Only the canonical payload
//! is hashed, so credentials carried in headers or query strings never enter
//! a cache key. Entries live at `<dir>/<kind>/<sha256>.json` and are written
//! with write-then-rename.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CacheKind {
    Llm,
    BasicSearch,
    AdvancedSearch,
    Scorer,
    Wikidata,
}

impl CacheKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CacheKind::Llm => "llm",
            CacheKind::BasicSearch => "basic_search",
            CacheKind::AdvancedSearch => "advanced_search",
            CacheKind::Scorer => "scorer",
            CacheKind::Wikidata => "wikidata",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<String>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: Method::Get,
            url: url.into(),
            headers: Vec::new(),
            body: None,
        }
    }

    pub fn post_json(url: impl Into<String>, body: &Value) -> Self {
        Self {
            method: Method::Post,
            url: url.into(),
            headers: vec![("content-type".into(), "application/json".into())],
            body: Some(body.to_string()),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("request to {url} failed: {reason}")]
    Failed { url: String, reason: String },
    #[error("network access is disabled (request to {0})")]
    Offline(String),
}

/// Anything that can execute an HTTP request. Implementations must tolerate
/// concurrent calls.
pub trait Transport: Send + Sync {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Blocking reqwest transport with bounded retries on transport errors,
/// 429 and 5xx.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
    retries: u32,
    backoff: Duration,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration, retries: u32) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("kgc-agent/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| TransportError::Failed {
                url: String::new(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            client,
            retries,
            backoff: Duration::from_millis(500),
        })
    }

    fn once(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
        let mut builder = match req.method {
            Method::Get => self.client.get(&req.url),
            Method::Post => self.client.post(&req.url),
        };
        for (k, v) in &req.headers {
            builder = builder.header(k, v);
        }
        if let Some(body) = &req.body {
            builder = builder.body(body.clone());
        }
        let resp = builder.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

impl Transport for ReqwestTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            match self.once(req) {
                Ok(r) if r.status == 429 || r.status >= 500 => {
                    last = format!("HTTP {}", r.status);
                }
                Ok(r) => return Ok(r),
                Err(e) => last = e,
            }
        }
        Err(TransportError::Failed {
            url: req.url.clone(),
            reason: last,
        })
    }
}

/// Refuses every request. Useful to prove a run is fully served from cache.
#[derive(Debug, Default)]
pub struct OfflineTransport;

impl Transport for OfflineTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        Err(TransportError::Offline(req.url.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Serve hits from disk, fetch and record misses.
    #[default]
    ReadWrite,
    /// Serve hits from disk; a miss is an error and never touches the network.
    ReplayOnly,
    /// No persistence; every call goes to the transport.
    Disabled,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CacheEntry {
    pub key: String,
    pub kind: CacheKind,
    pub request: Value,
    pub payload: String,
    pub created_at: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("HTTP {status} from {url}: {body}")]
    Status { url: String, status: u16, body: String },
    #[error("cache miss in replay-only mode for {kind} request {key}")]
    ReplayMiss { kind: &'static str, key: String },
    #[error("cache io error at {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub network_calls: u64,
}

/// Canonical form used for hashing: compact JSON with object keys sorted.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn cache_key(kind: CacheKind, canonical_request: &Value) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_str().as_bytes());
    h.update(b"\n");
    h.update(canonical_json(canonical_request).as_bytes());
    hex::encode(h.finalize())
}

pub struct ReplayCache {
    dir: Option<PathBuf>,
    mode: CacheMode,
    transport: Arc<dyn Transport>,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
    network_calls: AtomicU64,
}

impl fmt::Debug for ReplayCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReplayCache")
            .field("dir", &self.dir)
            .field("mode", &self.mode)
            .field("stats", &self.stats())
            .finish()
    }
}

impl ReplayCache {
    pub fn new(dir: impl Into<PathBuf>, mode: CacheMode, transport: Arc<dyn Transport>) -> Self {
        Self {
            dir: Some(dir.into()),
            mode,
            transport,
            key_locks: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            network_calls: AtomicU64::new(0),
        }
    }

    /// Pass-through cache with no persistence.
    pub fn disabled(transport: Arc<dyn Transport>) -> Self {
        Self {
            dir: None,
            mode: CacheMode::Disabled,
            transport,
            key_locks: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
            network_calls: AtomicU64::new(0),
        }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            network_calls: self.network_calls.load(Ordering::Relaxed),
        }
    }

    fn entry_path(&self, kind: CacheKind, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(kind.as_str()).join(format!("{key}.json")))
    }

    fn lock_for(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().expect("cache lock poisoned");
        locks.entry(key.to_string()).or_default().clone()
    }

    pub fn lookup(&self, kind: CacheKind, canonical_request: &Value) -> Option<CacheEntry> {
        let key = cache_key(kind, canonical_request);
        let path = self.entry_path(kind, &key)?;
        read_entry(&path)
    }

    /// Returns the response body for `canonical_request`, going to the
    /// transport with `req` only on a miss.
    pub fn fetch(
        &self,
        kind: CacheKind,
        canonical_request: &Value,
        req: &HttpRequest,
    ) -> Result<String, CacheError> {
        let key = cache_key(kind, canonical_request);
        let Some(path) = self.entry_path(kind, &key) else {
            self.misses.fetch_add(1, Ordering::Relaxed);
            return self.call(req);
        };
        let lock = self.lock_for(&key);
        let _guard = lock.lock().expect("cache key lock poisoned");
        if let Some(entry) = read_entry(&path) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(entry.payload);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        if self.mode == CacheMode::ReplayOnly {
            return Err(CacheError::ReplayMiss {
                kind: kind.as_str(),
                key,
            });
        }
        let body = self.call(req)?;
        let entry = CacheEntry {
            key,
            kind,
            request: canonical_request.clone(),
            payload: body.clone(),
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        write_entry(&path, &entry)?;
        Ok(body)
    }

    fn call(&self, req: &HttpRequest) -> Result<String, CacheError> {
        self.network_calls.fetch_add(1, Ordering::Relaxed);
        let resp = self.transport.execute(req)?;
        if !(200..300).contains(&resp.status) {
            return Err(CacheError::Status {
                url: req.url.clone(),
                status: resp.status,
                body: resp.body.chars().take(200).collect(),
            });
        }
        Ok(resp.body)
    }
}

fn read_entry(path: &Path) -> Option<CacheEntry> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_entry(path: &Path, entry: &CacheEntry) -> Result<(), CacheError> {
    let io = |e: std::io::Error| CacheError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let parent = path.parent().expect("cache entries live in a kind directory");
    std::fs::create_dir_all(parent).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(io)?;
    serde_json::to_writer_pretty(&mut tmp, entry).map_err(|e| io(e.into()))?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Serves canned responses by URL (optionally also matching the request
/// body) and counts calls. Unrouted requests fail. Used for recorded
/// endpoints in tests and offline fixtures.
#[derive(Debug, Default)]
pub struct StaticTransport {
    routes: Mutex<Vec<(String, Option<String>, HttpResponse)>>,
    calls: AtomicU64,
}

impl StaticTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn route(&self, url: &str, body: &str) {
        self.route_full(url, None, 200, body);
    }

    pub fn route_status(&self, url: &str, status: u16) {
        self.route_full(url, None, status, "");
    }

    pub fn route_full(&self, url: &str, request_body: Option<&str>, status: u16, body: &str) {
        self.routes.lock().expect("routes lock").push((
            url.to_string(),
            request_body.map(str::to_string),
            HttpResponse {
                status,
                body: body.to_string(),
            },
        ));
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for StaticTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let routes = self.routes.lock().expect("routes lock");
        routes
            .iter()
            .find(|(u, b, _)| u == &req.url && (b.is_none() || b == &req.body))
            .map(|(_, _, r)| r.clone())
            .ok_or_else(|| TransportError::Failed {
                url: req.url.clone(),
                reason: "no route".into(),
            })
    }
}
