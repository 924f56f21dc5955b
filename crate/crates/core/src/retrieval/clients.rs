//! Retriever backends: two HTTP clients (routed through the replay cache)
//! and two offline ones used for fixtures and synthetic benchmarks.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use url::Url;

use super::pipeline::keywords;
use super::{Document, RetrievalError, Retriever, ToolKind, DEFAULT_STOPWORDS};
use crate::cache::{CacheKind, HttpRequest, ReplayCache};

fn failed(e: impl std::fmt::Display) -> RetrievalError {
    RetrievalError::Failed(e.to_string())
}

fn bad(e: impl std::fmt::Display) -> RetrievalError {
    RetrievalError::BadResponse(e.to_string())
}

/// MediaWiki search + plain-text extracts. `endpoint` is the `api.php` URL,
/// e.g. `https://en.wikipedia.org/w/api.php`.
pub struct WikipediaRetriever {
    endpoint: String,
    cache: Arc<ReplayCache>,
}

impl WikipediaRetriever {
    pub fn new(endpoint: impl Into<String>, cache: Arc<ReplayCache>) -> Self {
        Self {
            endpoint: endpoint.into(),
            cache,
        }
    }

    pub fn search_url(&self, query: &str, limit: usize) -> Result<String, RetrievalError> {
        Url::parse_with_params(
            &self.endpoint,
            &[
                ("action", "query"),
                ("list", "search"),
                ("srsearch", query),
                ("srlimit", &limit.to_string()),
                ("format", "json"),
                ("formatversion", "2"),
            ],
        )
        .map(String::from)
        .map_err(failed)
    }

    pub fn extract_url(&self, pageid: u64) -> Result<String, RetrievalError> {
        Url::parse_with_params(
            &self.endpoint,
            &[
                ("action", "query"),
                ("prop", "extracts"),
                ("explaintext", "1"),
                ("pageids", &pageid.to_string()),
                ("format", "json"),
                ("formatversion", "2"),
            ],
        )
        .map(String::from)
        .map_err(failed)
    }

    fn get(&self, canonical: Value, url: String) -> Result<Value, RetrievalError> {
        let body = self
            .cache
            .fetch(CacheKind::BasicSearch, &canonical, &HttpRequest::get(url))
            .map_err(failed)?;
        serde_json::from_str(&body).map_err(bad)
    }
}

impl Retriever for WikipediaRetriever {
    fn retrieve(&self, query: &str, max_documents: usize) -> Result<Vec<Document>, RetrievalError> {
        let hits = self.get(
            json!({"endpoint": self.endpoint, "op": "search", "query": query, "limit": max_documents}),
            self.search_url(query, max_documents)?,
        )?;
        let results = hits
            .pointer("/query/search")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        let mut docs = Vec::new();
        for hit in results.iter().take(max_documents) {
            let pageid = hit["pageid"].as_u64().ok_or_else(|| bad("search hit without pageid"))?;
            let title = hit["title"].as_str().unwrap_or_default().to_string();
            let page = self.get(
                json!({"endpoint": self.endpoint, "op": "extract", "pageid": pageid}),
                self.extract_url(pageid)?,
            )?;
            let text = page
                .pointer("/query/pages/0/extract")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            docs.push(Document {
                source_id: format!("wikipedia:{pageid}"),
                title,
                text,
                tool: ToolKind::Basic,
            });
        }
        Ok(docs)
    }
}

/// Web search through a Custom-Search-style JSON API
/// (`?key=..&cx=..&q=..&num=..` → `{"items": [{title, link, snippet}]}`).
/// The API key is sent on the wire but never enters the cache key.
pub struct WebSearchRetriever {
    endpoint: String,
    engine_id: String,
    api_key: String,
    cache: Arc<ReplayCache>,
}

impl WebSearchRetriever {
    pub fn new(
        endpoint: impl Into<String>,
        engine_id: impl Into<String>,
        api_key: impl Into<String>,
        cache: Arc<ReplayCache>,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            engine_id: engine_id.into(),
            api_key: api_key.into(),
            cache,
        }
    }

    pub fn request_url(&self, query: &str, num: usize) -> Result<String, RetrievalError> {
        Url::parse_with_params(
            &self.endpoint,
            &[
                ("key", self.api_key.as_str()),
                ("cx", &self.engine_id),
                ("q", query),
                ("num", &num.clamp(1, 10).to_string()),
            ],
        )
        .map(String::from)
        .map_err(failed)
    }
}

impl Retriever for WebSearchRetriever {
    fn retrieve(&self, query: &str, max_documents: usize) -> Result<Vec<Document>, RetrievalError> {
        let canonical = json!({
            "endpoint": self.endpoint,
            "cx": self.engine_id,
            "q": query,
            "num": max_documents.clamp(1, 10),
        });
        let body = self
            .cache
            .fetch(
                CacheKind::AdvancedSearch,
                &canonical,
                &HttpRequest::get(self.request_url(query, max_documents)?),
            )
            .map_err(failed)?;
        let parsed: Value = serde_json::from_str(&body).map_err(bad)?;
        let items = parsed["items"].as_array().cloned().unwrap_or_default();
        Ok(items
            .iter()
            .take(max_documents)
            .map(|item| {
                let title = item["title"].as_str().unwrap_or_default().to_string();
                let snippet = item["snippet"].as_str().unwrap_or_default();
                Document {
                    source_id: item["link"].as_str().unwrap_or_default().to_string(),
                    title,
                    text: snippet.replace('\n', " "),
                    tool: ToolKind::Advanced,
                }
            })
            .collect())
    }
}

/// A document in an offline fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureDocument {
    pub source_id: String,
    pub title: String,
    pub text: String,
}

impl FixtureDocument {
    fn into_document(self, tool: ToolKind) -> Document {
        Document {
            source_id: self.source_id,
            title: self.title,
            text: self.text,
            tool,
        }
    }
}

/// One recorded `(tool, query) → documents` exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedSearch {
    /// `None` applies to both tools.
    #[serde(default)]
    pub tool: Option<ToolKind>,
    pub query: String,
    pub documents: Vec<FixtureDocument>,
}

/// Answers from recorded exchanges; unknown queries return no documents.
#[derive(Debug, Clone, Default)]
pub struct RecordedRetriever {
    tool: Option<ToolKind>,
    by_query: HashMap<String, Vec<FixtureDocument>>,
}

impl RecordedRetriever {
    pub fn new(tool: ToolKind, records: impl IntoIterator<Item = RecordedSearch>) -> Self {
        let mut by_query = HashMap::new();
        for r in records {
            if r.tool.map_or(true, |t| t == tool) {
                by_query
                    .entry(r.query.trim().to_string())
                    .or_insert(r.documents);
            }
        }
        Self {
            tool: Some(tool),
            by_query,
        }
    }

    pub fn from_path(tool: ToolKind, path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
        let records: Vec<RecordedSearch> = serde_json::from_str(&text).map_err(bad)?;
        Ok(Self::new(tool, records))
    }
}

impl Retriever for RecordedRetriever {
    fn retrieve(&self, query: &str, max_documents: usize) -> Result<Vec<Document>, RetrievalError> {
        let tool = self.tool.unwrap_or(ToolKind::Basic);
        Ok(self
            .by_query
            .get(query.trim())
            .map(|docs| {
                docs.iter()
                    .take(max_documents)
                    .cloned()
                    .map(|d| d.into_document(tool))
                    .collect()
            })
            .unwrap_or_default())
    }
}

/// Keyword search over an in-memory document collection. Documents are
/// ranked by the number of distinct query keywords they contain (title
/// matches count twice); ties keep corpus order. Documents with no match
/// are never returned.
#[derive(Debug, Clone)]
pub struct CorpusRetriever {
    tool: ToolKind,
    docs: Vec<(FixtureDocument, BTreeSet<String>, BTreeSet<String>)>,
    stopwords: BTreeSet<String>,
}

impl CorpusRetriever {
    pub fn new(tool: ToolKind, docs: impl IntoIterator<Item = FixtureDocument>) -> Self {
        let stopwords: BTreeSet<String> = DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect();
        let docs = docs
            .into_iter()
            .map(|d| {
                let title = keywords(&d.title, &stopwords);
                let body = keywords(&d.text, &stopwords);
                (d, title, body)
            })
            .collect();
        Self {
            tool,
            docs,
            stopwords,
        }
    }

    /// Reads a JSON array, or JSON lines, of [`FixtureDocument`]s.
    pub fn from_path(tool: ToolKind, path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|e| failed(format!("{}: {e}", path.display())))?;
        let docs: Vec<FixtureDocument> = if text.trim_start().starts_with('[') {
            serde_json::from_str(&text).map_err(bad)?
        } else {
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str)
                .collect::<Result<_, _>>()
                .map_err(bad)?
        };
        Ok(Self::new(tool, docs))
    }
}

impl Retriever for CorpusRetriever {
    fn retrieve(&self, query: &str, max_documents: usize) -> Result<Vec<Document>, RetrievalError> {
        let q = keywords(query, &self.stopwords);
        let mut scored: Vec<(usize, usize)> = self
            .docs
            .iter()
            .enumerate()
            .map(|(i, (_, title, body))| {
                let s = 2 * q.intersection(title).count() + q.intersection(body).count();
                (i, s)
            })
            .filter(|&(_, s)| s > 0)
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1));
        Ok(scored
            .into_iter()
            .take(max_documents)
            .map(|(i, _)| self.docs[i].0.clone().into_document(self.tool))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{CacheMode, OfflineTransport, StaticTransport};

    #[test]
    fn wikipedia_client_parses_search_and_extracts() {
        let fake = Arc::new(StaticTransport::new());
        let cache = Arc::new(ReplayCache::disabled(fake.clone()));
        let wiki = WikipediaRetriever::new("https://wiki.test/w/api.php", cache);
        fake.route(
            &wiki.search_url("Love Scout genre", 5).unwrap(),
            r#"{"query":{"search":[{"pageid":77,"title":"Love Scout"}]}}"#,
        );
        fake.route(
            &wiki.extract_url(77).unwrap(),
            r#"{"query":{"pages":[{"pageid":77,"title":"Love Scout","extract":"Love Scout is a 2025 South Korean television series."}]}}"#,
        );
        let docs = wiki.retrieve("Love Scout genre", 5).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].source_id, "wikipedia:77");
        assert!(docs[0].text.starts_with("Love Scout is a 2025"));
    }

    #[test]
    fn wikipedia_empty_result_is_not_an_error() {
        let fake = Arc::new(StaticTransport::new());
        let cache = Arc::new(ReplayCache::disabled(fake.clone()));
        let wiki = WikipediaRetriever::new("https://wiki.test/w/api.php", cache);
        fake.route(&wiki.search_url("nothing", 5).unwrap(), r#"{"query":{"search":[]}}"#);
        assert!(wiki.retrieve("nothing", 5).unwrap().is_empty());
    }

    #[test]
    fn web_search_key_stays_out_of_cache() {
        let dir = tempfile::tempdir().unwrap();
        let fake = Arc::new(StaticTransport::new());
        let cache = Arc::new(ReplayCache::new(dir.path(), CacheMode::ReadWrite, fake.clone()));
        let web = WebSearchRetriever::new("https://search.test/v1", "cx1", "SECRET", cache);
        fake.route(
            &web.request_url("Us cast", 5).unwrap(),
            r#"{"items":[{"title":"Us (TV series)","link":"https://x/us","snippet":"Us: With Emi Thasorn Klinnium"}]}"#,
        );
        let docs = web.retrieve("Us cast", 5).unwrap();
        assert_eq!(docs[0].tool, ToolKind::Advanced);
        for entry in walk(dir.path()) {
            assert!(!std::fs::read_to_string(entry).unwrap().contains("SECRET"));
        }
        // a different key replays from the same cache entry
        let replay = Arc::new(ReplayCache::new(dir.path(), CacheMode::ReplayOnly, Arc::new(OfflineTransport)));
        let other = WebSearchRetriever::new("https://search.test/v1", "cx1", "OTHER", replay);
        assert_eq!(other.retrieve("Us cast", 5).unwrap(), docs);
    }

    fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn recorded_retriever_matches_exact_query_per_tool() {
        let recs = vec![
            RecordedSearch {
                tool: Some(ToolKind::Basic),
                query: "q".into(),
                documents: vec![FixtureDocument {
                    source_id: "1".into(),
                    title: "one".into(),
                    text: "basic text".into(),
                }],
            },
            RecordedSearch {
                tool: None,
                query: "shared".into(),
                documents: vec![],
            },
        ];
        let basic = RecordedRetriever::new(ToolKind::Basic, recs.clone());
        let adv = RecordedRetriever::new(ToolKind::Advanced, recs);
        assert_eq!(basic.retrieve(" q ", 5).unwrap().len(), 1);
        assert!(adv.retrieve("q", 5).unwrap().is_empty());
    }

    #[test]
    fn corpus_retriever_ranks_by_keyword_overlap() {
        let docs = vec![
            FixtureDocument { source_id: "a".into(), title: "Other".into(), text: "genre facts".into() },
            FixtureDocument { source_id: "b".into(), title: "Love Scout".into(), text: "genre".into() },
            FixtureDocument { source_id: "c".into(), title: "Nothing".into(), text: "zzz".into() },
        ];
        let r = CorpusRetriever::new(ToolKind::Basic, docs);
        let got: Vec<String> = r.retrieve("Love Scout genre", 5).unwrap().into_iter().map(|d| d.source_id).collect();
        assert_eq!(got, vec!["b", "a"]);
    }
}
