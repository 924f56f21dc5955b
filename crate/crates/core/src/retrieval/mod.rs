//! Retriever tools and the post-processing pipeline applied to what they
//! return.
//!
//! The agent has two tools: a *basic* retriever (an encyclopedia-style
//! document search) and an *advanced* retriever (general web search). Raw
//! documents from either go through the same three stages before the agent
//! sees them:
//!
//! 1. [`chunk_document`] splits each document into consecutive 3-sentence
//!    chunks,
//! 2. [`filter_chunks`] drops chunks that share no keyword with the query,
//! 3. [`rerank`] orders the survivors with a [`RelevanceScorer`] and keeps
//!    the top `top_k_chunks`.
//!
//! [`process`] is exactly the composition of the three.

mod clients;
mod pipeline;
mod scorer;
mod segment;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use clients::{
    CorpusRetriever, FixtureDocument, RecordedRetriever, RecordedSearch, WebSearchRetriever,
    WikipediaRetriever,
};
pub use pipeline::{
    chunk_document, filter_chunks, keywords, process, process_detailed, rerank, rerank_detailed,
    Chunk, ProcessOutcome, RerankOutcome,
};
pub use scorer::{LexicalScorer, RelevanceScorer, RemoteScorer, ScorerError};
pub use segment::{segment_sentences, sentence_spans, ABBREVIATIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Basic,
    Advanced,
}

impl ToolKind {
    /// Function name advertised to the LLM.
    pub fn tool_name(self) -> &'static str {
        match self {
            ToolKind::Basic => "search_tool_basic",
            ToolKind::Advanced => "search_tool_advanced",
        }
    }

    pub fn from_tool_name(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "search_tool_basic" | "basic_search_tool" | "basic" => Some(ToolKind::Basic),
            "search_tool_advanced" | "advanced_search_tool" | "advanced" => {
                Some(ToolKind::Advanced)
            }
            _ => None,
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToolKind::Basic => "basic",
            ToolKind::Advanced => "advanced",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub source_id: String,
    pub title: String,
    pub text: String,
    pub tool: ToolKind,
}

/// How evidence from successive tool calls is combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accumulation {
    /// Re-rank each call's chunks on their own; the agent sees that call's
    /// top chunks.
    #[default]
    PerIteration,
    /// Re-rank every surviving chunk seen so far against the latest query.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    pub top_k_chunks: usize,
    pub stopwords: BTreeSet<String>,
    pub max_documents_per_call: usize,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub accumulation: Accumulation,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs(u64::deserialize(d)?))
    }
}

/// Default English stopword list used for keyword filtering.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "s", "same", "she",
    "should", "so", "some", "such", "t", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            top_k_chunks: 8,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            max_documents_per_call: 5,
            timeout: Duration::from_secs(30),
            accumulation: Accumulation::PerIteration,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("search query must be non-empty")]
    EmptyQuery,
    #[error("retriever failed: {0}")]
    Failed(String),
    #[error("malformed response: {0}")]
    BadResponse(String),
}

/// One retriever backend. Implementations must be safe to call from many
/// evaluation workers at once.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, max_documents: usize) -> Result<Vec<Document>, RetrievalError>;
}

/// The agent's two tools.
#[derive(Clone)]
pub struct Toolbox {
    pub basic: Arc<dyn Retriever>,
    pub advanced: Arc<dyn Retriever>,
}

impl Toolbox {
    pub fn new(basic: Arc<dyn Retriever>, advanced: Arc<dyn Retriever>) -> Self {
        Self { basic, advanced }
    }

    pub fn get(&self, tool: ToolKind) -> &dyn Retriever {
        match tool {
            ToolKind::Basic => self.basic.as_ref(),
            ToolKind::Advanced => self.advanced.as_ref(),
        }
    }

    /// Runs one tool call: validates the query, caps the result count and
    /// tags every document with the tool that produced it. An empty result
    /// set is not an error.
    pub fn search(
        &self,
        tool: ToolKind,
        query: &str,
        cfg: &RetrieverConfig,
    ) -> Result<Vec<Document>, RetrievalError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        let mut docs = self.get(tool).retrieve(query, cfg.max_documents_per_call)?;
        docs.truncate(cfg.max_documents_per_call);
        for d in &mut docs {
            d.tool = tool;
        }
        Ok(docs)
    }
}

impl fmt::Debug for Toolbox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Toolbox")
    }
}
