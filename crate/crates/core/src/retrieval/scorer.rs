use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::Deserialize;
use serde_json::json;

use super::pipeline::keywords;
use super::DEFAULT_STOPWORDS;
use crate::cache::{CacheKind, HttpRequest, ReplayCache};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ScorerError {
    #[error("scorer failed: {0}")]
    Failed(String),
}

/// `score(query, passages)` returns one relevance value per passage, same
/// order. Higher is more relevant.
pub trait RelevanceScorer: Send + Sync {
    fn score(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>, ScorerError>;
}

/// Offline default: for each query keyword present in the passage, add
/// `ln(1 + tf)` where `tf` is its count in the passage. Each passage is
/// scored on its own, so adding unrelated passages never reorders others.
#[derive(Debug, Clone)]
pub struct LexicalScorer {
    stopwords: BTreeSet<String>,
}

impl LexicalScorer {
    pub fn new(stopwords: BTreeSet<String>) -> Self {
        Self { stopwords }
    }

    pub fn score_one(&self, query_keywords: &BTreeSet<String>, passage: &str) -> f64 {
        let mut tf: HashMap<String, usize> = HashMap::new();
        for tok in passage
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let tok = tok.to_lowercase();
            if query_keywords.contains(&tok) {
                *tf.entry(tok).or_default() += 1;
            }
        }
        // sum in keyword order so the float result is reproducible
        query_keywords
            .iter()
            .filter_map(|k| tf.get(k))
            .map(|&n| (1.0 + n as f64).ln())
            .sum()
    }
}

impl Default for LexicalScorer {
    fn default() -> Self {
        Self::new(DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect())
    }
}

impl RelevanceScorer for LexicalScorer {
    fn score(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>, ScorerError> {
        let q = keywords(query, &self.stopwords);
        Ok(passages.iter().map(|p| self.score_one(&q, p)).collect())
    }
}

/// Client for a hosted cross-encoder speaking
/// `POST {"query": .., "passages": [..]}` → `{"scores": [..]}`.
pub struct RemoteScorer {
    url: String,
    cache: Arc<ReplayCache>,
}

impl RemoteScorer {
    pub fn new(url: impl Into<String>, cache: Arc<ReplayCache>) -> Self {
        Self {
            url: url.into(),
            cache,
        }
    }
}

#[derive(Deserialize)]
struct ScoresBody {
    scores: Vec<f64>,
}

impl RelevanceScorer for RemoteScorer {
    fn score(&self, query: &str, passages: &[&str]) -> Result<Vec<f64>, ScorerError> {
        let body = json!({ "query": query, "passages": passages });
        let canonical = json!({ "url": self.url, "body": body });
        let raw = self
            .cache
            .fetch(CacheKind::Scorer, &canonical, &HttpRequest::post_json(&self.url, &body))
            .map_err(|e| ScorerError::Failed(e.to_string()))?;
        let parsed: ScoresBody =
            serde_json::from_str(&raw).map_err(|e| ScorerError::Failed(e.to_string()))?;
        if parsed.scores.len() != passages.len() {
            return Err(ScorerError::Failed(format!(
                "expected {} scores, got {}",
                passages.len(),
                parsed.scores.len()
            )));
        }
        Ok(parsed.scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::StaticTransport;
    use proptest::prelude::*;

    #[test]
    fn lexical_score_by_hand() {
        let s = LexicalScorer::default();
        let got = s
            .score("Love Scout genre", &["genre genre drama", "love scout", "nothing"])
            .unwrap();
        let want = [(3f64).ln(), 2.0 * (2f64).ln(), 0.0];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn remote_scorer_round_trip_and_length_check() {
        let fake = Arc::new(StaticTransport::new());
        fake.route("http://scorer/rank", r#"{"scores":[0.2,0.7]}"#);
        let cache = Arc::new(ReplayCache::disabled(fake.clone()));
        let s = RemoteScorer::new("http://scorer/rank", cache);
        assert_eq!(s.score("q", &["a", "b"]).unwrap(), vec![0.2, 0.7]);
        assert!(s.score("q", &["a"]).is_err());
    }

    proptest! {
        #[test]
        fn unrelated_passages_do_not_change_relative_order(
            base in proptest::collection::vec("[a-d ]{0,20}", 1..6),
            extra in proptest::collection::vec("[w-z ]{0,20}", 0..4),
        ) {
            let s = LexicalScorer::default();
            let refs: Vec<&str> = base.iter().map(String::as_str).collect();
            let alone = s.score("a b c", &refs).unwrap();
            let mut all = refs.clone();
            all.extend(extra.iter().map(String::as_str));
            let with = s.score("a b c", &all).unwrap();
            prop_assert_eq!(&with[..alone.len()], &alone[..]);
        }
    }
}
