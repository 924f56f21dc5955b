use std::collections::BTreeSet;
use std::sync::Arc;

use super::segment::segment_sentences;
use super::{Document, RelevanceScorer, RetrieverConfig};

pub const SENTENCES_PER_CHUNK: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub doc: Arc<Document>,
    /// Index of the first sentence in the document's sentence sequence.
    pub sentence_start: usize,
    pub sentences: Vec<String>,
    pub text: String,
    pub score: f64,
}

/// Lowercased alphanumeric tokens of `text` that are not stopwords.
pub fn keywords(text: &str, stopwords: &BTreeSet<String>) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !stopwords.contains(t))
        .collect()
}

pub fn chunk_document(doc: &Arc<Document>) -> Vec<Chunk> {
    segment_sentences(&doc.text)
        .chunks(SENTENCES_PER_CHUNK)
        .enumerate()
        .map(|(i, group)| Chunk {
            doc: Arc::clone(doc),
            sentence_start: i * SENTENCES_PER_CHUNK,
            sentences: group.to_vec(),
            text: group.join(" "),
            score: 0.0,
        })
        .collect()
}

/// Keeps chunks sharing at least one keyword with `query`, in order. A query
/// with no keywords at all disables the filter.
pub fn filter_chunks(chunks: Vec<Chunk>, query: &str, cfg: &RetrieverConfig) -> Vec<Chunk> {
    let wanted = keywords(query, &cfg.stopwords);
    if wanted.is_empty() {
        return chunks;
    }
    chunks
        .into_iter()
        .filter(|c| {
            let have = keywords(&c.text, &cfg.stopwords);
            !wanted.is_disjoint(&have)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutcome {
    pub chunks: Vec<Chunk>,
    /// Set when the scorer failed and original order was kept.
    pub scorer_error: Option<String>,
}

/// Stable sort by score (descending), truncated to `top_k_chunks`.
pub fn rerank_detailed(
    mut chunks: Vec<Chunk>,
    query: &str,
    scorer: &dyn RelevanceScorer,
    cfg: &RetrieverConfig,
) -> RerankOutcome {
    if chunks.is_empty() {
        return RerankOutcome {
            chunks,
            scorer_error: None,
        };
    }
    let passages: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let scored = scorer.score(query, &passages);
    let scorer_error = match scored {
        Ok(scores) if scores.len() == chunks.len() => {
            for (c, s) in chunks.iter_mut().zip(scores) {
                c.score = if s.is_nan() { f64::NEG_INFINITY } else { s };
            }
            // sort_by is stable, so equal scores keep input order
            chunks.sort_by(|a, b| b.score.total_cmp(&a.score));
            None
        }
        Ok(scores) => Some(format!(
            "scorer returned {} scores for {} passages",
            scores.len(),
            chunks.len()
        )),
        Err(e) => Some(e.to_string()),
    };
    if scorer_error.is_some() {
        for c in &mut chunks {
            c.score = 0.0;
        }
    }
    chunks.truncate(cfg.top_k_chunks);
    RerankOutcome {
        chunks,
        scorer_error,
    }
}

pub fn rerank(
    chunks: Vec<Chunk>,
    query: &str,
    scorer: &dyn RelevanceScorer,
    cfg: &RetrieverConfig,
) -> Vec<Chunk> {
    rerank_detailed(chunks, query, scorer, cfg).chunks
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOutcome {
    pub chunks: Vec<Chunk>,
    /// Total chunks before filtering.
    pub chunked: usize,
    /// Chunks surviving the keyword filter.
    pub filtered: usize,
    pub filter_disabled: bool,
    pub scorer_error: Option<String>,
}

pub fn process_detailed(
    documents: &[Document],
    query: &str,
    scorer: &dyn RelevanceScorer,
    cfg: &RetrieverConfig,
) -> ProcessOutcome {
    let chunks: Vec<Chunk> = documents
        .iter()
        .flat_map(|d| chunk_document(&Arc::new(d.clone())))
        .collect();
    let chunked = chunks.len();
    let filter_disabled = keywords(query, &cfg.stopwords).is_empty();
    let kept = filter_chunks(chunks, query, cfg);
    let filtered = kept.len();
    let ranked = rerank_detailed(kept, query, scorer, cfg);
    ProcessOutcome {
        chunks: ranked.chunks,
        chunked,
        filtered,
        filter_disabled,
        scorer_error: ranked.scorer_error,
    }
}

pub fn process(
    documents: &[Document],
    query: &str,
    scorer: &dyn RelevanceScorer,
    cfg: &RetrieverConfig,
) -> Vec<Chunk> {
    process_detailed(documents, query, scorer, cfg).chunks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{LexicalScorer, ScorerError, ToolKind};
    use proptest::prelude::*;

    fn doc(text: &str) -> Arc<Document> {
        Arc::new(Document {
            source_id: "d".into(),
            title: "t".into(),
            text: text.into(),
            tool: ToolKind::Basic,
        })
    }

    fn chunk(text: &str) -> Chunk {
        Chunk {
            doc: doc(text),
            sentence_start: 0,
            sentences: vec![text.to_string()],
            text: text.to_string(),
            score: 0.0,
        }
    }

    struct Fixed(Vec<f64>);
    impl RelevanceScorer for Fixed {
        fn score(&self, _: &str, p: &[&str]) -> Result<Vec<f64>, ScorerError> {
            Ok(self.0.iter().copied().take(p.len()).collect())
        }
    }

    struct Broken;
    impl RelevanceScorer for Broken {
        fn score(&self, _: &str, _: &[&str]) -> Result<Vec<f64>, ScorerError> {
            Err(ScorerError::Failed("down".into()))
        }
    }

    #[test]
    fn chunk_sizes() {
        let seven = "S1 one. S2 two. S3 three. S4 four. S5 five. S6 six. S7 seven.";
        let sizes: Vec<usize> = chunk_document(&doc(seven)).iter().map(|c| c.sentences.len()).collect();
        assert_eq!(sizes, vec![3, 3, 1]);
        assert!(chunk_document(&doc("")).is_empty());
        let three = "One here. Two here. Three here.";
        let cs = chunk_document(&doc(three));
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].text, three);
    }

    #[test]
    fn filter_drops_chunks_without_query_keywords() {
        let cfg = RetrieverConfig::default();
        let c = chunk("Love Scout is a 2025 South Korean romance drama.");
        let d = chunk("It stars Han Ji-min and Lee Jun-hyuk.");
        // "love"/"scout" overlap for c, nothing overlaps for d
        let kept = filter_chunks(vec![c.clone(), d], "Love Scout genre", &cfg);
        assert_eq!(kept, vec![c]);

        let e = chunk("it is a 2025 South Korean romance drama");
        assert!(filter_chunks(vec![e], "Love Scout genre", &cfg).is_empty());

        let g = chunk("Genre, Adventure, fantasy");
        assert_eq!(filter_chunks(vec![g.clone()], "genre", &cfg), vec![g]);
    }

    #[test]
    fn stopword_only_query_disables_filter() {
        let cfg = RetrieverConfig::default();
        let chunks = vec![chunk("x"), chunk("y")];
        assert_eq!(filter_chunks(chunks.clone(), "the of a", &cfg), chunks);
    }

    #[test]
    fn rerank_sorts_descending() {
        let cfg = RetrieverConfig::default();
        let input = vec![chunk("first"), chunk("second"), chunk("third")];
        let out = rerank(input, "q", &Fixed(vec![0.1, 0.9, 0.5]), &cfg);
        let texts: Vec<&str> = out.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["second", "third", "first"]);
        assert_eq!(out[0].score, 0.9);
    }

    #[test]
    fn rerank_is_stable_and_truncates() {
        let cfg = RetrieverConfig::default();
        let input: Vec<Chunk> = (0..20).map(|i| chunk(&format!("c{i}"))).collect();
        let out = rerank(input.clone(), "q", &Fixed(vec![1.0; 20]), &cfg);
        assert_eq!(out.len(), 8);
        let texts: Vec<String> = out.iter().map(|c| c.text.clone()).collect();
        let expected: Vec<String> = (0..8).map(|i| format!("c{i}")).collect();
        assert_eq!(texts, expected);
    }

    #[test]
    fn scorer_failure_keeps_order_with_zero_scores() {
        let cfg = RetrieverConfig::default();
        let input = vec![chunk("a"), chunk("b")];
        let out = rerank_detailed(input.clone(), "q", &Broken, &cfg);
        assert!(out.scorer_error.is_some());
        assert_eq!(out.chunks, input);
    }

    #[test]
    fn process_on_nothing() {
        let cfg = RetrieverConfig::default();
        assert!(process(&[], "q", &LexicalScorer::default(), &cfg).is_empty());
        let d = Document {
            source_id: "x".into(),
            title: "x".into(),
            text: "Nothing relevant here. Still nothing.".into(),
            tool: ToolKind::Basic,
        };
        assert!(process(&[d], "Love Scout genre", &LexicalScorer::default(), &cfg).is_empty());
    }

    fn sentence() -> impl Strategy<Value = String> {
        (
            prop::sample::select(vec!["Alpha", "Beta", "Gamma", "Delta", "Love", "Scout"]),
            proptest::collection::vec(
                prop::sample::select(vec!["genre", "drama", "the", "cast", "of", "series", "x"]),
                0..6,
            ),
            prop::sample::select(vec![".", "!", "?"]),
        )
            .prop_map(|(first, rest, end)| {
                let mut s = first.to_string();
                for w in rest {
                    s.push(' ');
                    s.push_str(w);
                }
                s.push_str(end);
                s
            })
    }

    fn document() -> impl Strategy<Value = Document> {
        proptest::collection::vec(sentence(), 0..12).prop_map(|ss| Document {
            source_id: "gen".into(),
            title: "gen".into(),
            text: ss.join(" "),
            tool: ToolKind::Basic,
        })
    }

    fn is_subsequence(sub: &[Chunk], full: &[Chunk]) -> bool {
        let mut it = full.iter();
        sub.iter().all(|s| it.any(|f| f.text == s.text && f.sentence_start == s.sentence_start && f.doc == s.doc))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn chunks_tile_the_sentence_sequence(d in document()) {
            let d = Arc::new(d);
            let chunks = chunk_document(&d);
            let rejoined: Vec<String> = chunks.iter().flat_map(|c| c.sentences.clone()).collect();
            prop_assert_eq!(rejoined, segment_sentences(&d.text));
            for (i, c) in chunks.iter().enumerate() {
                prop_assert!((1..=3).contains(&c.sentences.len()));
                if i + 1 < chunks.len() {
                    prop_assert_eq!(c.sentences.len(), 3);
                }
                prop_assert_eq!(c.sentence_start, i * 3);
            }
        }

        #[test]
        fn filter_is_subsequence_and_rerank_is_permutation_prefix(
            docs in proptest::collection::vec(document(), 0..4),
            query in proptest::collection::vec(prop::sample::select(vec!["genre", "the", "drama", "Scout", "zzz"]), 0..4),
        ) {
            let cfg = RetrieverConfig { top_k_chunks: 4, ..RetrieverConfig::default() };
            let query = query.join(" ");
            let all: Vec<Chunk> = docs.iter().flat_map(|d| chunk_document(&Arc::new(d.clone()))).collect();
            let kept = filter_chunks(all.clone(), &query, &cfg);
            prop_assert!(is_subsequence(&kept, &all));

            let ranked = rerank(kept.clone(), &query, &LexicalScorer::new(cfg.stopwords.clone()), &cfg);
            prop_assert!(ranked.len() <= cfg.top_k_chunks.min(kept.len()));
            // every ranked chunk comes from the filtered input, each at most once
            let mut used = vec![false; kept.len()];
            for r in &ranked {
                let pos = kept.iter().enumerate().position(|(i, k)| !used[i] && k.text == r.text && k.sentence_start == r.sentence_start && k.doc == r.doc);
                prop_assert!(pos.is_some());
                used[pos.unwrap()] = true;
            }
            for w in ranked.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }

            // composition law
            let composed = process(&docs, &query, &LexicalScorer::new(cfg.stopwords.clone()), &cfg);
            prop_assert_eq!(&composed, &ranked);
            let again = process(&docs, &query, &LexicalScorer::new(cfg.stopwords.clone()), &cfg);
            prop_assert_eq!(composed, again);
        }
    }
}
