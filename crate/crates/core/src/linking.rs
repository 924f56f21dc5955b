//! Maps free-text answer candidates onto catalog entity ids.
//!
//! Linking is a two-stage cascade: an exact match on the normalized surface,
//! then a token-set Jaccard match against each entity's best alias. Both
//! stages break ties toward the lexicographically smallest id so results do
//! not depend on catalog order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::kg::{Catalog, EntityId};

pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("cannot link an empty surface string")]
    EmptySurface,
}

/// NFKC, lowercase, punctuation to spaces, whitespace collapsed and trimmed.
pub fn normalize_surface(s: &str) -> String {
    let folded: String = s
        .nfkc()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn tokens(normalized: &str) -> BTreeSet<String> {
    normalized.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkMethod {
    Exact,
    Fuzzy,
    Unlinked,
}

impl LinkMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkMethod::Exact => "EXACT",
            LinkMethod::Fuzzy => "FUZZY",
            LinkMethod::Unlinked => "UNLINKED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    pub surface: String,
    pub entity: Option<EntityId>,
    pub method: LinkMethod,
    pub score: f64,
    /// Other ids sharing the exact alias; non-empty means a collision was
    /// resolved by id order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub collisions: Vec<EntityId>,
}

#[derive(Debug, Clone, Default)]
pub struct AliasIndex {
    exact: HashMap<String, Vec<EntityId>>,
    token_sets: HashMap<EntityId, Vec<BTreeSet<String>>>,
    postings: HashMap<String, Vec<EntityId>>,
    threshold: f64,
}

impl AliasIndex {
    pub fn build(catalog: &Catalog) -> Self {
        Self::with_threshold(catalog, DEFAULT_FUZZY_THRESHOLD)
    }

    pub fn with_threshold(catalog: &Catalog, threshold: f64) -> Self {
        let mut exact: HashMap<String, Vec<EntityId>> = HashMap::new();
        let mut token_sets: HashMap<EntityId, Vec<BTreeSet<String>>> = HashMap::new();
        let mut postings: HashMap<String, BTreeSet<EntityId>> = HashMap::new();
        for record in catalog.iter() {
            for alias in &record.aliases {
                let norm = normalize_surface(alias);
                if norm.is_empty() {
                    continue;
                }
                let ids = exact.entry(norm.clone()).or_default();
                if !ids.contains(&record.id) {
                    ids.push(record.id.clone());
                }
                let toks = tokens(&norm);
                for tok in &toks {
                    postings.entry(tok.clone()).or_default().insert(record.id.clone());
                }
                token_sets.entry(record.id.clone()).or_default().push(toks);
            }
        }
        for ids in exact.values_mut() {
            ids.sort();
        }
        Self {
            exact,
            token_sets,
            postings: postings
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect(),
            threshold,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Ids whose aliases normalize to `normalized`, sorted ascending.
    pub fn exact(&self, normalized: &str) -> &[EntityId] {
        self.exact.get(normalized).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn link_one(&self, surface: &str) -> Result<LinkResult, LinkError> {
        if surface.trim().is_empty() {
            return Err(LinkError::EmptySurface);
        }
        let norm = normalize_surface(surface);
        if let Some(ids) = self.exact.get(&norm) {
            return Ok(LinkResult {
                surface: surface.to_string(),
                entity: Some(ids[0].clone()),
                method: LinkMethod::Exact,
                score: 1.0,
                collisions: ids[1..].to_vec(),
            });
        }
        let query = tokens(&norm);
        let mut candidates: BTreeSet<&EntityId> = BTreeSet::new();
        for tok in &query {
            if let Some(ids) = self.postings.get(tok) {
                candidates.extend(ids.iter());
            }
        }
        // BTreeSet iteration is id-ascending, so strict `>` keeps the
        // smallest id among equal scores.
        let mut best: Option<(&EntityId, f64)> = None;
        for id in candidates {
            let score = self.token_sets[id]
                .iter()
                .map(|alias| jaccard(&query, alias))
                .fold(0.0, f64::max);
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((id, score));
            }
        }
        Ok(match best {
            Some((id, score)) if score >= self.threshold && score > 0.0 => LinkResult {
                surface: surface.to_string(),
                entity: Some(id.clone()),
                method: LinkMethod::Fuzzy,
                score,
                collisions: Vec::new(),
            },
            _ => LinkResult {
                surface: surface.to_string(),
                entity: None,
                method: LinkMethod::Unlinked,
                score: 0.0,
                collisions: Vec::new(),
            },
        })
    }

    /// Links every candidate in order, returning the per-surface results and
    /// the de-duplicated ranked id list.
    pub fn link_ranked_detailed<S: AsRef<str>>(
        &self,
        candidates: &[S],
    ) -> (Vec<LinkResult>, Vec<EntityId>) {
        let mut results = Vec::with_capacity(candidates.len());
        let mut seen = HashSet::new();
        let mut ranked = Vec::new();
        for c in candidates {
            let Ok(res) = self.link_one(c.as_ref()) else {
                continue;
            };
            if let Some(id) = &res.entity {
                if seen.insert(id.clone()) {
                    ranked.push(id.clone());
                }
            }
            results.push(res);
        }
        (results, ranked)
    }

    pub fn link_ranked<S: AsRef<str>>(&self, candidates: &[S]) -> Vec<EntityId> {
        self.link_ranked_detailed(candidates).1
    }
}

/// One audit line: `surface<TAB>entity_or_dash<TAB>method<TAB>score`.
pub fn write_audit_line<W: Write>(mut out: W, r: &LinkResult) -> std::io::Result<()> {
    writeln!(
        out,
        "{}\t{}\t{}\t{:.4}",
        r.surface.replace(['\t', '\n'], " "),
        r.entity.as_ref().map_or("-", |e| e.as_str()),
        r.method.as_str(),
        r.score
    )
}
