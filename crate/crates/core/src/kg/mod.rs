//! Knowledge-graph data model: identifiers, triples, entity catalogs and an
//! indexed in-memory graph.
//!
//! Everything here is immutable once built, so a [`KnowledgeGraph`] or a
//! [`Catalog`] can be shared behind an `Arc` by concurrent evaluation
//! workers. Iteration order is always first-seen ingestion order.

mod cardinality;
mod io;

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use cardinality::{compute_relation_cardinality, RelationCardinalityTable};
pub use io::{load_entity_catalog, load_triples, write_catalog, write_triples, IngestStats};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KgError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: duplicate entity id {id}")]
    DuplicateEntity { line: usize, id: String },
    #[error("invalid identifier {0:?}: must be non-empty and contain no tab or newline")]
    InvalidId(String),
    #[error("cannot compute relation cardinality of an empty graph")]
    EmptyGraph,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for KgError {
    fn from(e: std::io::Error) -> Self {
        KgError::Io(e.to_string())
    }
}

fn check_id(s: &str) -> Result<(), KgError> {
    if s.is_empty() || s.contains(['\t', '\n', '\r']) {
        Err(KgError::InvalidId(s.to_string()))
    } else {
        Ok(())
    }
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Result<Self, KgError> {
                let value = value.into();
                check_id(&value)?;
                Ok(Self(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = KgError;
            fn try_from(value: String) -> Result<Self, KgError> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

id_newtype!(
    /// Opaque entity identifier, e.g. a Wikidata Q-id or a Freebase MID.
    EntityId
);
id_newtype!(
    /// Opaque relation identifier.
    RelationId
);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }

    /// Convenience constructor for tests and examples; panics on invalid ids.
    pub fn parse(head: &str, relation: &str, tail: &str) -> Self {
        Self {
            head: EntityId::new(head).expect("valid head id"),
            relation: RelationId::new(relation).expect("valid relation id"),
            tail: EntityId::new(tail).expect("valid tail id"),
        }
    }

    pub fn mentions(&self, e: &EntityId) -> bool {
        &self.head == e || &self.tail == e
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// Catalog entry for one entity. `aliases[0]` is always the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    pub label: String,
    pub aliases: Vec<String>,
    pub description: Option<String>,
}

impl EntityRecord {
    pub fn new(
        id: EntityId,
        label: impl Into<String>,
        aliases: impl IntoIterator<Item = String>,
        description: Option<String>,
    ) -> Self {
        let label = label.into();
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for alias in std::iter::once(label.clone()).chain(aliases) {
            let alias = alias.trim().to_string();
            if alias.is_empty() {
                continue;
            }
            if seen.insert(crate::linking::normalize_surface(&alias)) {
                out.push(alias);
            }
        }
        if out.first() != Some(&label) {
            // label was blank after trimming; keep the invariant anyway
            out.insert(0, label.clone());
        }
        Self {
            id,
            label,
            aliases: out,
            description: description.filter(|d| !d.trim().is_empty()),
        }
    }
}

/// Entity catalog keyed by id, iterated in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    records: Vec<EntityRecord>,
    by_id: HashMap<EntityId, usize>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a record; returns `false` (and keeps the old one) when the id
    /// is already present.
    pub fn insert(&mut self, record: EntityRecord) -> bool {
        if self.by_id.contains_key(&record.id) {
            return false;
        }
        self.by_id.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        true
    }

    pub fn get(&self, id: &EntityId) -> Option<&EntityRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &EntityId) -> bool {
        self.by_id.contains_key(id)
    }

    /// Label for an id, falling back to the raw id.
    pub fn label_or_id<'a>(&'a self, id: &'a str) -> &'a str {
        EntityId::new(id)
            .ok()
            .and_then(|e| self.by_id.get(&e).map(|&i| self.records[i].label.as_str()))
            .unwrap_or(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EntityRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Predict the tail given (head, relation).
    Tail,
    /// Predict the head given (relation, tail).
    Head,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Tail => "tail",
            Direction::Head => "head",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub direction: Direction,
    pub known_entity: EntityId,
    pub relation: RelationId,
}

/// A query with its gold answer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalCase {
    pub id: String,
    pub query: Query,
    pub gold: EntityId,
}

impl EvalCase {
    /// Masks one side of `triple`. The id is `{index:05}-{direction}`.
    pub fn from_triple(index: usize, triple: &Triple, direction: Direction) -> Self {
        let (known, gold) = match direction {
            Direction::Tail => (triple.head.clone(), triple.tail.clone()),
            Direction::Head => (triple.tail.clone(), triple.head.clone()),
        };
        Self {
            id: format!("{index:05}-{direction}"),
            query: Query {
                direction,
                known_entity: known,
                relation: triple.relation.clone(),
            },
            gold,
        }
    }

    /// The full fact this case was built from.
    pub fn triple(&self) -> Triple {
        match self.query.direction {
            Direction::Tail => Triple::new(
                self.query.known_entity.clone(),
                self.query.relation.clone(),
                self.gold.clone(),
            ),
            Direction::Head => Triple::new(
                self.gold.clone(),
                self.query.relation.clone(),
                self.query.known_entity.clone(),
            ),
        }
    }
}

/// Indexed triple store. Index values are positions into `triples`.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    by_entity: HashMap<EntityId, Vec<usize>>,
    by_head: HashMap<EntityId, Vec<usize>>,
    by_head_relation: HashMap<(EntityId, RelationId), Vec<usize>>,
    by_relation: HashMap<RelationId, Vec<usize>>,
    by_tail_relation: HashMap<(EntityId, RelationId), Vec<usize>>,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut kg = Self::new();
        for t in triples {
            kg.insert(t);
        }
        kg
    }

    /// Adds a triple; returns `false` if it was already present.
    pub fn insert(&mut self, t: Triple) -> bool {
        if !self.seen.insert(t.clone()) {
            return false;
        }
        let i = self.triples.len();
        self.by_entity.entry(t.head.clone()).or_default().push(i);
        if t.tail != t.head {
            self.by_entity.entry(t.tail.clone()).or_default().push(i);
        }
        self.by_head.entry(t.head.clone()).or_default().push(i);
        self.by_head_relation
            .entry((t.head.clone(), t.relation.clone()))
            .or_default()
            .push(i);
        self.by_relation
            .entry(t.relation.clone())
            .or_default()
            .push(i);
        self.by_tail_relation
            .entry((t.tail.clone(), t.relation.clone()))
            .or_default()
            .push(i);
        self.triples.push(t);
        true
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.seen.contains(t)
    }

    fn resolve<'a>(&'a self, idx: Option<&'a Vec<usize>>) -> impl Iterator<Item = &'a Triple> {
        idx.into_iter().flatten().map(|&i| &self.triples[i])
    }

    pub fn by_head(&self, h: &EntityId) -> impl Iterator<Item = &Triple> {
        self.resolve(self.by_head.get(h))
    }

    pub fn by_head_relation(&self, h: &EntityId, r: &RelationId) -> impl Iterator<Item = &Triple> {
        self.resolve(self.by_head_relation.get(&(h.clone(), r.clone())))
    }

    pub fn by_relation(&self, r: &RelationId) -> impl Iterator<Item = &Triple> {
        self.resolve(self.by_relation.get(r))
    }

    pub fn by_tail_relation(&self, t: &EntityId, r: &RelationId) -> impl Iterator<Item = &Triple> {
        self.resolve(self.by_tail_relation.get(&(t.clone(), r.clone())))
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationId> {
        self.by_relation.keys()
    }

    pub(crate) fn head_relation_groups(&self) -> impl Iterator<Item = (&RelationId, usize)> {
        self.by_head_relation.iter().map(|((_, r), v)| (r, v.len()))
    }

    pub(crate) fn tail_relation_groups(&self) -> impl Iterator<Item = (&RelationId, usize)> {
        self.by_tail_relation.iter().map(|((_, r), v)| (r, v.len()))
    }

    /// Up to `limit` triples in which `e` is head or tail, first-seen order.
    /// Unknown entities (the emerging-entity case) yield an empty list.
    pub fn neighborhood(&self, e: &EntityId, limit: usize) -> Vec<Triple> {
        assert!(limit >= 1, "neighborhood limit must be positive");
        self.resolve(self.by_entity.get(e))
            .take(limit)
            .cloned()
            .collect()
    }

    /// Up to `k` triples with relation `r`, skipping anything in `exclude`.
    pub fn examples_for_relation(
        &self,
        r: &RelationId,
        k: usize,
        exclude: &HashSet<Triple>,
    ) -> Vec<Triple> {
        assert!(k >= 1, "example count must be positive");
        self.by_relation(r)
            .filter(|t| !exclude.contains(t))
            .take(k)
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, r: &str, tl: &str) -> Triple {
        Triple::parse(h, r, tl)
    }

    #[test]
    fn ids_reject_tabs_and_empty() {
        assert!(EntityId::new("").is_err());
        assert!(EntityId::new("a\tb").is_err());
        assert!(RelationId::new("x\ny").is_err());
        assert!(EntityId::new("Q42").is_ok());
    }

    #[test]
    fn neighborhood_of_unknown_entity_is_empty() {
        let kg = KnowledgeGraph::from_triples([t("A", "r", "B")]);
        assert!(kg
            .neighborhood(&EntityId::new("Z").unwrap(), 5)
            .is_empty());
    }

    #[test]
    fn neighborhood_includes_tail_side() {
        let kg = KnowledgeGraph::from_triples([t("A", "r", "B")]);
        assert_eq!(
            kg.neighborhood(&EntityId::new("B").unwrap(), 5),
            vec![t("A", "r", "B")]
        );
    }

    #[test]
    fn neighborhood_truncates_at_limit() {
        // 12 triples touching E: 7 as head, 5 as tail, interleaved with noise
        let mut triples = Vec::new();
        for i in 0..7 {
            triples.push(t("E", "r", &format!("T{i}")));
            triples.push(t("N", "r", &format!("X{i}")));
        }
        for i in 0..5 {
            triples.push(t(&format!("H{i}"), "s", "E"));
        }
        let kg = KnowledgeGraph::from_triples(triples.clone());
        let e = EntityId::new("E").unwrap();
        let got = kg.neighborhood(&e, 10);
        let expected: Vec<Triple> = triples
            .iter()
            .filter(|x| x.mentions(&e))
            .take(10)
            .cloned()
            .collect();
        assert_eq!(got.len(), 10);
        assert_eq!(got, expected);
        assert_eq!(kg.neighborhood(&e, 100).len(), 12);
    }

    #[test]
    fn self_loop_listed_once() {
        let kg = KnowledgeGraph::from_triples([t("A", "r", "A")]);
        assert_eq!(kg.neighborhood(&EntityId::new("A").unwrap(), 5).len(), 1);
    }

    #[test]
    fn relation_examples_respect_exclusion() {
        let kg = KnowledgeGraph::from_triples([t("A", "r", "B"), t("C", "r", "D")]);
        let r = RelationId::new("r").unwrap();
        let exclude: HashSet<_> = [t("A", "r", "B")].into_iter().collect();
        assert_eq!(
            kg.examples_for_relation(&r, 5, &exclude),
            vec![t("C", "r", "D")]
        );
        let unseen = RelationId::new("q").unwrap();
        assert!(kg.examples_for_relation(&unseen, 5, &HashSet::new()).is_empty());
    }

    #[test]
    fn relation_examples_take_first_k_in_ingestion_order() {
        let triples: Vec<_> = (0..7).map(|i| t(&format!("H{i}"), "r", "T")).collect();
        let mut all = triples.clone();
        all.insert(3, t("Z", "other", "T"));
        let kg = KnowledgeGraph::from_triples(all);
        let got = kg.examples_for_relation(&RelationId::new("r").unwrap(), 3, &HashSet::new());
        assert_eq!(got, triples[..3].to_vec());
    }

    #[test]
    fn every_triple_in_each_index_once() {
        let kg = KnowledgeGraph::from_triples([
            t("A", "r", "B"),
            t("A", "r", "C"),
            t("A", "s", "B"),
            t("A", "r", "B"),
        ]);
        assert_eq!(kg.len(), 3);
        let a = EntityId::new("A").unwrap();
        let r = RelationId::new("r").unwrap();
        assert_eq!(kg.by_head(&a).count(), 3);
        assert_eq!(kg.by_head_relation(&a, &r).count(), 2);
        assert_eq!(kg.by_relation(&r).count(), 2);
        assert_eq!(
            kg.by_tail_relation(&EntityId::new("B").unwrap(), &r).count(),
            1
        );
    }

    #[test]
    fn case_round_trips_to_triple() {
        let tr = t("A", "r", "B");
        for d in [Direction::Tail, Direction::Head] {
            let c = EvalCase::from_triple(3, &tr, d);
            assert_eq!(c.triple(), tr);
        }
        let head = EvalCase::from_triple(3, &tr, Direction::Head);
        assert_eq!(head.gold.as_str(), "A");
        assert_eq!(head.id, "00003-head");
    }

    #[test]
    fn record_label_leads_aliases() {
        let r = EntityRecord::new(
            EntityId::new("Q1").unwrap(),
            "Us",
            vec!["Us (TV series)".to_string(), "US".to_string()],
            None,
        );
        assert_eq!(r.aliases, vec!["Us", "Us (TV series)"]);
    }
}
