use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Direction, KgError, KnowledgeGraph, RelationId};

/// Per-relation answer-set sizes observed in a training graph.
///
/// `tail_card[r]` is the largest number of distinct tails any single head has
/// under `r`; `head_card[r]` is the mirror image. Relations that never occur
/// in the training graph have no entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationCardinalityTable {
    pub tail_card: HashMap<RelationId, usize>,
    pub head_card: HashMap<RelationId, usize>,
}

impl RelationCardinalityTable {
    /// Cardinality relevant for a query in `direction`: tail predictions use
    /// `tail_card`, head predictions `head_card`.
    pub fn get(&self, relation: &RelationId, direction: Direction) -> Option<usize> {
        match direction {
            Direction::Tail => self.tail_card.get(relation).copied(),
            Direction::Head => self.head_card.get(relation).copied(),
        }
    }
}

/// Builds the table from the (head, relation) and (tail, relation) indices.
/// The graph is a set, so index group sizes are distinct-entity counts.
pub fn compute_relation_cardinality(
    kg_train: &KnowledgeGraph,
) -> Result<RelationCardinalityTable, KgError> {
    if kg_train.is_empty() {
        return Err(KgError::EmptyGraph);
    }
    let mut table = RelationCardinalityTable::default();
    for (r, n) in kg_train.head_relation_groups() {
        let slot = table.tail_card.entry(r.clone()).or_insert(0);
        *slot = (*slot).max(n);
    }
    for (r, n) in kg_train.tail_relation_groups() {
        let slot = table.head_card.entry(r.clone()).or_insert(0);
        *slot = (*slot).max(n);
    }
    Ok(table)
}
