//! Ranking metrics over linked agent predictions.
//!
//! Ranking is raw: the agent's own ordered output, with no filtering of
//! other known-true answers. A gold entity missing from the ranking counts
//! as rank ∞.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::agent::Trajectory;
use crate::kg::{EntityId, EvalCase, RelationCardinalityTable};
use crate::retrieval::ToolKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedPrediction {
    pub case: EvalCase,
    pub entities: Vec<EntityId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_ref: Option<String>,
}

impl RankedPrediction {
    /// Drops repeated entities, keeping first occurrences.
    pub fn new(case: EvalCase, entities: Vec<EntityId>) -> Self {
        let mut seen = BTreeSet::new();
        let entities = entities.into_iter().filter(|e| seen.insert(e.clone())).collect();
        Self {
            case,
            entities,
            trajectory_ref: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no predictions to score")]
    Empty,
    #[error("N must be at least 1")]
    ZeroN,
}

/// 1-based rank of the gold entity.
pub fn rank_of_gold(p: &RankedPrediction) -> Option<usize> {
    p.entities.iter().position(|e| *e == p.case.gold).map(|i| i + 1)
}

pub fn hits_at_n(preds: &[RankedPrediction], n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroN);
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = preds
        .iter()
        .filter(|p| rank_of_gold(p).is_some_and(|r| r <= n))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn mrr(preds: &[RankedPrediction]) -> Result<f64, MetricError> {
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    // Summing per-rank counts in rank order makes the float result
    // independent of case order.
    let mut by_rank: BTreeMap<usize, usize> = BTreeMap::new();
    for r in preds.iter().filter_map(rank_of_gold) {
        *by_rank.entry(r).or_insert(0) += 1;
    }
    let sum: f64 = by_rank.iter().map(|(&r, &c)| c as f64 / r as f64).sum();
    Ok(sum / preds.len() as f64)
}

/// Which inclusion rule relation-aware Hits@N uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaRule {
    /// Include a case at N when its relation's cardinality is at most N:
    /// the full answer set fits in N guesses.
    #[default]
    CardinalityWithinN,
    /// Include a case when N ≤ N_rel, as the defining equation is written.
    LiteralEquation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaHits {
    /// `None` when no case qualifies.
    pub value: Option<f64>,
    pub support: usize,
    /// Cases whose relation has no cardinality entry.
    pub unsupported: usize,
}

pub fn relation_aware_hits(
    preds: &[RankedPrediction],
    table: &RelationCardinalityTable,
    n: usize,
    rule: RaRule,
) -> Result<RaHits, MetricError> {
    if n == 0 {
        return Err(MetricError::ZeroN);
    }
    let mut support = 0;
    let mut hits = 0;
    let mut unsupported = 0;
    for p in preds {
        let q = &p.case.query;
        let Some(card) = table.get(&q.relation, q.direction) else {
            unsupported += 1;
            continue;
        };
        let valid = match rule {
            RaRule::CardinalityWithinN => card <= n,
            RaRule::LiteralEquation => n <= card,
        };
        if valid {
            support += 1;
            if rank_of_gold(p).is_some_and(|r| r <= n) {
                hits += 1;
            }
        }
    }
    Ok(RaHits {
        value: (support > 0).then(|| hits as f64 / support as f64),
        support,
        unsupported,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrieverUsage {
    pub basic_calls: usize,
    pub advanced_calls: usize,
    pub no_retrieval_cases: usize,
    pub cases: usize,
}

pub fn retriever_usage<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> RetrieverUsage {
    let mut u = RetrieverUsage::default();
    for t in trajectories {
        u.cases += 1;
        u.basic_calls += t.tool_calls(ToolKind::Basic);
        u.advanced_calls += t.tool_calls(ToolKind::Advanced);
        if !t.used_retrieval() {
            u.no_retrieval_cases += 1;
        }
    }
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub value: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hits: BTreeMap<usize, Scored>,
    pub mrr: f64,
    pub ra_hits: BTreeMap<usize, Scored>,
    pub ra_rule: RaRule,
    pub ra_unsupported: usize,
    pub case_count: usize,
}

/// One row of the machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub value: Option<f64>,
    pub support: usize,
}

impl MetricReport {
    pub fn compute(
        preds: &[RankedPrediction],
        table: &RelationCardinalityTable,
        ns: &[usize],
        rule: RaRule,
    ) -> Result<Self, MetricError> {
        let mut hits = BTreeMap::new();
        let mut ra_hits = BTreeMap::new();
        let mut ra_unsupported = 0;
        for &n in ns {
            hits.insert(
                n,
                Scored {
                    value: Some(hits_at_n(preds, n)?),
                    support: preds.len(),
                },
            );
            let ra = relation_aware_hits(preds, table, n, rule)?;
            ra_unsupported = ra.unsupported;
            ra_hits.insert(
                n,
                Scored {
                    value: ra.value,
                    support: ra.support,
                },
            );
        }
        Ok(Self {
            hits,
            mrr: mrr(preds)?,
            ra_hits,
            ra_rule: rule,
            ra_unsupported,
            case_count: preds.len(),
        })
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        for (&n, s) in &self.hits {
            rows.push(ReportRow {
                metric: "hits".into(),
                n: Some(n),
                value: s.value,
                support: s.support,
            });
        }
        rows.push(ReportRow {
            metric: "mrr".into(),
            n: None,
            value: Some(self.mrr),
            support: self.case_count,
        });
        for (&n, s) in &self.ra_hits {
            rows.push(ReportRow {
                metric: "ra_hits".into(),
                n: Some(n),
                value: s.value,
                support: s.support,
            });
        }
        rows
    }

    /// Plain-text table; values are percentages with one decimal (MRR is
    /// scaled ×100 the same way), undefined values print as `n/a`.
    pub fn render_table(&self) -> String {
        let pct = |v: Option<f64>| match v {
            Some(v) => format!("{:.1}", v * 100.0),
            None => "n/a".to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "{:<14} {:>8} {:>8}", "metric", "value", "support");
        for row in self.rows() {
            let name = match row.n {
                Some(n) if row.metric == "hits" => format!("Hits@{n}"),
                Some(n) => format!("RA-Hits@{n}"),
                None => "MRR".to_string(),
            };
            let _ = writeln!(out, "{:<14} {:>8} {:>8}", name, pct(row.value), row.support);
        }
        let rule = match self.ra_rule {
            RaRule::CardinalityWithinN => "N_rel <= N",
            RaRule::LiteralEquation => "N <= N_rel (literal)",
        };
        let _ = writeln!(
            out,
            "relation-aware inclusion: {rule}; cases without a cardinality entry: {}",
            self.ra_unsupported
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Direction, KnowledgeGraph, Triple};
    use crate::kg::compute_relation_cardinality;

    fn pred(i: usize, rel: &str, gold_rank: Option<usize>) -> RankedPrediction {
        let t = Triple::parse(&format!("h{i}"), rel, &format!("g{i}"));
        let case = EvalCase::from_triple(i, &t, Direction::Tail);
        let mut ents: Vec<EntityId> = (0..12).map(|k| EntityId::new(format!("x{i}_{k}")).unwrap()).collect();
        if let Some(r) = gold_rank {
            ents.insert(r - 1, case.gold.clone());
        }
        RankedPrediction::new(case, ents)
    }

    #[test]
    fn hand_examples() {
        let p = [pred(0, "r", Some(1)), pred(1, "r", None)];
        assert_eq!(hits_at_n(&p, 1).unwrap(), 0.5);
        let p = [pred(0, "r", Some(2)), pred(1, "r", Some(3)), pred(2, "r", Some(11))];
        assert_eq!(hits_at_n(&p, 10).unwrap(), 2.0 / 3.0);
        let p = [pred(0, "r", Some(1)), pred(1, "r", Some(2))];
        assert_eq!(mrr(&p).unwrap(), 0.75);
        assert_eq!(mrr(&[pred(0, "r", None)]).unwrap(), 0.0);
        assert_eq!(hits_at_n(&[], 1), Err(MetricError::Empty));
        assert_eq!(mrr(&[]), Err(MetricError::Empty));
    }

    fn fixture_table() -> RelationCardinalityTable {
        let kg = KnowledgeGraph::from_triples([
            Triple::parse("a", "occ", "o1"),
            Triple::parse("a", "occ", "o2"),
            Triple::parse("a", "birthplace", "p"),
        ]);
        compute_relation_cardinality(&kg).unwrap()
    }

    #[test]
    fn relation_aware_fixture() {
        let table = fixture_table();
        let p = [pred(0, "occ", Some(2)), pred(1, "birthplace", Some(1)), pred(2, "unseen", Some(1))];
        let r1 = relation_aware_hits(&p, &table, 1, RaRule::default()).unwrap();
        assert_eq!((r1.value, r1.support, r1.unsupported), (Some(1.0), 1, 1));
        let r3 = relation_aware_hits(&p, &table, 3, RaRule::default()).unwrap();
        assert_eq!((r3.value, r3.support), (Some(1.0), 2));
        let lit = relation_aware_hits(&p, &table, 1, RaRule::LiteralEquation).unwrap();
        assert_eq!((lit.value, lit.support), (Some(0.5), 2));
        let none = relation_aware_hits(&p[..1], &table, 1, RaRule::default()).unwrap();
        assert_eq!((none.value, none.support), (None, 0));
    }

    #[test]
    fn relation_aware_is_not_monotone_in_n() {
        // occ (card 2) misses at rank 3 and only joins the support at N=2,
        // dragging the value down.
        let table = fixture_table();
        let p = [pred(0, "occ", Some(3)), pred(1, "birthplace", Some(1))];
        let v1 = relation_aware_hits(&p, &table, 1, RaRule::default()).unwrap().value.unwrap();
        let v2 = relation_aware_hits(&p, &table, 2, RaRule::default()).unwrap().value.unwrap();
        assert!(v2 < v1);
        assert!(hits_at_n(&p, 1).unwrap() <= hits_at_n(&p, 2).unwrap());
    }

    #[test]
    fn report_renders_na_and_percentages() {
        let table = fixture_table();
        let p = [pred(0, "occ", Some(1)), pred(1, "occ", Some(2))];
        let rep = MetricReport::compute(&p, &table, &[1, 3], RaRule::default()).unwrap();
        let text = rep.render_table();
        assert!(text.contains("Hits@1             50.0        2"), "{text}");
        assert!(text.contains("MRR                75.0        2"), "{text}");
        assert!(text.contains("RA-Hits@1           n/a        0"), "{text}");
        assert_eq!(rep.rows().len(), 5);
        let json = serde_json::to_string(&rep.rows()).unwrap();
        assert!(json.contains(r#"{"metric":"ra_hits","n":1,"value":null,"support":0}"#));
    }
}
