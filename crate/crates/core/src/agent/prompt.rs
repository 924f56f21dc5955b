use std::collections::HashSet;

use super::{AgentConfig, ChatMessage};
use crate::kg::{Catalog, Direction, EvalCase, KnowledgeGraph, Triple};

pub const TASK_TEMPLATE: &str = include_str!("../../assets/task_instruct.txt");
pub const ANSWER_TEMPLATE: &str = include_str!("../../assets/answer_generation.txt");
pub(crate) const KICKOFF: &str = include_str!("../../assets/kickoff.txt");
pub(crate) const REFLECTION: &str = include_str!("../../assets/reflection.txt");
pub(crate) const CONTINUE: &str = include_str!("../../assets/continue.txt");
pub(crate) const FORMAT_ERROR: &str = include_str!("../../assets/format_error.txt");

const NONE_KNOWN: &str = "(none known)";

/// Label lookups used when rendering prompts. Relation labels live in their
/// own catalog (ids are opaque strings either way).
#[derive(Debug, Clone, Copy)]
pub struct PromptContext<'a> {
    pub kg: &'a KnowledgeGraph,
    pub entities: &'a Catalog,
    pub relations: &'a Catalog,
}

pub fn render_triple(t: &Triple, ctx: &PromptContext<'_>) -> String {
    format!(
        "({}, {}, {})",
        ctx.entities.label_or_id(t.head.as_str()),
        ctx.relations.label_or_id(t.relation.as_str()),
        ctx.entities.label_or_id(t.tail.as_str())
    )
}

fn render_lines(triples: &[Triple], ctx: &PromptContext<'_>) -> String {
    if triples.is_empty() {
        NONE_KNOWN.to_string()
    } else {
        triples
            .iter()
            .map(|t| render_triple(t, ctx))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn render_query(case: &EvalCase, ctx: &PromptContext<'_>) -> String {
    let known = ctx.entities.label_or_id(case.query.known_entity.as_str());
    let rel = ctx.relations.label_or_id(case.query.relation.as_str());
    match case.query.direction {
        Direction::Tail => format!(
            "Query: ({known}, {rel}, ?)\nFind the missing tail entity given the head entity \"{known}\" and relation \"{rel}\"."
        ),
        Direction::Head => format!(
            "Query: (?, {rel}, {known})\nFind the missing head entity given the relation \"{rel}\" and tail entity \"{known}\"."
        ),
    }
}

/// Training triples of the query's relation shown as examples, never
/// including the case's own fact.
pub fn relation_examples(case: &EvalCase, kg: &KnowledgeGraph, cfg: &AgentConfig) -> Vec<Triple> {
    let exclude: HashSet<Triple> = [case.triple()].into_iter().collect();
    kg.examples_for_relation(&case.query.relation, cfg.relation_example_count.max(1), &exclude)
}

/// Graph context of the known entity, minus the case's own fact.
pub fn known_triples(case: &EvalCase, kg: &KnowledgeGraph, cfg: &AgentConfig) -> Vec<Triple> {
    let gold = case.triple();
    let limit = cfg.neighborhood_limit.max(1);
    kg.neighborhood(&case.query.known_entity, limit + 1)
        .into_iter()
        .filter(|t| *t != gold)
        .take(limit)
        .collect()
}

/// System message (filled task template) followed by the kickoff message.
pub fn build_task_prompt(
    case: &EvalCase,
    ctx: &PromptContext<'_>,
    cfg: &AgentConfig,
) -> Vec<ChatMessage> {
    let known = ctx.entities.label_or_id(case.query.known_entity.as_str());
    let rel = ctx.relations.label_or_id(case.query.relation.as_str());
    let description = ctx
        .entities
        .get(&case.query.known_entity)
        .and_then(|r| r.description.as_deref())
        .unwrap_or(NONE_KNOWN);
    let system = TASK_TEMPLATE
        .replace("[query]", &render_query(case, ctx))
        .replace(
            "[triples with the same relation]",
            &render_lines(&relation_examples(case, ctx.kg, cfg), ctx),
        )
        .replace(
            "[triples with the same entity]",
            &render_lines(&known_triples(case, ctx.kg, cfg), ctx),
        )
        .replace("[entity description]", &format!("\nDescription: {description}"))
        .replace("[relation]", rel)
        .replace("[entity]", known);
    vec![
        ChatMessage::system(system.trim_end()),
        ChatMessage::user(KICKOFF.trim_end()),
    ]
}

/// Answer-generation message. `relation_tail_examples` are the answer-side
/// labels of training triples with the same relation.
pub fn build_answer_prompt<S: AsRef<str>>(relation_tail_examples: &[S]) -> ChatMessage {
    let examples = if relation_tail_examples.is_empty() {
        "(none)".to_string()
    } else {
        relation_tail_examples
            .iter()
            .map(|s| s.as_ref())
            .collect::<Vec<_>>()
            .join(", ")
    };
    ChatMessage::user(
        ANSWER_TEMPLATE
            .replace("[endings of triples with the same relation]", &examples)
            .trim_end(),
    )
}

/// Answer-side labels of the relation examples: tails for tail prediction,
/// heads for head prediction.
pub fn answer_side_examples(case: &EvalCase, ctx: &PromptContext<'_>, cfg: &AgentConfig) -> Vec<String> {
    relation_examples(case, ctx.kg, cfg)
        .iter()
        .map(|t| {
            let id = match case.query.direction {
                Direction::Tail => &t.tail,
                Direction::Head => &t.head,
            };
            ctx.entities.label_or_id(id.as_str()).to_string()
        })
        .collect()
}
