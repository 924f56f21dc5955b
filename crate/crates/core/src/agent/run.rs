use std::collections::{BTreeMap, HashSet};

use super::format::{check_answer_format, salvage_candidates, CandidateList};
use super::llm::{LlmClient, LlmError, LlmTurn, ToolSchema};
use super::prompt::{
    answer_side_examples, build_answer_prompt, build_task_prompt, PromptContext, CONTINUE,
    FORMAT_ERROR, REFLECTION,
};
use super::{
    AgentAction, AgentConfig, ChatMessage, Role, StepRecord, TerminatedBy, ToolInvocation,
    Trajectory,
};
use crate::kg::{Catalog, EvalCase, KnowledgeGraph};
use crate::retrieval::{
    filter_chunks, chunk_document, process_detailed, rerank_detailed, Accumulation, Chunk,
    RelevanceScorer, RetrieverConfig, ToolKind, Toolbox,
};

const ELIDED: &str = "[observation elided to fit the context window]";

pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    }
}

/// Always reports the same instant; keeps trajectories byte-stable.
#[derive(Debug, Clone)]
pub struct FixedClock(pub String);

impl Default for FixedClock {
    fn default() -> Self {
        Self("1970-01-01T00:00:00Z".into())
    }
}

impl Clock for FixedClock {
    fn now(&self) -> String {
        self.0.clone()
    }
}

pub struct AgentDeps<'a> {
    pub llm: &'a dyn LlmClient,
    pub tools: &'a Toolbox,
    pub scorer: &'a dyn RelevanceScorer,
    pub kg: &'a KnowledgeGraph,
    pub entities: &'a Catalog,
    pub relations: &'a Catalog,
    pub retriever: &'a RetrieverConfig,
    pub clock: &'a dyn Clock,
}

/// Classifies an assistant turn. Text holding an answer tag is an answer;
/// any other text is a reflection, sufficient only when it carries the
/// `DECISION: SUFFICIENT` marker. A call to an unknown tool is treated as a
/// non-sufficient reflection so the loop can continue.
pub fn decide_next(turn: &LlmTurn) -> AgentAction {
    match turn {
        LlmTurn::ToolCall { name, query } => match ToolKind::from_tool_name(name) {
            Some(tool) => AgentAction::ToolCall {
                tool,
                query: query.clone(),
            },
            None => AgentAction::Reflect {
                text: format!("invalid tool call: {name}({query})"),
                sufficient: false,
            },
        },
        LlmTurn::Text(text) => {
            let lower = text.to_ascii_lowercase();
            if lower.contains("<answer>") || lower.contains("</answer>") {
                AgentAction::Answer {
                    raw_text: text.clone(),
                }
            } else {
                AgentAction::Reflect {
                    text: text.clone(),
                    sufficient: reflection_is_sufficient(text),
                }
            }
        }
    }
}

/// The last `DECISION:` marker wins; no marker means continue.
fn reflection_is_sufficient(text: &str) -> bool {
    let upper = text.to_ascii_uppercase();
    match upper.rfind("DECISION:") {
        Some(i) => upper[i + "DECISION:".len()..]
            .trim_start()
            .starts_with("SUFFICIENT"),
        None => false,
    }
}

fn render_chunks(chunks: &[Chunk]) -> String {
    chunks
        .iter()
        .enumerate()
        .map(|(i, c)| format!("[{}] {} — {}", i + 1, c.doc.title, c.text))
        .collect::<Vec<_>>()
        .join("\n")
}

struct Observer<'a> {
    deps: &'a AgentDeps<'a>,
    pool: Vec<Chunk>,
    pool_keys: HashSet<(String, usize)>,
}

impl Observer<'_> {
    fn observe(&mut self, tool: ToolKind, query: &str) -> String {
        let cfg = self.deps.retriever;
        let docs = match self.deps.tools.search(tool, query, cfg) {
            Ok(d) => d,
            Err(e) => return format!("Tool failed: {e}"),
        };
        let (chunks, filter_disabled, scorer_error) = match cfg.accumulation {
            Accumulation::PerIteration => {
                let out = process_detailed(&docs, query, self.deps.scorer, cfg);
                (out.chunks, out.filter_disabled, out.scorer_error)
            }
            Accumulation::Global => {
                let fresh: Vec<Chunk> = docs
                    .iter()
                    .flat_map(|d| chunk_document(&std::sync::Arc::new(d.clone())))
                    .collect();
                let filter_disabled =
                    crate::retrieval::keywords(query, &cfg.stopwords).is_empty();
                for c in filter_chunks(fresh, query, cfg) {
                    if self.pool_keys.insert((c.doc.source_id.clone(), c.sentence_start)) {
                        self.pool.push(c);
                    }
                }
                let out = rerank_detailed(self.pool.clone(), query, self.deps.scorer, cfg);
                (out.chunks, filter_disabled, out.scorer_error)
            }
        };
        let mut obs = if chunks.is_empty() {
            "No results.".to_string()
        } else {
            render_chunks(&chunks)
        };
        if filter_disabled {
            obs.push_str("\nNote: the query has no keywords; keyword filtering was skipped.");
        }
        if let Some(e) = scorer_error {
            obs.push_str(&format!(
                "\nNote: relevance scoring failed ({e}); passages are in retrieval order."
            ));
        }
        obs
    }
}

/// Elides the oldest tool observations until the transcript fits.
fn fit_context(messages: &mut [ChatMessage], max_chars: usize) -> usize {
    let mut total: usize = messages.iter().map(|m| m.content.len()).sum();
    let mut elided = 0;
    for m in messages.iter_mut() {
        if total <= max_chars {
            break;
        }
        if m.role == Role::Tool && m.content != ELIDED {
            total = total - m.content.len() + ELIDED.len();
            m.content = ELIDED.to_string();
            elided += 1;
        }
    }
    elided
}

struct Run<'a> {
    deps: &'a AgentDeps<'a>,
    cfg: &'a AgentConfig,
    messages: Vec<ChatMessage>,
    steps: Vec<StepRecord>,
    tools_used: BTreeMap<ToolKind, usize>,
    llm_calls: usize,
    truncated: usize,
    schemas: Vec<ToolSchema>,
}

impl Run<'_> {
    fn call(&mut self) -> Result<LlmTurn, LlmError> {
        self.truncated += fit_context(&mut self.messages, self.cfg.max_context_chars);
        self.llm_calls += 1;
        self.deps.llm.complete(&self.messages, &self.schemas)
    }

    fn record(&mut self, action: AgentAction, observation: Option<String>) {
        self.steps.push(StepRecord {
            index: self.steps.len(),
            action,
            observation,
            timestamp: self.deps.clock.now(),
        });
    }
}

/// Runs one episode. Returns the trajectory and the candidate list that
/// goes to the linker; an LLM failure aborts the episode.
pub fn run_agent(
    case: &EvalCase,
    deps: &AgentDeps<'_>,
    cfg: &AgentConfig,
) -> Result<(Trajectory, CandidateList), LlmError> {
    let ctx = PromptContext {
        kg: deps.kg,
        entities: deps.entities,
        relations: deps.relations,
    };
    let mut run = Run {
        deps,
        cfg,
        messages: build_task_prompt(case, &ctx, cfg),
        steps: Vec::new(),
        tools_used: BTreeMap::new(),
        llm_calls: 0,
        truncated: 0,
        schemas: ToolSchema::both(),
    };
    let mut observer = Observer {
        deps,
        pool: Vec::new(),
        pool_keys: HashSet::new(),
    };

    // Decision loop.
    let mut iterations = 0;
    let mut sufficient = false;
    let mut direct: Option<String> = None;
    while iterations < cfg.max_iterations {
        let turn = run.call()?;
        match decide_next(&turn) {
            AgentAction::Answer { raw_text } => {
                direct = Some(raw_text);
                break;
            }
            AgentAction::ToolCall { tool, query } => {
                iterations += 1;
                let obs = observer.observe(tool, &query);
                *run.tools_used.entry(tool).or_insert(0) += 1;
                let invocation = ToolInvocation {
                    id: format!("call_{}", run.steps.len()),
                    tool,
                    query: query.clone(),
                };
                let mut a = ChatMessage::assistant("");
                a.tool_call = Some(invocation.clone());
                let mut t = ChatMessage::new(Role::Tool, obs.clone());
                t.tool_call = Some(invocation);
                run.messages.extend([a, t, ChatMessage::user(REFLECTION.trim_end())]);
                run.record(AgentAction::ToolCall { tool, query }, Some(obs));
            }
            AgentAction::Reflect { text, sufficient: s } => {
                iterations += 1;
                run.messages.push(ChatMessage::assistant(text.clone()));
                run.record(AgentAction::Reflect { text, sufficient: s }, None);
                if s {
                    sufficient = true;
                    break;
                }
                run.messages.push(ChatMessage::user(CONTINUE.trim_end()));
            }
        }
    }
    let budget_exhausted = direct.is_none() && !sufficient;

    // Answer loop: the direct answer, if any, is the first attempt.
    let mut pending = direct;
    let mut accepted: Option<CandidateList> = None;
    let mut last_raw = String::new();
    for attempt in 1..=cfg.max_gen_attempts.max(1) {
        let raw = match pending.take() {
            Some(r) => r,
            None => {
                if attempt == 1 {
                    let examples = answer_side_examples(case, &ctx, cfg);
                    run.messages.push(build_answer_prompt(&examples));
                }
                match run.call()? {
                    LlmTurn::Text(t) => t,
                    LlmTurn::ToolCall { name, query } => format!("{name}({query})"),
                }
            }
        };
        let verdict = check_answer_format(&raw);
        let note = match &verdict {
            Ok(c) => format!("ok ({} candidates)", c.len()),
            Err(e) => e.code().to_string(),
        };
        run.record(
            AgentAction::Answer {
                raw_text: raw.clone(),
            },
            Some(note),
        );
        run.messages.push(ChatMessage::assistant(raw.clone()));
        last_raw = raw;
        match verdict {
            Ok(c) => {
                accepted = Some(c);
                break;
            }
            Err(e) => {
                run.messages.push(ChatMessage::user(
                    FORMAT_ERROR.trim_end().replace("[reason]", e.code()),
                ));
            }
        }
    }

    let salvaged = accepted.is_none();
    let candidates = accepted.unwrap_or_else(|| salvage_candidates(&last_raw));
    let terminated_by = if budget_exhausted {
        TerminatedBy::IterationBudget
    } else if salvaged {
        TerminatedBy::FormatBudget
    } else {
        TerminatedBy::Answered
    };
    let trajectory = Trajectory {
        case: case.clone(),
        steps: run.steps,
        tools_used: run.tools_used,
        final_candidates: candidates.surfaces().to_vec(),
        terminated_by,
        salvaged,
        truncated_observations: run.truncated,
        llm_calls: run.llm_calls,
        error: None,
    };
    Ok((trajectory, candidates))
}
