//! The completion agent: an LLM-driven loop that decides between answering
//! from its own knowledge, calling one of two retriever tools, and
//! reflecting on whether the evidence gathered so far suffices.
//!
//! One run produces a [`Trajectory`] (every LLM turn with its observation)
//! and a [`CandidateList`] of surface strings for the entity linker.
//!
//! ```text
//!            ┌──────────── decision loop (≤ max_iterations turns) ───────────┐
//!  prompt ──►│ TOOL_CALL → observation → REFLECT ─ SUFFICIENT ─┐             │
//!            │     ▲                        │                  │             │
//!            │     └──────── CONTINUE ──────┘                  │             │
//!            │ ANSWER (direct) ─────────────────────────────┐  │             │
//!            └──────────────────────────────────────────────┼──┼─────────────┘
//!                                                           ▼  ▼
//!                        answer loop (≤ max_gen_attempts, format-checked)
//! ```

mod format;
mod llm;
mod prompt;
mod run;
mod script;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kg::EvalCase;
use crate::retrieval::ToolKind;

pub use format::{check_answer_format, salvage_candidates, CandidateList, FormatError};
pub use llm::{ChatCompletionsClient, LlmClient, LlmError, LlmTurn, ToolSchema};
pub use prompt::{
    build_answer_prompt, build_task_prompt, render_triple, PromptContext, ANSWER_TEMPLATE,
    TASK_TEMPLATE,
};
pub use run::{decide_next, run_agent, AgentDeps, Clock, FixedClock, SystemClock};
pub use script::{ScriptBook, ScriptTurn, ScriptVars, ScriptedLlm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub max_iterations: usize,
    pub max_gen_attempts: usize,
    pub neighborhood_limit: usize,
    pub relation_example_count: usize,
    pub model_id: String,
    /// Oldest tool observations are elided once the transcript exceeds this
    /// many characters.
    pub max_context_chars: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            max_gen_attempts: 3,
            neighborhood_limit: 10,
            relation_example_count: 5,
            model_id: "scripted".to_string(),
            max_context_chars: 120_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub id: String,
    pub tool: ToolKind,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    /// On an assistant message: the tool it invoked. On a tool message: the
    /// invocation this observation answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolInvocation>,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_call: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentAction {
    ToolCall { tool: ToolKind, query: String },
    Reflect { text: String, sufficient: bool },
    Answer { raw_text: String },
}

impl AgentAction {
    /// Step label used in rendered trajectories.
    pub fn label(&self) -> &'static str {
        match self {
            AgentAction::ToolCall { .. } => "tool_call",
            AgentAction::Reflect { .. } => "Self-Reflection",
            AgentAction::Answer { .. } => "Answer-Generation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub action: AgentAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
    pub timestamp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminatedBy {
    Answered,
    IterationBudget,
    FormatBudget,
    /// The episode aborted (e.g. the LLM endpoint failed).
    Error,
}

impl fmt::Display for TerminatedBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminatedBy::Answered => "ANSWERED",
            TerminatedBy::IterationBudget => "ITERATION_BUDGET",
            TerminatedBy::FormatBudget => "FORMAT_BUDGET",
            TerminatedBy::Error => "ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub case: EvalCase,
    pub steps: Vec<StepRecord>,
    /// Tool-call counts per tool.
    pub tools_used: BTreeMap<ToolKind, usize>,
    pub final_candidates: Vec<String>,
    pub terminated_by: TerminatedBy,
    /// Candidates came from the salvage parse of a malformed answer.
    #[serde(default)]
    pub salvaged: bool,
    /// Tool observations elided to fit the context budget.
    #[serde(default)]
    pub truncated_observations: usize,
    #[serde(default)]
    pub llm_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trajectory {
    /// Placeholder for an episode that could not run.
    pub fn failed(case: EvalCase, error: impl Into<String>) -> Self {
        Self {
            case,
            steps: Vec::new(),
            tools_used: BTreeMap::new(),
            final_candidates: Vec::new(),
            terminated_by: TerminatedBy::Error,
            salvaged: false,
            truncated_observations: 0,
            llm_calls: 0,
            error: Some(error.into()),
        }
    }

    /// Decision-loop turns (tool calls and reflections).
    pub fn iterations(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| !matches!(s.action, AgentAction::Answer { .. }))
            .count()
    }

    pub fn tool_calls(&self, tool: ToolKind) -> usize {
        self.tools_used.get(&tool).copied().unwrap_or(0)
    }

    pub fn used_retrieval(&self) -> bool {
        self.tools_used.values().any(|&n| n > 0)
    }

    /// Human-readable step listing.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let q = &self.case.query;
        out.push_str(&format!(
            "case {} ({} prediction): known={} relation={} gold={}\n",
            self.case.id, q.direction, q.known_entity, q.relation, self.case.gold
        ));
        for step in &self.steps {
            match &step.action {
                AgentAction::ToolCall { tool, query } => {
                    out.push_str(&format!("Step {}: tool_call: {}_search_tool\n", step.index, tool));
                    out.push_str(&format!("      query: \"{query}\"\n"));
                    if let Some(obs) = &step.observation {
                        out.push_str(&format!("      Retrieved Results: {}\n", digest(obs, 160)));
                    }
                }
                AgentAction::Reflect { text, sufficient } => {
                    out.push_str(&format!(
                        "Step {}: Self-Reflection ({}): {}\n",
                        step.index,
                        if *sufficient { "sufficient" } else { "continue" },
                        digest(text, 240)
                    ));
                }
                AgentAction::Answer { raw_text } => {
                    out.push_str(&format!(
                        "Step {}: Answer-Generation: {}\n",
                        step.index,
                        digest(raw_text, 240)
                    ));
                    if let Some(obs) = &step.observation {
                        out.push_str(&format!("      format check: {obs}\n"));
                    }
                }
            }
        }
        out.push_str(&format!("terminated_by: {}", self.terminated_by));
        if self.salvaged {
            out.push_str(" (salvaged candidates)");
        }
        if let Some(e) = &self.error {
            out.push_str(&format!(" ({e})"));
        }
        out.push('\n');
        out
    }
}

fn digest(s: &str, max: usize) -> String {
    let flat = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if flat.chars().count() <= max {
        flat
    } else {
        let cut: String = flat.chars().take(max).collect();
        format!("{cut} ...")
    }
}
