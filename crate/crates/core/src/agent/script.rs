use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::llm::{LlmClient, LlmError, LlmTurn, ToolSchema};
use super::{ChatMessage, Role};
use crate::retrieval::ToolKind;

/// One scripted assistant turn. Strings may use `{entity}`, `{relation}`,
/// `{entity_id}` and `{relation_id}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptTurn {
    /// Call a tool by name (`basic`, `advanced`, or a full tool name;
    /// unknown names are passed through verbatim).
    Tool { tool: String, query: String },
    /// Answer with every first capture group of `answer_from_evidence`
    /// found in the tool observations so far, in order of appearance.
    /// Variables substituted into the pattern are regex-escaped.
    AnswerFromEvidence {
        answer_from_evidence: String,
        #[serde(default)]
        fallback: String,
    },
    Text { text: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptVars {
    pub entity: String,
    pub relation: String,
    pub entity_id: String,
    pub relation_id: String,
}

impl ScriptVars {
    fn fill(&self, s: &str, escape: bool) -> String {
        let f = |v: &str| if escape { regex::escape(v) } else { v.to_string() };
        s.replace("{entity_id}", &f(&self.entity_id))
            .replace("{relation_id}", &f(&self.relation_id))
            .replace("{entity}", &f(&self.entity))
            .replace("{relation}", &f(&self.relation))
    }
}

/// Scripts keyed by case id, with a default for everything else.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptBook {
    #[serde(default)]
    pub default: Vec<ScriptTurn>,
    #[serde(default)]
    pub cases: BTreeMap<String, Vec<ScriptTurn>>,
}

impl ScriptBook {
    pub fn from_path(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Other(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Other(format!("{}: {e}", path.display())))
    }

    pub fn turns_for(&self, case_id: &str) -> &[ScriptTurn] {
        self.cases.get(case_id).map(Vec::as_slice).unwrap_or(&self.default)
    }

    pub fn llm_for(&self, case_id: &str, vars: ScriptVars) -> ScriptedLlm {
        ScriptedLlm::new(self.turns_for(case_id).to_vec(), vars)
    }
}

/// Deterministic stand-in for a model: replays its turns in order, one per
/// call, and repeats the last turn once the script runs out.
#[derive(Debug)]
pub struct ScriptedLlm {
    turns: Vec<ScriptTurn>,
    vars: ScriptVars,
    calls: AtomicUsize,
}

impl ScriptedLlm {
    pub fn new(turns: Vec<ScriptTurn>, vars: ScriptVars) -> Self {
        Self {
            turns,
            vars,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn answer_from(&self, pattern: &str, fallback: &str, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let re = Regex::new(&self.vars.fill(pattern, true))
            .map_err(|e| LlmError::Other(format!("bad script pattern: {e}")))?;
        let mut found: Vec<String> = Vec::new();
        for m in messages.iter().filter(|m| m.role == Role::Tool) {
            for cap in re.captures_iter(&m.content) {
                if let Some(g) = cap.get(1) {
                    let s = g.as_str().trim().to_string();
                    if !found.contains(&s) {
                        found.push(s);
                    }
                }
            }
        }
        if found.is_empty() {
            Ok(self.vars.fill(fallback, false))
        } else {
            Ok(format!("<answer>{}</answer>", found.join(", ")))
        }
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, messages: &[ChatMessage], _tools: &[ToolSchema]) -> Result<LlmTurn, LlmError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        let Some(turn) = self.turns.get(n).or(self.turns.last()) else {
            return Err(LlmError::Other("empty script".into()));
        };
        Ok(match turn {
            ScriptTurn::Tool { tool, query } => LlmTurn::ToolCall {
                name: ToolKind::from_tool_name(tool)
                    .map(|t| t.tool_name().to_string())
                    .unwrap_or_else(|| tool.clone()),
                query: self.vars.fill(query, false),
            },
            ScriptTurn::Text { text } => LlmTurn::Text(self.vars.fill(text, false)),
            ScriptTurn::AnswerFromEvidence {
                answer_from_evidence,
                fallback,
            } => LlmTurn::Text(self.answer_from(answer_from_evidence, fallback, messages)?),
        })
    }
}
