use std::sync::Arc;

use serde_json::{json, Value};

use super::{ChatMessage, Role};
use crate::cache::{CacheError, CacheKind, HttpRequest, ReplayCache};
use crate::retrieval::ToolKind;

/// One assistant turn: either a function call or free text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LlmTurn {
    ToolCall { name: String, query: String },
    Text(String),
}

/// A search tool advertised to the model; every tool takes a single
/// `query` string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
}

impl ToolSchema {
    pub fn for_tool(tool: ToolKind) -> Self {
        let description = match tool {
            ToolKind::Basic => {
                "Search an encyclopedia for pages matching the query and return the most relevant passages. Cheap; try this first."
            }
            ToolKind::Advanced => {
                "Search the open web for the query and return the most relevant passages. Use when the basic search is insufficient."
            }
        };
        Self {
            name: tool.tool_name().to_string(),
            description: description.to_string(),
        }
    }

    pub fn both() -> Vec<Self> {
        vec![Self::for_tool(ToolKind::Basic), Self::for_tool(ToolKind::Advanced)]
    }

    fn to_json(&self) -> Value {
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": {
                        "query": {"type": "string", "description": "Search query"}
                    },
                    "required": ["query"]
                }
            }
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("llm request failed: {0}")]
    Request(#[from] CacheError),
    #[error("malformed llm response: {0}")]
    BadResponse(String),
    #[error("llm client failed: {0}")]
    Other(String),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], tools: &[ToolSchema]) -> Result<LlmTurn, LlmError>;
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint, routed
/// through the replay cache. Decoding is greedy and seeded so that cached
/// replies are a faithful stand-in for live ones.
pub struct ChatCompletionsClient {
    base_url: String,
    model: String,
    api_key: Option<String>,
    seed: u64,
    cache: Arc<ReplayCache>,
}

impl ChatCompletionsClient {
    pub fn new(
        base_url: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        seed: u64,
        cache: Arc<ReplayCache>,
    ) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            seed,
            cache,
        }
    }

    pub fn request_body(&self, messages: &[ChatMessage], tools: &[ToolSchema]) -> Value {
        let msgs: Vec<Value> = messages.iter().map(message_json).collect();
        let mut body = json!({
            "model": self.model,
            "messages": msgs,
            "temperature": 0,
            "seed": self.seed,
        });
        if !tools.is_empty() {
            body["tools"] = Value::Array(tools.iter().map(ToolSchema::to_json).collect());
        }
        body
    }
}

fn message_json(m: &ChatMessage) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    match (&m.role, &m.tool_call) {
        (Role::Assistant, Some(call)) => json!({
            "role": role,
            "content": Value::Null,
            "tool_calls": [{
                "id": call.id,
                "type": "function",
                "function": {
                    "name": call.tool.tool_name(),
                    "arguments": json!({"query": call.query}).to_string(),
                }
            }]
        }),
        (Role::Tool, Some(call)) => json!({
            "role": role,
            "tool_call_id": call.id,
            "content": m.content,
        }),
        _ => json!({"role": role, "content": m.content}),
    }
}

/// Extracts the first choice of a chat-completions response.
pub fn parse_completion(body: &str) -> Result<LlmTurn, LlmError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    let msg = v
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::BadResponse("no choices[0].message".into()))?;
    if let Some(call) = msg.pointer("/tool_calls/0/function") {
        let name = call
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::BadResponse("tool call without name".into()))?;
        let args = call.get("arguments").and_then(Value::as_str).unwrap_or("{}");
        // Arguments that are not JSON are taken as the query itself.
        let query = match serde_json::from_str::<Value>(args) {
            Ok(a) => a
                .get("query")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
            Err(_) => args.to_string(),
        };
        return Ok(LlmTurn::ToolCall {
            name: name.to_string(),
            query,
        });
    }
    Ok(LlmTurn::Text(
        msg.get("content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string(),
    ))
}

impl LlmClient for ChatCompletionsClient {
    fn complete(&self, messages: &[ChatMessage], tools: &[ToolSchema]) -> Result<LlmTurn, LlmError> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = self.request_body(messages, tools);
        // The key is deliberately absent from the canonical request.
        let canonical = json!({"url": url, "body": body});
        let mut req = HttpRequest::post_json(&url, &body);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let payload = self.cache.fetch(CacheKind::Llm, &canonical, &req)?;
        parse_completion(&payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::ToolInvocation;
    use crate::cache::{CacheMode, StaticTransport};

    #[test]
    fn parses_tool_calls_and_text() {
        let tool = r#"{"choices":[{"message":{"role":"assistant","content":null,"tool_calls":[{"id":"c1","type":"function","function":{"name":"search_tool_basic","arguments":"{\"query\":\"Us cast\"}"}}]}}]}"#;
        assert_eq!(
            parse_completion(tool).unwrap(),
            LlmTurn::ToolCall { name: "search_tool_basic".into(), query: "Us cast".into() }
        );
        let text = r#"{"choices":[{"message":{"role":"assistant","content":"<answer>a</answer>"}}]}"#;
        assert_eq!(parse_completion(text).unwrap(), LlmTurn::Text("<answer>a</answer>".into()));
        assert!(parse_completion("{}").is_err());
    }

    #[test]
    fn tool_messages_carry_call_ids() {
        let call = ToolInvocation { id: "call_1".into(), tool: ToolKind::Advanced, query: "q".into() };
        let mut a = ChatMessage::assistant("");
        a.tool_call = Some(call.clone());
        let mut t = ChatMessage::new(Role::Tool, "obs");
        t.tool_call = Some(call);
        let a = message_json(&a);
        assert_eq!(a["tool_calls"][0]["function"]["name"], "search_tool_advanced");
        assert_eq!(message_json(&t)["tool_call_id"], "call_1");
    }

    #[test]
    fn api_key_stays_out_of_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let transport = Arc::new(StaticTransport::new());
        transport.route(
            "http://llm.test/v1/chat/completions",
            r#"{"choices":[{"message":{"content":"hi"}}]}"#,
        );
        let cache = Arc::new(ReplayCache::new(dir.path(), CacheMode::ReadWrite, transport.clone()));
        let client = ChatCompletionsClient::new(
            "http://llm.test/v1/",
            "m",
            Some("sk-secret".into()),
            7,
            cache.clone(),
        );
        let msgs = [ChatMessage::user("hello")];
        assert_eq!(client.complete(&msgs, &ToolSchema::both()).unwrap(), LlmTurn::Text("hi".into()));
        assert_eq!(client.complete(&msgs, &ToolSchema::both()).unwrap(), LlmTurn::Text("hi".into()));
        assert_eq!(transport.calls(), 1);
        for entry in walk(dir.path()) {
            assert!(!std::fs::read_to_string(entry).unwrap().contains("sk-secret"));
        }
    }

    fn walk(p: &std::path::Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(p).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else {
                out.push(path);
            }
        }
        out
    }
}
