//! Chat-completion adapters for hosted providers.

use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use super::{estimate_tokens, transcript_tokens, BackendError, Completion, CompletionBackend, CompletionRequest};
use crate::prompting::Role;

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// 408, 429 and 5xx are worth retrying; any other non-success status is final.
fn status_error(status: u16, body: &str) -> BackendError {
    let msg = format!("HTTP {status}: {}", body.chars().take(500).collect::<String>());
    if status == 408 || status == 429 || status >= 500 {
        BackendError::Transport(msg)
    } else {
        BackendError::Rejected(msg)
    }
}

fn post_json(agent: &Agent, endpoint: &str, headers: &[(&str, &str)], body: &Value) -> Result<Value, BackendError> {
    let mut req = agent.post(endpoint).header("content-type", "application/json");
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let mut resp = req
        .send(body.to_string())
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| BackendError::Transport(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(status_error(status, &text));
    }
    serde_json::from_str(&text).map_err(|e| BackendError::Rejected(format!("unparseable provider response: {e}")))
}

pub struct OpenAiChat {
    endpoint: String,
    api_key: String,
    agent: Agent,
}

impl OpenAiChat {
    pub fn new(endpoint: String, api_key: String, timeout: Duration) -> Self {
        Self {
            endpoint,
            api_key,
            agent: agent(timeout),
        }
    }
}

impl CompletionBackend for OpenAiChat {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let messages: Vec<Value> = req
            .transcript
            .messages()
            .iter()
            .map(|m| json!({"role": role_name(m.role), "content": m.content}))
            .collect();
        let body = json!({
            "model": req.model.api_model(),
            "messages": messages,
            "temperature": req.temperature,
            "max_completion_tokens": req.model.max_output_tokens,
            "seed": req.seed,
        });
        let auth = format!("Bearer {}", self.api_key);
        let v = post_json(&self.agent, &self.endpoint, &[("authorization", &auth)], &body)?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError::Rejected("response has no message content".into()))?
            .to_string();
        Ok(Completion {
            input_tokens: v["usage"]["prompt_tokens"]
                .as_u64()
                .unwrap_or_else(|| transcript_tokens(req.transcript)),
            output_tokens: v["usage"]["completion_tokens"]
                .as_u64()
                .unwrap_or_else(|| estimate_tokens(&text)),
            text,
        })
    }
}

pub struct AnthropicMessages {
    endpoint: String,
    api_key: String,
    version: String,
    agent: Agent,
}

impl AnthropicMessages {
    pub fn new(endpoint: String, api_key: String, version: String, timeout: Duration) -> Self {
        Self {
            endpoint,
            api_key,
            version,
            agent: agent(timeout),
        }
    }
}

impl CompletionBackend for AnthropicMessages {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        let mut system = None;
        let mut messages = Vec::new();
        for m in req.transcript.messages() {
            match m.role {
                Role::System => system = Some(m.content.clone()),
                role => messages.push(json!({"role": role_name(role), "content": m.content})),
            }
        }
        let mut body = json!({
            "model": req.model.api_model(),
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.model.max_output_tokens,
        });
        if let Some(s) = system {
            body["system"] = Value::String(s);
        }
        let v = post_json(
            &self.agent,
            &self.endpoint,
            &[("x-api-key", &self.api_key), ("anthropic-version", &self.version)],
            &body,
        )?;
        let text: String = v["content"]
            .as_array()
            .ok_or_else(|| BackendError::Rejected("response has no content".into()))?
            .iter()
            .filter_map(|b| b["text"].as_str())
            .collect();
        Ok(Completion {
            input_tokens: v["usage"]["input_tokens"]
                .as_u64()
                .unwrap_or_else(|| transcript_tokens(req.transcript)),
            output_tokens: v["usage"]["output_tokens"]
                .as_u64()
                .unwrap_or_else(|| estimate_tokens(&text)),
            text,
        })
    }
}
