//! OpenAI-compatible HTTP provider.
//!
//! Chat goes to `{base_url}/chat/completions`. Scoring uses the legacy
//! `{base_url}/completions` endpoint with `echo: true, logprobs: 0,
//! max_tokens: 0`, which returns logprobs for the prompt tokens themselves;
//! the tokens that fall inside the target span are kept. Servers that do not
//! support echo must be configured with `supports_echo_logprobs = false` and
//! then report `Unsupported`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatRequest, LlmProvider, ProviderReply, ResponseFormat, TokenLogprob};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_true")]
    pub supports_echo_logprobs: bool,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    600
}

fn default_true() -> bool {
    true
}

pub struct OpenAiCompatible {
    config: OpenAiConfig,
    name: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for OpenAiCompatible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiCompatible").field("config", &self.config).finish_non_exhaustive()
    }
}

impl OpenAiCompatible {
    pub fn new(config: OpenAiConfig) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; requests go out without authorization", config.api_key_env);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let name = format!("openai:{}", config.model);
        Ok(Self { config, name, api_key, client })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut req = self.client.post(&url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Provider(format!("POST {url}: {e}")))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Provider(format!("POST {url}: {e}")))?;
        if !status.is_success() {
            return Err(Error::Provider(format!("POST {url}: HTTP {status}: {}", super::gateway::truncate(&text, 300))));
        }
        serde_json::from_str(&text).map_err(|e| Error::Provider(format!("POST {url}: invalid JSON body: {e}")))
    }
}

impl LlmProvider for OpenAiCompatible {
    fn name(&self) -> &str {
        &self.name
    }

    fn chat(&self, request: &ChatRequest) -> Result<ProviderReply> {
        let body = chat_body(&self.config.model, request);
        parse_chat_response(&self.post("chat/completions", &body)?)
    }

    fn score(&self, prompt: &str, target: &str) -> Result<Vec<TokenLogprob>> {
        if !self.config.supports_echo_logprobs {
            return Err(Error::Unsupported(format!("{} cannot return forced-completion logprobs", self.name)));
        }
        let body = score_body(&self.config.model, prompt, target);
        parse_score_response(&self.post("completions", &body)?, prompt.len(), prompt.len() + target.len())
    }
}

pub(crate) fn chat_body(model: &str, request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": request.messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if request.response_format == ResponseFormat::JsonObject {
        body["response_format"] = json!({"type": "json_object"});
    }
    body
}

pub(crate) fn parse_chat_response(body: &Value) -> Result<ProviderReply> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Provider("response has no choices[0].message.content".into()))?;
    let usage = |k: &str| body.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok(ProviderReply {
        text: text.to_string(),
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
    })
}

pub(crate) fn score_body(model: &str, prompt: &str, target: &str) -> Value {
    json!({
        "model": model,
        "prompt": format!("{prompt}{target}"),
        "echo": true,
        "logprobs": 0,
        "max_tokens": 0,
        "temperature": 0.0,
    })
}

/// Keeps tokens whose byte offset lies in `[start, end)`.
pub(crate) fn parse_score_response(body: &Value, start: usize, end: usize) -> Result<Vec<TokenLogprob>> {
    let lp = body
        .pointer("/choices/0/logprobs")
        .ok_or_else(|| Error::Unsupported("response carries no logprobs".into()))?;
    let field = |k: &str| {
        lp.get(k)
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Unsupported(format!("logprobs.{k} missing")))
    };
    let tokens = field("tokens")?;
    let logprobs = field("token_logprobs")?;
    let offsets = field("text_offset")?;
    if tokens.len() != logprobs.len() || tokens.len() != offsets.len() {
        return Err(Error::Provider("logprob arrays differ in length".into()));
    }
    let mut out = Vec::new();
    for ((tok, lp), off) in tokens.iter().zip(logprobs).zip(offsets) {
        let off = off.as_u64().unwrap_or(0) as usize;
        if off < start || off >= end {
            continue;
        }
        let token = tok.as_str().unwrap_or_default().to_string();
        let logprob = lp
            .as_f64()
            .ok_or_else(|| Error::Provider(format!("token {token:?} has null logprob")))?;
        out.push(TokenLogprob::new(token, logprob));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;

    #[test]
    fn chat_body_sets_json_mode() {
        let req = ChatRequest {
            messages: vec![ChatMessage::user("hi")],
            response_format: ResponseFormat::JsonObject,
            temperature: 1.0,
            max_tokens: 32768,
        };
        let body = chat_body("m", &req);
        assert_eq!(body["response_format"]["type"], "json_object");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["max_tokens"], 32768);
    }

    #[test]
    fn parses_chat_reply() {
        let body = json!({
            "choices": [{"message": {"role": "assistant", "content": "ok"}}],
            "usage": {"prompt_tokens": 3, "completion_tokens": 1}
        });
        let reply = parse_chat_response(&body).unwrap();
        assert_eq!((reply.text.as_str(), reply.prompt_tokens, reply.completion_tokens), ("ok", 3, 1));
        assert!(parse_chat_response(&json!({"choices": []})).is_err());
    }

    #[test]
    fn keeps_only_target_span() {
        let prompt = "Answer:";
        let body = json!({"choices": [{"logprobs": {
            "tokens": ["Answer", ":", " 4", "2"],
            "token_logprobs": [null, -0.1, -0.5, -1.5],
            "text_offset": [0, 6, 7, 9]
        }}]});
        let toks = parse_score_response(&body, prompt.len(), prompt.len() + 3).unwrap();
        assert_eq!(toks, vec![TokenLogprob::new(" 4", -0.5), TokenLogprob::new("2", -1.5)]);
    }

    #[test]
    fn missing_logprobs_is_unsupported() {
        let body = json!({"choices": [{"text": "x"}]});
        assert!(matches!(parse_score_response(&body, 0, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn disabled_echo_is_unsupported() {
        let provider = OpenAiCompatible::new(OpenAiConfig {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            api_key_env: "NODESMITH_TEST_UNSET_KEY".into(),
            timeout_secs: 1,
            supports_echo_logprobs: false,
        })
        .unwrap();
        assert!(matches!(provider.score("p", "t"), Err(Error::Unsupported(_))));
    }
}
