//! Scripted, deterministic provider for tests and offline runs.
//!
//! A script is a list of rules. Chat rules match on substrings of the system
//! text, the user text, or either; score rules match on the scoring prompt and
//! target. The first matching rule wins. A rule with several `responses`
//! returns them in order and then keeps repeating the last one; that state is
//! per rule, so only use sequences for calls that happen sequentially.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{fingerprint, ChatRequest, LlmProvider, ProviderReply, Role, TokenLogprob};
use crate::canonical::sort_keys;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageOverride {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRule {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub system_contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub user_contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub not_contains: Vec<String>,
    /// Zero-based index of the chat call in the provider's transcript.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    /// A string is returned verbatim; any other JSON value is serialized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responses: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<UsageOverride>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRule {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub not_contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Exact token table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<TokenLogprob>>,
    /// Every mock token of the target gets this logprob.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_logprob: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFallback {
    /// Unmatched scoring requests fail.
    #[default]
    Error,
    /// Hash-derived logprobs in [-2.05, -0.05).
    Synthetic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub chat: Vec<ChatRule>,
    #[serde(default)]
    pub score: Vec<ScoreRule>,
    #[serde(default)]
    pub chat_fallback: Option<Value>,
    #[serde(default)]
    pub score_fallback: ScoreFallback,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        crate::canonical::read_json(path)
    }

    pub fn push_chat_text(&mut self, user_contains: &[&str], response: &str) {
        self.chat.push(ChatRule {
            user_contains: user_contains.iter().map(|s| s.to_string()).collect(),
            response: Some(Value::String(response.into())),
            ..ChatRule::default()
        });
    }

    pub fn push_chat_json(&mut self, system_contains: &[&str], response: Value) {
        self.chat.push(ChatRule {
            system_contains: system_contains.iter().map(|s| s.to_string()).collect(),
            response: Some(response),
            ..ChatRule::default()
        });
    }

    pub fn push_chat_sequence(&mut self, user_contains: &[&str], responses: &[&str]) {
        self.chat.push(ChatRule {
            user_contains: user_contains.iter().map(|s| s.to_string()).collect(),
            responses: responses.iter().map(|r| Value::String(r.to_string())).collect(),
            ..ChatRule::default()
        });
    }

    pub fn push_score_mean(&mut self, contains: &[&str], mean_logprob: f64) {
        self.score.push(ScoreRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            mean_logprob: Some(mean_logprob),
            ..ScoreRule::default()
        });
    }
}

/// One recorded provider call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockCall {
    Chat { system: String, user: String },
    Score { prompt: String, target: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatCallRecord {
    pub system: String,
    pub user: String,
}

pub struct MockProvider {
    name: String,
    script: MockScript,
    chat_hits: Vec<AtomicUsize>,
    chat_position: AtomicUsize,
    log: Mutex<Vec<MockCall>>,
}

impl std::fmt::Debug for MockProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockProvider").field("name", &self.name).finish_non_exhaustive()
    }
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        Self::named("mock", script)
    }

    pub fn named(name: impl Into<String>, script: MockScript) -> Self {
        let chat_hits = script.chat.iter().map(|_| AtomicUsize::new(0)).collect();
        Self {
            name: name.into(),
            script,
            chat_hits,
            chat_position: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let name = format!("mock:{}", path.file_name().and_then(|n| n.to_str()).unwrap_or("script"));
        Ok(Self::named(name, MockScript::load(path)?))
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.log.lock().expect("mock log").clone()
    }

    pub fn chat_calls(&self) -> Vec<ChatCallRecord> {
        self.calls()
            .into_iter()
            .filter_map(|c| match c {
                MockCall::Chat { system, user } => Some(ChatCallRecord { system, user }),
                MockCall::Score { .. } => None,
            })
            .collect()
    }

    pub fn score_calls(&self) -> Vec<(String, String)> {
        self.calls()
            .into_iter()
            .filter_map(|c| match c {
                MockCall::Score { prompt, target } => Some((prompt, target)),
                MockCall::Chat { .. } => None,
            })
            .collect()
    }

    fn record(&self, call: MockCall) {
        self.log.lock().expect("mock log").push(call);
    }
}

fn all_in(needles: &[String], hay: &str) -> bool {
    needles.iter().all(|n| hay.contains(n.as_str()))
}

fn none_in(needles: &[String], hay: &str) -> bool {
    !needles.iter().any(|n| hay.contains(n.as_str()))
}

fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => sort_keys(other.clone()).to_string(),
    }
}

impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn chat(&self, request: &ChatRequest) -> Result<ProviderReply> {
        let position = self.chat_position.fetch_add(1, Ordering::SeqCst);
        let join = |pred: fn(Role) -> bool| {
            request
                .messages
                .iter()
                .filter(|m| pred(m.role))
                .map(|m| m.content.as_str())
                .collect::<Vec<_>>()
                .join("\n")
        };
        let system = join(|r| r == Role::System);
        let user = join(|r| r != Role::System);
        let all = format!("{system}\n{user}");
        self.record(MockCall::Chat { system: system.clone(), user: user.clone() });

        let hit = self.script.chat.iter().enumerate().find(|(_, rule)| {
            all_in(&rule.system_contains, &system)
                && all_in(&rule.user_contains, &user)
                && all_in(&rule.contains, &all)
                && none_in(&rule.not_contains, &all)
                && rule.position.map_or(true, |p| p == position)
        });
        let (text, usage) = match hit {
            Some((idx, rule)) => {
                let n = self.chat_hits[idx].fetch_add(1, Ordering::SeqCst);
                let value = if rule.responses.is_empty() {
                    rule.response.as_ref()
                } else {
                    rule.responses.get(n.min(rule.responses.len() - 1))
                };
                let value = value.ok_or_else(|| Error::Provider(format!("mock chat rule {idx} has no response")))?;
                (render_value(value), rule.usage)
            }
            None => match &self.script.chat_fallback {
                Some(v) => (render_value(v), None),
                None => {
                    return Err(Error::Provider(format!(
                        "{}: no scripted chat response (system starts {:?})",
                        self.name,
                        crate::llm::gateway::truncate(&system, 80)
                    )))
                }
            },
        };
        let usage = usage.unwrap_or(UsageOverride {
            prompt_tokens: mock_tokenize(&all).len() as u64,
            completion_tokens: mock_tokenize(&text).len() as u64,
        });
        Ok(ProviderReply {
            text,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
        })
    }

    fn score(&self, prompt: &str, target: &str) -> Result<Vec<TokenLogprob>> {
        self.record(MockCall::Score { prompt: prompt.into(), target: target.into() });
        let fp = fingerprint(prompt);
        let rule = self.script.score.iter().find(|rule| {
            all_in(&rule.contains, prompt)
                && none_in(&rule.not_contains, prompt)
                && rule.fingerprint.as_ref().map_or(true, |f| *f == fp)
                && rule.target.as_ref().map_or(true, |t| t == target)
        });
        match rule {
            Some(ScoreRule { tokens: Some(tokens), .. }) => Ok(tokens.clone()),
            Some(ScoreRule { mean_logprob: Some(lp), .. }) => {
                Ok(mock_tokenize(target).into_iter().map(|t| TokenLogprob::new(t, *lp)).collect())
            }
            Some(_) => Err(Error::Provider(format!("{}: score rule has neither tokens nor mean_logprob", self.name))),
            None => match self.script.score_fallback {
                ScoreFallback::Synthetic => Ok(synthetic_logprobs(prompt, target)),
                ScoreFallback::Error => Err(Error::Provider(format!("{}: no scripted score", self.name))),
            },
        }
    }
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\s*(?:\w+|[^\w\s])|\s+").expect("static regex"))
}

/// Word-level tokenization that keeps leading whitespace on each token, so
/// the tokens concatenate back to the input.
pub fn mock_tokenize(text: &str) -> Vec<String> {
    token_re().find_iter(text).map(|m| m.as_str().to_string()).collect()
}

fn synthetic_logprobs(prompt: &str, target: &str) -> Vec<TokenLogprob> {
    mock_tokenize(target)
        .into_iter()
        .enumerate()
        .map(|(i, tok)| {
            let mut h = Sha256::new();
            h.update(prompt.as_bytes());
            h.update([0]);
            h.update(target.as_bytes());
            h.update((i as u64).to_le_bytes());
            let bytes = h.finalize();
            let raw = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
            let unit = (raw >> 11) as f64 / (1u64 << 53) as f64;
            TokenLogprob::new(tok, -(0.05 + 2.0 * unit))
        })
        .collect()
}
