//! Model access for the two roles: the Designer (chat, optionally JSON) and
//! the Executor (chat plus forced-completion token scoring).

pub(crate) mod gateway;
pub mod json;
mod live;
mod mock;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use gateway::{Gateway, Rates, SamplingParams, REPAIR_INSTRUCTION};
pub use live::{OpenAiCompatible, OpenAiConfig};
pub use mock::{
    mock_tokenize, ChatCallRecord, ChatRule, MockCall, MockProvider, MockScript, ScoreFallback, ScoreRule,
    UsageOverride,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseFormat {
    Normal,
    JsonObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub response_format: ResponseFormat,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Raw provider answer before gateway accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    /// Natural-log probability, never positive.
    pub logprob: f64,
}

impl TokenLogprob {
    pub fn new(token: impl Into<String>, logprob: f64) -> Self {
        Self { token: token.into(), logprob }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionScore {
    pub tokens: Vec<TokenLogprob>,
    pub prompt_fingerprint: String,
}

impl CompletionScore {
    pub fn logprobs(&self) -> impl Iterator<Item = f64> + '_ {
        self.tokens.iter().map(|t| t.logprob)
    }

    pub fn text(&self) -> String {
        self.tokens.iter().map(|t| t.token.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// USD.
    pub cost: f64,
}

/// A chat reply after any repair round, with the usage of every provider
/// call it took.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatOutcome {
    pub text: String,
    pub usage: UsageRecord,
}

/// A model backend. Implementations must be safe to call from several
/// threads at once.
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    fn chat(&self, request: &ChatRequest) -> Result<ProviderReply>;

    /// Forced-completion scoring: logprob of each `target` token given `prompt`.
    fn score(&self, prompt: &str, target: &str) -> Result<Vec<TokenLogprob>>;
}

/// Fingerprint of a scoring prompt (sha-256 hex).
pub fn fingerprint(text: &str) -> String {
    crate::canonical::sha256_hex(text)
}
