use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::json::extract_object;
use super::{
    fingerprint, ChatMessage, ChatOutcome, ChatRequest, CompletionScore, LlmProvider,
    ResponseFormat, Role, UsageRecord,
};
use crate::error::{Error, Result};

/// Follow-up instruction for the single JSON repair round.
pub const REPAIR_INSTRUCTION: &str = "Your previous reply was not a valid JSON object. \
Re-emit your answer as a single valid JSON object only, with no text before or after it.";

/// USD per token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    #[serde(default)]
    pub input_per_token: f64,
    #[serde(default)]
    pub output_per_token: f64,
}

impl Rates {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        prompt_tokens as f64 * self.input_per_token + completion_tokens as f64 * self.output_per_token
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { temperature: 1.0, max_tokens: 32768 }
    }
}

/// Front door to one provider. Usage counters are atomics, so a gateway can
/// be shared across threads behind an `Arc`.
pub struct Gateway {
    provider: Arc<dyn LlmProvider>,
    rates: Rates,
    sampling: SamplingParams,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
    provider_chat_calls: AtomicU64,
    score_calls: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.name())
            .field("rates", &self.rates)
            .field("sampling", &self.sampling)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn LlmProvider>) -> Self {
        Self {
            provider,
            rates: Rates::default(),
            sampling: SamplingParams::default(),
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
            provider_chat_calls: AtomicU64::new(0),
            score_calls: AtomicU64::new(0),
        }
    }

    pub fn with_rates(mut self, rates: Rates) -> Self {
        self.rates = rates;
        self
    }

    pub fn with_sampling(mut self, sampling: SamplingParams) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn chat(&self, messages: &[ChatMessage], format: ResponseFormat) -> Result<ChatOutcome> {
        check_messages(messages)?;
        let mut request = ChatRequest {
            messages: messages.to_vec(),
            response_format: format,
            temperature: self.sampling.temperature,
            max_tokens: self.sampling.max_tokens,
        };
        let mut usage = UsageRecord::default();
        let first = self.call(&request, &mut usage)?;
        if format == ResponseFormat::Normal {
            return Ok(ChatOutcome { text: first, usage });
        }
        if let Some(obj) = extract_object(&first) {
            return Ok(ChatOutcome { text: object_text(&first, obj), usage });
        }

        log::debug!("reply from {} is not a JSON object; issuing repair round", self.provider.name());
        request.messages.push(ChatMessage::assistant(first));
        request.messages.push(ChatMessage::user(REPAIR_INSTRUCTION));
        let second = self.call(&request, &mut usage)?;
        match extract_object(&second) {
            Some(obj) => Ok(ChatOutcome { text: object_text(&second, obj), usage }),
            None => Err(Error::MalformedOutput(format!(
                "reply is not a JSON object after one repair round: {}",
                truncate(&second, 200)
            ))),
        }
    }

    /// JSON-object chat, returning the parsed object.
    pub fn chat_json(&self, messages: &[ChatMessage]) -> Result<Map<String, Value>> {
        let outcome = self.chat(messages, ResponseFormat::JsonObject)?;
        match serde_json::from_str(&outcome.text) {
            Ok(Value::Object(map)) => Ok(map),
            _ => unreachable!("chat returns validated object text"),
        }
    }

    pub fn score_completion(&self, prompt: &str, target: &str) -> Result<CompletionScore> {
        if target.is_empty() {
            return Err(Error::Precondition("scoring target must be non-empty".into()));
        }
        self.score_calls.fetch_add(1, Ordering::Relaxed);
        let tokens = self.provider.score(prompt, target)?;
        if tokens.is_empty() {
            return Err(Error::Provider(format!("{} returned no tokens", self.provider.name())));
        }
        if let Some(bad) = tokens.iter().find(|t| t.logprob.is_nan() || t.logprob > 0.0) {
            return Err(Error::Provider(format!(
                "{} returned invalid logprob {} for token {:?}",
                self.provider.name(),
                bad.logprob,
                bad.token
            )));
        }
        // Tokenizers commonly attach the separating space to the first target
        // token, so edge whitespace is not compared.
        let joined: String = tokens.iter().map(|t| t.token.as_str()).collect();
        if joined.trim() != target.trim() {
            return Err(Error::Provider(format!(
                "{} tokens do not reassemble the target ({joined:?} vs {target:?})",
                self.provider.name()
            )));
        }
        Ok(CompletionScore { tokens, prompt_fingerprint: fingerprint(prompt) })
    }

    /// Totals since construction.
    pub fn usage_summary(&self) -> UsageRecord {
        let prompt_tokens = self.prompt_tokens.load(Ordering::SeqCst);
        let completion_tokens = self.completion_tokens.load(Ordering::SeqCst);
        UsageRecord {
            prompt_tokens,
            completion_tokens,
            cost: self.rates.cost(prompt_tokens, completion_tokens),
        }
    }

    /// Provider chat calls issued, repair rounds included.
    pub fn chat_call_count(&self) -> u64 {
        self.provider_chat_calls.load(Ordering::SeqCst)
    }

    pub fn score_call_count(&self) -> u64 {
        self.score_calls.load(Ordering::SeqCst)
    }

    fn call(&self, request: &ChatRequest, usage: &mut UsageRecord) -> Result<String> {
        self.provider_chat_calls.fetch_add(1, Ordering::SeqCst);
        let reply = self.provider.chat(request)?;
        self.prompt_tokens.fetch_add(reply.prompt_tokens, Ordering::SeqCst);
        self.completion_tokens.fetch_add(reply.completion_tokens, Ordering::SeqCst);
        usage.prompt_tokens += reply.prompt_tokens;
        usage.completion_tokens += reply.completion_tokens;
        usage.cost = self.rates.cost(usage.prompt_tokens, usage.completion_tokens);
        Ok(reply.text)
    }
}

fn check_messages(messages: &[ChatMessage]) -> Result<()> {
    let Some(first) = messages.first() else {
        return Err(Error::Precondition("chat needs at least one message".into()));
    };
    if first.role == Role::Assistant {
        return Err(Error::Precondition("first message must be system or user".into()));
    }
    if let Some(m) = messages.iter().find(|m| m.role != Role::Assistant && m.content.trim().is_empty()) {
        return Err(Error::Precondition(format!("{:?} message has empty content", m.role)));
    }
    Ok(())
}

/// Keeps the provider's own text when it already is the bare object.
fn object_text(raw: &str, obj: Map<String, Value>) -> String {
    let trimmed = raw.trim();
    match serde_json::from_str::<Value>(trimmed) {
        Ok(Value::Object(_)) => trimmed.to_string(),
        _ => Value::Object(obj).to_string(),
    }
}

pub(crate) fn truncate(text: &str, max_chars: usize) -> String {
    match text.char_indices().nth(max_chars) {
        Some((idx, _)) => format!("{}…", &text[..idx]),
        None => text.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatRule, MockProvider, MockScript, ScoreRule, TokenLogprob, UsageOverride};

    fn gateway(script: MockScript) -> (Arc<MockProvider>, Gateway) {
        let mock = Arc::new(MockProvider::new(script));
        let gw = Gateway::new(mock.clone());
        (mock, gw)
    }

    #[test]
    fn scripted_echo() {
        let mut script = MockScript::default();
        script.push_chat_text(&[], r#"{"done": true, "summary": "x"}"#);
        let (_, gw) = gateway(script);
        let out = gw.chat(&[ChatMessage::user("hi")], ResponseFormat::JsonObject).unwrap();
        assert_eq!(out.text, r#"{"done": true, "summary": "x"}"#);
    }

    #[test]
    fn prose_triggers_exactly_one_repair() {
        let mut script = MockScript::default();
        script.push_chat_sequence(&[], &["Sure, the answer is yes.", r#"{"answer": "yes"}"#]);
        let (mock, gw) = gateway(script);
        let obj = gw.chat_json(&[ChatMessage::user("q")]).unwrap();
        assert_eq!(obj["answer"], "yes");
        assert_eq!(mock.chat_calls().len(), 2);
        assert!(mock.chat_calls()[1].user.contains("single valid JSON object"));
    }

    #[test]
    fn second_invalid_reply_is_malformed() {
        let mut script = MockScript::default();
        script.push_chat_sequence(&[], &["nope", "still nope"]);
        let (mock, gw) = gateway(script);
        let err = gw.chat(&[ChatMessage::user("q")], ResponseFormat::JsonObject).unwrap_err();
        assert!(matches!(err, Error::MalformedOutput(_)));
        assert_eq!(mock.chat_calls().len(), 2);
    }

    #[test]
    fn empty_messages_rejected() {
        let (_, gw) = gateway(MockScript::default());
        assert!(matches!(gw.chat(&[], ResponseFormat::Normal), Err(Error::Precondition(_))));
        let assistant_first = [ChatMessage::assistant("x")];
        assert!(matches!(gw.chat(&assistant_first, ResponseFormat::Normal), Err(Error::Precondition(_))));
    }

    #[test]
    fn usage_sums_and_costs() {
        let mut script = MockScript::default();
        script.chat.push(ChatRule {
            user_contains: vec!["first".into()],
            response: Some("a".into()),
            usage: Some(UsageOverride { prompt_tokens: 10, completion_tokens: 5 }),
            ..ChatRule::default()
        });
        script.chat.push(ChatRule {
            user_contains: vec!["second".into()],
            response: Some("b".into()),
            usage: Some(UsageOverride { prompt_tokens: 20, completion_tokens: 7 }),
            ..ChatRule::default()
        });
        let (_, gw) = gateway(script);
        let gw = gw.with_rates(Rates { input_per_token: 0.25, output_per_token: 2.0 });
        assert_eq!(gw.usage_summary(), UsageRecord::default());
        gw.chat(&[ChatMessage::user("first")], ResponseFormat::Normal).unwrap();
        let mid = gw.usage_summary();
        gw.chat(&[ChatMessage::user("second")], ResponseFormat::Normal).unwrap();
        let total = gw.usage_summary();
        assert!(total.prompt_tokens >= mid.prompt_tokens);
        assert_eq!((total.prompt_tokens, total.completion_tokens), (30, 12));
        assert_eq!(total.cost, 0.25 * 30.0 + 2.0 * 12.0);
    }

    #[test]
    fn table_lookup_scoring() {
        let prompt = "Question: 6*7?\n\nReasoning so far:\n\n\nAnswer:";
        let mut script = MockScript::default();
        script.score.push(ScoreRule {
            fingerprint: Some(fingerprint(prompt)),
            target: Some("42".into()),
            tokens: Some(vec![TokenLogprob::new(" 4", -0.5), TokenLogprob::new("2", -1.5)]),
            ..ScoreRule::default()
        });
        let (_, gw) = gateway(script);
        let score = gw.score_completion(prompt, "42").unwrap();
        assert_eq!(score.tokens, vec![TokenLogprob::new(" 4", -0.5), TokenLogprob::new("2", -1.5)]);
        assert_eq!(score.prompt_fingerprint, fingerprint(prompt));
        assert_eq!(gw.score_completion(prompt, "42").unwrap(), score);
    }

    #[test]
    fn tokens_must_reassemble_target() {
        let mut script = MockScript::default();
        script.score.push(ScoreRule {
            tokens: Some(vec![TokenLogprob::new("4", -0.5)]),
            ..ScoreRule::default()
        });
        let (_, gw) = gateway(script);
        assert!(matches!(gw.score_completion("p", "42"), Err(Error::Provider(_))));
    }

    #[test]
    fn empty_target_rejected() {
        let (_, gw) = gateway(MockScript::default());
        assert!(matches!(gw.score_completion("p", ""), Err(Error::Precondition(_))));
    }

    #[test]
    fn positive_logprob_rejected() {
        let mut script = MockScript::default();
        script.score.push(ScoreRule {
            tokens: Some(vec![TokenLogprob::new("x", 0.1)]),
            ..ScoreRule::default()
        });
        let (_, gw) = gateway(script);
        assert!(matches!(gw.score_completion("p", "x"), Err(Error::Provider(_))));
    }
}
