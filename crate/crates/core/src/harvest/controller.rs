use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::keywords::text_of;
use super::search::{SearchBackend, SearchHit};
use super::EngineKind;
use crate::error::{Error, Result};
use crate::llm::gateway::truncate;
use crate::llm::{ChatMessage, Gateway};
use crate::prompts::{PromptLibrary, MULTI_TURN_SEARCH};

/// Per-hit content shown back to the controller in the round history.
const HISTORY_SNIPPET_CHARS: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerDecision {
    pub done: bool,
    pub need_search: bool,
    pub next_query: String,
    pub reasoning: String,
    pub summary: String,
}

impl ControllerDecision {
    fn from_reply(obj: &Map<String, Value>) -> Result<Self> {
        let flag = |key: &str| -> Result<Option<bool>> {
            match obj.get(key) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::Bool(b)) => Ok(Some(*b)),
                Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => Ok(Some(true)),
                Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => Ok(Some(false)),
                Some(other) => Err(Error::MalformedOutput(format!("controller `{key}` is not a boolean: {other}"))),
            }
        };
        let done = flag("done")?.ok_or_else(|| Error::MalformedOutput("controller reply lacks `done`".into()))?;
        let text = |key: &str| obj.get(key).map(text_of).unwrap_or_default();
        Ok(Self {
            done,
            need_search: flag("need_search")?.unwrap_or(!done),
            next_query: text("next_query"),
            reasoning: text("reasoning"),
            summary: text("summary"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRound {
    pub decision: ControllerDecision,
    /// Query executed this round; empty when the controller stopped.
    pub query: String,
    pub raw_results: Vec<SearchHit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSession {
    pub target_description: String,
    pub engine_kind: EngineKind,
    pub rounds: Vec<SearchRound>,
    pub final_summary: String,
    pub completed: bool,
}

impl SearchSession {
    pub fn hits(&self) -> impl Iterator<Item = &SearchHit> {
        self.rounds.iter().flat_map(|r| r.raw_results.iter())
    }

    pub fn has_content(&self) -> bool {
        !self.final_summary.trim().is_empty() || self.hits().any(|h| !h.content.trim().is_empty())
    }

    /// Summary if the controller finished, otherwise the raw snippets.
    pub fn context_text(&self) -> String {
        if self.completed {
            return self.final_summary.clone();
        }
        self.hits()
            .map(|h| format!("{}\n{}\n{}", h.title, h.url, h.content))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn render_history(rounds: &[SearchRound]) -> String {
    if rounds.is_empty() {
        return "None".into();
    }
    let mut out = String::new();
    for (i, r) in rounds.iter().enumerate() {
        out.push_str(&format!("\nRound {}: query = {:?}\n", i + 1, r.query));
        if let Some(err) = &r.error {
            out.push_str(&format!("  search failed: {err}\n"));
        } else if r.raw_results.is_empty() {
            out.push_str("  no results\n");
        }
        for (j, h) in r.raw_results.iter().enumerate() {
            out.push_str(&format!(
                "  [{}] {} ({})\n      {}\n",
                j + 1,
                h.title,
                h.url,
                truncate(&h.content, HISTORY_SNIPPET_CHARS).replace('\n', " ")
            ));
        }
    }
    out
}

/// Controller loop: ask, stop if done, else search and ask again, for at most
/// `max_rounds` controller decisions.
pub fn run_multi_turn_search(
    gateway: &Gateway,
    prompts: &PromptLibrary,
    target: &str,
    kind: EngineKind,
    backend: &dyn SearchBackend,
    max_rounds: usize,
) -> Result<SearchSession> {
    if max_rounds == 0 {
        return Err(Error::Precondition("max_rounds must be at least 1".into()));
    }
    let asset = prompts.get(MULTI_TURN_SEARCH);
    let hint = asset.hint(kind.as_str())?;
    let mut session = SearchSession {
        target_description: target.to_string(),
        engine_kind: kind,
        rounds: Vec::new(),
        final_summary: String::new(),
        completed: false,
    };
    for round in 1..=max_rounds {
        let user = asset.render_user(&[
            ("target_description", target),
            ("round_idx", &round.to_string()),
            ("max_rounds", &max_rounds.to_string()),
            ("history_str", &render_history(&session.rounds)),
            ("engine_type", kind.as_str()),
            ("engine_hint", hint),
        ])?;
        let reply = gateway.chat_json(&[ChatMessage::system(asset.system()), ChatMessage::user(user)])?;
        let decision = ControllerDecision::from_reply(&reply)?;
        if decision.done {
            if decision.summary.trim().is_empty() {
                return Err(Error::MalformedOutput("controller stopped with an empty summary".into()));
            }
            session.final_summary = decision.summary.clone();
            session.completed = true;
            session.rounds.push(SearchRound { decision, query: String::new(), raw_results: Vec::new(), error: None });
            break;
        }
        let query = decision.next_query.trim().to_string();
        let (raw_results, error) = if query.is_empty() {
            (Vec::new(), Some("controller proposed no query".to_string()))
        } else {
            match backend.search(&query, kind) {
                Ok(hits) => (hits, None),
                Err(e) => {
                    log::warn!("{} search for {query:?} failed: {e}", backend.name());
                    (Vec::new(), Some(e.to_string()))
                }
            }
        };
        session.rounds.push(SearchRound { decision, query, raw_results, error });
    }
    Ok(session)
}
