use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::controller::SearchSession;
use super::Strategy;
use crate::error::{Error, Result};
use crate::llm::{ChatMessage, Gateway};
use crate::prompts::PromptLibrary;

/// Characters of document text per strategy.
pub const DEFAULT_CHAR_BUDGET: usize = 60_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyAnalysis {
    pub strategy: Strategy,
    pub payload: Map<String, Value>,
    /// Ids of the sessions the documents came from.
    pub source_sessions: Vec<String>,
    #[serde(default)]
    pub truncated: bool,
}

/// Session summaries followed by raw snippets, cut at `budget` characters.
pub fn render_files_text(sessions: &[(String, &SearchSession)], budget: usize) -> (String, bool) {
    let mut docs = Vec::new();
    for (id, s) in sessions {
        let mut doc = format!("## {id} [{}]\nTarget: {}\n", s.engine_kind, s.target_description);
        if !s.final_summary.trim().is_empty() {
            doc.push_str(&format!("Summary: {}\n", s.final_summary.trim()));
        }
        for (i, h) in s.hits().enumerate() {
            doc.push_str(&format!("[{}] {}\n{}\n{}\n", i + 1, h.title, h.url, h.content.trim()));
        }
        docs.push(doc);
    }
    let full = docs.join("\n");
    match full.char_indices().nth(budget) {
        Some((cut, _)) => (full[..cut].to_string(), true),
        None => (full, false),
    }
}

pub fn analyze_strategy(
    gateway: &Gateway,
    prompts: &PromptLibrary,
    strategy: Strategy,
    sessions: &[(String, &SearchSession)],
    task_thinking: &str,
    char_budget: usize,
) -> Result<StrategyAnalysis> {
    if !sessions.iter().any(|(_, s)| s.has_content()) {
        return Err(Error::Precondition(format!("strategy {strategy} has no session with content")));
    }
    let (files_text, truncated) = render_files_text(sessions, char_budget);
    if truncated {
        log::info!("strategy {strategy}: documents truncated to {char_budget} chars");
    }
    let asset = prompts.get(strategy.analysis_asset());
    let user = asset.render_user(&[
        ("task_thinking", task_thinking),
        ("strategy_name", strategy.title()),
        ("files_text", &files_text),
    ])?;
    let payload = gateway.chat_json(&[ChatMessage::system(asset.system()), ChatMessage::user(user)])?;
    check_payload(strategy, &payload)?;
    Ok(StrategyAnalysis {
        strategy,
        payload,
        source_sessions: sessions.iter().map(|(id, _)| id.clone()).collect(),
        truncated,
    })
}

pub(crate) fn check_payload(strategy: Strategy, payload: &Map<String, Value>) -> Result<()> {
    let missing: Vec<&str> = strategy.required_keys().iter().copied().filter(|k| !payload.contains_key(*k)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MalformedOutput(format!(
            "strategy {strategy} analysis is missing {}",
            missing.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", ")
        )))
    }
}
