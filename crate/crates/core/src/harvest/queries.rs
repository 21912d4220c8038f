use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::keywords::{text_of, KeywordProfile};
use super::{Intent, Strategy};
use crate::error::{Error, Result};
use crate::llm::{ChatMessage, Gateway};
use crate::prompts::{PromptLibrary, QUERY_GENERATION};

const MAX_QUERIES: usize = 10;
const MIN_QUERIES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyQuery {
    pub query: String,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyQuerySet {
    pub strategy: Strategy,
    pub intent: Intent,
    pub queries: Vec<StrategyQuery>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub fn synthesize_queries(
    gateway: &Gateway,
    prompts: &PromptLibrary,
    profile: &KeywordProfile,
) -> Result<Vec<StrategyQuerySet>> {
    let asset = prompts.get(QUERY_GENERATION);
    let keywords = profile.keywords_json();
    let user = asset.render_user(&[("keywords_json_str", &keywords)])?;
    let reply = gateway.chat_json(&[ChatMessage::system(asset.system()), ChatMessage::user(user)])?;
    Strategy::ALL.iter().map(|&s| parse_set(s, reply.get(s.json_key()))).collect()
}

fn parse_set(strategy: Strategy, raw: Option<&Value>) -> Result<StrategyQuerySet> {
    let key = strategy.json_key();
    let items = raw
        .and_then(Value::as_array)
        .ok_or_else(|| Error::MalformedOutput(format!("query set is missing `{key}`")))?;
    let mut queries: Vec<StrategyQuery> = items
        .iter()
        .filter_map(|item| match item {
            Value::String(q) => Some(StrategyQuery { query: q.clone(), reasoning: String::new() }),
            Value::Object(o) => Some(StrategyQuery {
                query: o.get("query").map(text_of).unwrap_or_default(),
                reasoning: o.get("reasoning").map(text_of).unwrap_or_default(),
            }),
            _ => None,
        })
        .filter(|q| !q.query.trim().is_empty())
        .collect();
    if queries.is_empty() {
        return Err(Error::MalformedOutput(format!("`{key}` has no usable queries")));
    }
    let mut warnings = Vec::new();
    if queries.len() > MAX_QUERIES {
        warnings.push(format!("{key}: {} queries, truncated to {MAX_QUERIES}", queries.len()));
        queries.truncate(MAX_QUERIES);
    } else if queries.len() < MIN_QUERIES {
        warnings.push(format!("{key}: only {} queries", queries.len()));
    }
    for w in &warnings {
        log::warn!("query synthesis: {w}");
    }
    Ok(StrategyQuerySet { strategy, intent: strategy.intent(), queries, warnings })
}
