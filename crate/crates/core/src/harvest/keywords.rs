use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::buffer::ContextBuffer;
use crate::error::{Error, Result};
use crate::llm::{ChatMessage, Gateway};
use crate::prompts::{PromptLibrary, KEYWORD_EXTRACTION};

/// Dimension keys, in prompt order.
pub const DIMENSIONS: [&str; 7] = [
    "Domain",
    "Task",
    "Entities",
    "Actions",
    "Constraints",
    "Desired_Outcomes",
    "Implicit_Knowledge",
];

const MAX_TERMS: usize = 10;
const MIN_TERMS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordProfile {
    pub thinking: String,
    /// One entry per dimension, in [`DIMENSIONS`] order.
    pub dimensions: Vec<(String, Vec<String>)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl KeywordProfile {
    pub fn get(&self, dimension: &str) -> Option<&[String]> {
        self.dimensions.iter().find(|(k, _)| k == dimension).map(|(_, v)| v.as_slice())
    }

    /// The seven lists as one JSON object, keys in prompt order.
    pub fn keywords_json(&self) -> String {
        let mut out = String::from("{\n");
        for (i, (k, v)) in self.dimensions.iter().enumerate() {
            let sep = if i + 1 == self.dimensions.len() { "" } else { "," };
            out.push_str(&format!("  {}: {}{sep}\n", Value::from(k.as_str()), Value::from(v.clone())));
        }
        out.push('}');
        out
    }

    pub fn from_reply(obj: &Map<String, Value>) -> Result<Self> {
        let thinking = obj.get("thinking").map(text_of).unwrap_or_default();
        let answer = match obj.get("answer") {
            Some(Value::Object(a)) => a.clone(),
            Some(Value::String(s)) => crate::llm::json::extract_object(s)
                .ok_or_else(|| Error::MalformedOutput("keyword `answer` is not a JSON object".into()))?,
            _ => obj.clone(),
        };
        let mut warnings = Vec::new();
        let mut dimensions = Vec::with_capacity(DIMENSIONS.len());
        for dim in DIMENSIONS {
            let raw = answer
                .get(dim)
                .ok_or_else(|| Error::MalformedOutput(format!("keyword profile is missing `{dim}`")))?;
            let mut terms: Vec<String> = match raw {
                Value::Array(items) => items.iter().map(text_of).filter(|t| !t.trim().is_empty()).collect(),
                Value::String(s) if !s.trim().is_empty() => vec![s.clone()],
                _ => Vec::new(),
            };
            if terms.is_empty() {
                return Err(Error::MalformedOutput(format!("keyword dimension `{dim}` is empty")));
            }
            if terms.len() > MAX_TERMS {
                warnings.push(format!("{dim}: {} terms, truncated to {MAX_TERMS}", terms.len()));
                terms.truncate(MAX_TERMS);
            } else if terms.len() < MIN_TERMS {
                warnings.push(format!("{dim}: only {} terms", terms.len()));
            }
            dimensions.push((dim.to_string(), terms));
        }
        for w in &warnings {
            log::warn!("keyword profile: {w}");
        }
        Ok(Self { thinking, dimensions, warnings })
    }
}

pub(crate) fn text_of(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

pub fn extract_keywords(gateway: &Gateway, prompts: &PromptLibrary, buffer: &ContextBuffer) -> Result<KeywordProfile> {
    if buffer.samples.is_empty() {
        return Err(Error::Precondition("context buffer is empty".into()));
    }
    let asset = prompts.get(KEYWORD_EXTRACTION);
    let samples_text = buffer.render();
    let user = asset.render_user(&[("samples_text", &samples_text)])?;
    let reply = gateway.chat_json(&[ChatMessage::system(asset.system()), ChatMessage::user(user)])?;
    KeywordProfile::from_reply(&reply)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn full() -> Value {
        json!({
            "thinking": "civil damages",
            "answer": {
                "Domain": ["Law", "Civil litigation", "Torts", "Damages", "Courts"],
                "Task": ["Judgment prediction"],
                "Entities": ["Complaint"],
                "Actions": ["Extract"],
                "Constraints": ["Explainability"],
                "Desired_Outcomes": ["Accuracy"],
                "Implicit_Knowledge": ["Statute of limitations"]
            }
        })
    }

    #[test]
    fn parses_nested_answer() {
        let p = KeywordProfile::from_reply(full().as_object().unwrap()).unwrap();
        let names: Vec<_> = p.dimensions.iter().map(|(k, _)| k.as_str()).collect();
        assert_eq!(names, DIMENSIONS);
        assert_eq!(p.get("Task").unwrap(), ["Judgment prediction"]);
        assert_eq!(p.warnings.len(), 6);
    }

    #[test]
    fn missing_dimension_named() {
        let mut v = full();
        v["answer"].as_object_mut().unwrap().remove("Implicit_Knowledge");
        let err = KeywordProfile::from_reply(v.as_object().unwrap()).unwrap_err();
        assert!(matches!(&err, Error::MalformedOutput(m) if m.contains("Implicit_Knowledge")));
    }

    #[test]
    fn long_lists_truncated() {
        let mut v = full();
        v["answer"]["Domain"] = json!((0..12).map(|i| format!("t{i}")).collect::<Vec<_>>());
        let p = KeywordProfile::from_reply(v.as_object().unwrap()).unwrap();
        assert_eq!(p.get("Domain").unwrap().len(), 10);
    }

    #[test]
    fn keywords_json_keeps_prompt_order() {
        let p = KeywordProfile::from_reply(full().as_object().unwrap()).unwrap();
        let text = p.keywords_json();
        assert!(text.find("\"Domain\"").unwrap() < text.find("\"Implicit_Knowledge\"").unwrap());
        assert!(serde_json::from_str::<Value>(&text).is_ok());
    }
}
