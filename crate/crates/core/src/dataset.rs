//! Line-delimited JSON datasets with configurable question/answer fields.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub question: String,
    pub answer: String,
}

impl Sample {
    pub fn new(id: impl Into<String>, question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self { id: id.into(), question: question.into(), answer: answer.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMap {
    #[serde(default = "default_question")]
    pub question: String,
    #[serde(default = "default_answer")]
    pub answer: String,
    /// Optional id field; records without one get `sample_<line>`.
    #[serde(default)]
    pub id: Option<String>,
}

fn default_question() -> String {
    "question".into()
}

fn default_answer() -> String {
    "answer".into()
}

impl Default for FieldMap {
    fn default() -> Self {
        Self { question: default_question(), answer: default_answer(), id: None }
    }
}

fn field_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn parse_jsonl(text: &str, fields: &FieldMap, origin: &str) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let bad = |msg: String| Error::Schema { path: format!("{origin}:{lineno}"), message: msg };
        let record: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let get = |key: &str| record.get(key).map(field_text).ok_or_else(|| bad(format!("missing field `{key}`")));
        let id = match &fields.id {
            Some(key) => get(key)?,
            None => format!("sample_{lineno:04}"),
        };
        out.push(Sample { id, question: get(&fields.question)?, answer: get(&fields.answer)? });
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path, fields: &FieldMap) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, fields, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_fields_and_numbers_ids() {
        let text = "{\"q\": \"2+2?\", \"a\": 4}\n\n{\"q\": \"x\", \"a\": \"y\"}\n";
        let fields = FieldMap { question: "q".into(), answer: "a".into(), id: None };
        let samples = parse_jsonl(text, &fields, "mem").unwrap();
        assert_eq!(samples[0], Sample::new("sample_0001", "2+2?", "4"));
        assert_eq!(samples[1].id, "sample_0003");
    }

    #[test]
    fn missing_field_names_line() {
        let err = parse_jsonl("{\"question\": \"x\"}", &FieldMap::default(), "d.jsonl").unwrap_err();
        assert!(err.to_string().contains("d.jsonl:1"));
        assert!(err.to_string().contains("answer"));
    }
}
