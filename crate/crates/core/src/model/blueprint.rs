use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Reserved prompt slot filled with retrieved content at runtime.
pub const RETRIEVED_CONTEXT: &str = "retrieved_context";

/// The only tool a node may declare.
pub const SEARCH_TOOL: &str = "Search";

pub const SYSTEM_MARKER: &str = "System Prompt:";
pub const USER_MARKER: &str = "User Prompt:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    #[serde(rename = "LLM_Generator")]
    LlmGenerator,
    #[serde(rename = "Retrieval_RAG")]
    RetrievalRag,
}

impl NodeType {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::LlmGenerator => "LLM_Generator",
            NodeType::RetrievalRag => "Retrieval_RAG",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "LLM_Generator" => Some(NodeType::LlmGenerator),
            "Retrieval_RAG" => Some(NodeType::RetrievalRag),
            _ => None,
        }
    }

    /// Tools a node of this type must declare.
    pub fn required_tools(self) -> &'static [&'static str] {
        match self {
            NodeType::LlmGenerator => &[],
            NodeType::RetrievalRag => &[SEARCH_TOOL],
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Implementation {
    pub logic_description: String,
    pub prompt_template: String,
    pub tools_needed: Vec<String>,
}

/// One agent node. `all_code` is carried as opaque metadata and never run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeBlueprint {
    pub node_name: String,
    pub node_type: NodeType,
    pub description: String,
    pub dependencies: Vec<String>,
    #[serde(rename = "input")]
    pub input_keys: Vec<String>,
    #[serde(rename = "output")]
    pub output_keys: Vec<String>,
    pub constraints: String,
    pub implementation: Implementation,
    pub all_code: String,
    pub version: u32,
}

impl NodeBlueprint {
    pub fn prompt_template(&self) -> &str {
        &self.implementation.prompt_template
    }

    pub fn logic_description(&self) -> &str {
        &self.implementation.logic_description
    }

    pub fn tools_needed(&self) -> &[String] {
        &self.implementation.tools_needed
    }

    /// Placeholder names this node's prompt may reference.
    pub fn allowed_placeholders(&self) -> BTreeSet<&str> {
        let mut allowed: BTreeSet<&str> = self.input_keys.iter().map(String::as_str).collect();
        if self.node_type == NodeType::RetrievalRag {
            allowed.insert(RETRIEVED_CONTEXT);
        }
        allowed
    }

    /// The interface a refinement must not touch.
    pub fn same_interface(&self, other: &NodeBlueprint) -> bool {
        self.node_name == other.node_name
            && self.node_type == other.node_type
            && self.dependencies == other.dependencies
            && self.input_keys == other.input_keys
            && self.output_keys == other.output_keys
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSections<'a> {
    pub system: &'a str,
    pub user: &'a str,
}

/// Splits a prompt template on its "System Prompt:" / "User Prompt:" markers.
/// Returns `None` when either marker is absent.
pub fn split_prompt(template: &str) -> Option<PromptSections<'_>> {
    let sys = template.find(SYSTEM_MARKER)?;
    let usr = template.find(USER_MARKER)?;
    let sys_body = sys + SYSTEM_MARKER.len();
    let usr_body = usr + USER_MARKER.len();
    let (system, user) = if sys < usr {
        (&template[sys_body..usr], &template[usr_body..])
    } else {
        (&template[sys_body..], &template[usr_body..sys])
    };
    Some(PromptSections {
        system: system.trim(),
        user: user.trim(),
    })
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("static regex"))
}

/// `{name}` slots referenced by a prompt template, deduplicated and sorted.
pub fn placeholders(template: &str) -> BTreeSet<String> {
    placeholder_re()
        .captures_iter(template)
        .map(|c| c[1].to_string())
        .collect()
}

/// Replaces every `{name}` slot with its value; unknown slots stay verbatim.
pub(crate) fn fill_placeholders(template: &str, lookup: impl Fn(&str) -> Option<String>) -> String {
    placeholder_re()
        .replace_all(template, |caps: &regex::Captures<'_>| {
            lookup(&caps[1]).unwrap_or_else(|| caps[0].to_string())
        })
        .into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_finds_both_sections() {
        let t = "System Prompt: You judge.\nUser Prompt: Case: {case}";
        let s = split_prompt(t).unwrap();
        assert_eq!(s.system, "You judge.");
        assert_eq!(s.user, "Case: {case}");
        assert!(split_prompt("System Prompt: only").is_none());
    }

    #[test]
    fn placeholder_scan_ignores_json_braces() {
        let t = r#"User Prompt: {facts} then {{retrieved_context}} as {"verdict": "..."}"#;
        let names: Vec<_> = placeholders(t).into_iter().collect();
        assert_eq!(names, ["facts", "retrieved_context"]);
    }

    #[test]
    fn fill_leaves_unknown_slots() {
        let out = fill_placeholders("{a} and {b}", |k| (k == "a").then(|| "x".to_string()));
        assert_eq!(out, "x and {b}");
    }
}
