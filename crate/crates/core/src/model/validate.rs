use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::blueprint::{placeholders, split_prompt, NodeBlueprint, SYSTEM_MARKER, USER_MARKER};
use super::graph::build_graph;
use super::library::{NodeLibrary, Source, INITIAL_FIELDS};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DisallowedNodeType,
    ToolsTypeMismatch,
    MissingPromptSection,
    UnknownPlaceholder,
    InvalidIdentifier,
    DuplicateKey,
    DuplicateNode,
    DanglingDependency,
    Cycle,
    UnresolvedInput,
    InvalidSource,
    SinkCount,
    FinalAnswer,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::DisallowedNodeType => "disallowed node type",
            ViolationKind::ToolsTypeMismatch => "tools/type mismatch",
            ViolationKind::MissingPromptSection => "missing prompt section",
            ViolationKind::UnknownPlaceholder => "unknown placeholder",
            ViolationKind::InvalidIdentifier => "invalid identifier",
            ViolationKind::DuplicateKey => "duplicate key",
            ViolationKind::DuplicateNode => "duplicate node name",
            ViolationKind::DanglingDependency => "dangling dependency",
            ViolationKind::Cycle => "dependency cycle",
            ViolationKind::UnresolvedInput => "unresolved input",
            ViolationKind::InvalidSource => "invalid wiring source",
            ViolationKind::SinkCount => "sink count",
            ViolationKind::FinalAnswer => "final answer key",
        }
    }

    /// Instruction sent back to the Designer when asking for a fix.
    pub fn rule(self) -> &'static str {
        match self {
            ViolationKind::DisallowedNodeType => "Allowed node types: LLM_Generator and Retrieval_RAG.",
            ViolationKind::ToolsTypeMismatch => {
                "tools_needed: For Retrieval_RAG nodes use [\"Search\"]; for LLM_Generator use []."
            }
            ViolationKind::MissingPromptSection => {
                "prompt_template MUST contain a System Prompt (marked as \"System Prompt:\") and a User Prompt (marked as \"User Prompt:\")."
            }
            ViolationKind::UnknownPlaceholder => {
                "Every {placeholder} in a prompt_template must be one of the node's input keys, or {retrieved_context} for Retrieval_RAG nodes."
            }
            ViolationKind::InvalidIdentifier | ViolationKind::DuplicateKey => {
                "node_name, input and output entries must be unique identifiers (letters, digits, underscores)."
            }
            ViolationKind::DuplicateNode => "Node names must be unique.",
            ViolationKind::DanglingDependency => "Every dependency must name a node in the pipeline.",
            ViolationKind::Cycle => "Dependencies must form a valid DAG.",
            ViolationKind::UnresolvedInput | ViolationKind::InvalidSource => {
                "Every input of every node must come from the initial input or from an upstream node's output."
            }
            ViolationKind::SinkCount | ViolationKind::FinalAnswer => {
                "Exactly one final node must produce the final answer."
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub node: Option<String>,
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Some(n) => write!(f, "[{n}] {}: {}", self.kind.label(), self.detail),
            None => write!(f, "{}: {}", self.kind.label(), self.detail),
        }
    }
}

/// Violations are data: an empty report means the subject is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, node: Option<&str>, kind: ViolationKind, detail: impl Into<String>) {
        self.violations.push(Violation {
            node: node.map(str::to_string),
            kind,
            detail: detail.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn kinds(&self) -> BTreeSet<ViolationKind> {
        self.violations.iter().map(|v| v.kind).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(Violation::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn validate_blueprint(bp: &NodeBlueprint) -> ValidationReport {
    let mut report = ValidationReport::default();
    let name = Some(bp.node_name.as_str());

    if !is_identifier(&bp.node_name) {
        report.push(name, ViolationKind::InvalidIdentifier, format!("node_name `{}`", bp.node_name));
    }
    for (field, keys) in [("input", &bp.input_keys), ("output", &bp.output_keys)] {
        let mut seen = BTreeSet::new();
        for key in keys {
            if !is_identifier(key) {
                report.push(name, ViolationKind::InvalidIdentifier, format!("{field} key `{key}`"));
            }
            if !seen.insert(key) {
                report.push(name, ViolationKind::DuplicateKey, format!("{field} key `{key}`"));
            }
        }
    }
    if bp.output_keys.is_empty() {
        report.push(name, ViolationKind::InvalidIdentifier, "node declares no output keys");
    }

    let tools: Vec<&str> = bp.tools_needed().iter().map(String::as_str).collect();
    if tools != bp.node_type.required_tools() {
        report.push(
            name,
            ViolationKind::ToolsTypeMismatch,
            format!("{} declares tools {:?}", bp.node_type, tools),
        );
    }

    let template = bp.prompt_template();
    if split_prompt(template).is_none() {
        let missing: Vec<&str> = [SYSTEM_MARKER, USER_MARKER]
            .into_iter()
            .filter(|m| !template.contains(m))
            .collect();
        report.push(name, ViolationKind::MissingPromptSection, format!("missing {}", missing.join(" and ")));
    }

    let allowed = bp.allowed_placeholders();
    for slot in placeholders(template) {
        if !allowed.contains(slot.as_str()) {
            report.push(name, ViolationKind::UnknownPlaceholder, format!("{{{slot}}}"));
        }
    }
    report
}

/// Checks every blueprint plus the library-level invariants: unique names,
/// known dependencies, acyclicity, resolvable wiring, and a single sink that
/// carries the final answer key.
pub fn validate_library(lib: &NodeLibrary) -> ValidationReport {
    let mut report = ValidationReport::default();
    for bp in &lib.nodes {
        report.extend(validate_blueprint(bp));
    }

    let graph = match build_graph(&lib.nodes) {
        Ok(g) => g,
        Err(err) => {
            let kind = match &err {
                Error::DuplicateNode(_) => ViolationKind::DuplicateNode,
                Error::DanglingDependency { .. } => ViolationKind::DanglingDependency,
                _ => ViolationKind::Cycle,
            };
            report.push(None, kind, err.to_string());
            return report;
        }
    };

    for bp in &lib.nodes {
        let name = bp.node_name.as_str();
        let ancestors = graph.ancestors(name);
        for key in &bp.input_keys {
            let Some(source) = lib.connections_plan.source(name, key) else {
                report.push(Some(name), ViolationKind::UnresolvedInput, format!("input `{key}` has no source"));
                continue;
            };
            match source {
                Source::Input(field) => {
                    if !INITIAL_FIELDS.contains(&field.as_str()) {
                        report.push(
                            Some(name),
                            ViolationKind::InvalidSource,
                            format!("input `{key}` reads unknown initial field `{field}`"),
                        );
                    }
                }
                Source::NodeKey { node, .. } | Source::NodeOutput(node) => {
                    if !ancestors.contains(node) {
                        report.push(
                            Some(name),
                            ViolationKind::InvalidSource,
                            format!("input `{key}` reads `{node}`, which is not upstream"),
                        );
                    } else if let Source::NodeKey { key: out, .. } = source {
                        let produces = lib.node(node).is_some_and(|n| n.output_keys.contains(out));
                        if !produces {
                            report.push(
                                Some(name),
                                ViolationKind::InvalidSource,
                                format!("input `{key}` reads `{node}.{out}`, which is not an output"),
                            );
                        }
                    }
                }
            }
        }
    }
    for (node, keys) in &lib.connections_plan.inputs {
        match lib.node(node) {
            None => report.push(Some(node), ViolationKind::InvalidSource, "wiring for unknown node"),
            Some(bp) => {
                for key in keys.keys() {
                    if !bp.input_keys.contains(key) {
                        report.push(Some(node), ViolationKind::InvalidSource, format!("wiring for undeclared input `{key}`"));
                    }
                }
            }
        }
    }

    if lib.nodes.is_empty() {
        return report;
    }
    let sinks = graph.sinks();
    if sinks.len() != 1 {
        report.push(None, ViolationKind::SinkCount, format!("expected one sink, found {sinks:?}"));
    }
    match &lib.connections_plan.final_answer {
        None => report.push(None, ViolationKind::FinalAnswer, "no final answer declared"),
        Some(out) => {
            if sinks.len() == 1 && out.node != sinks[0] {
                report.push(
                    Some(&out.node),
                    ViolationKind::FinalAnswer,
                    format!("final answer must come from the sink `{}`", sinks[0]),
                );
            }
            if !lib.node(&out.node).is_some_and(|n| n.output_keys.contains(&out.key)) {
                report.push(Some(&out.node), ViolationKind::FinalAnswer, format!("no output key `{}`", out.key));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Implementation, NodeType};

    fn rag() -> NodeBlueprint {
        NodeBlueprint {
            node_name: "Legal_Search_Engine".into(),
            node_type: NodeType::RetrievalRag,
            description: "Retrieves statutes".into(),
            dependencies: vec![],
            input_keys: vec!["cause_of_action".into()],
            output_keys: vec!["relevant_laws".into()],
            constraints: String::new(),
            implementation: Implementation {
                logic_description: "Search statutes for the cause of action".into(),
                prompt_template: "System Prompt: Summarize law.\nUser Prompt: {cause_of_action}\n{retrieved_context}".into(),
                tools_needed: vec!["Search".into()],
            },
            all_code: String::new(),
            version: 0,
        }
    }

    #[test]
    fn well_formed_rag_node_passes() {
        assert!(validate_blueprint(&rag()).ok());
    }

    #[test]
    fn generator_with_search_tool_is_mismatch() {
        let mut bp = rag();
        bp.node_type = NodeType::LlmGenerator;
        bp.implementation.prompt_template = "System Prompt: s\nUser Prompt: {cause_of_action}".into();
        let report = validate_blueprint(&bp);
        assert!(!report.ok());
        assert_eq!(report.violations[0].kind.label(), "tools/type mismatch");
    }

    #[test]
    fn missing_user_marker() {
        let mut bp = rag();
        bp.implementation.prompt_template = "System Prompt: only {cause_of_action}".into();
        let report = validate_blueprint(&bp);
        assert!(report.has(ViolationKind::MissingPromptSection));
        assert!(report.to_string().contains("missing prompt section"));
    }

    #[test]
    fn retrieved_context_reserved_for_rag() {
        let mut bp = rag();
        bp.node_type = NodeType::LlmGenerator;
        bp.implementation.tools_needed.clear();
        assert!(validate_blueprint(&bp).has(ViolationKind::UnknownPlaceholder));
    }

    #[test]
    fn identifiers() {
        assert!(is_identifier("Case_Structurer"));
        assert!(is_identifier("_x1"));
        assert!(!is_identifier("1x"));
        assert!(!is_identifier("the case facts"));
        assert!(!is_identifier(""));
    }
}
