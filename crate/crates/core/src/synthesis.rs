//! Turns the four strategy analyses into a validated epoch-0 node library:
//! one generation call, at most one regeneration, then one wiring call.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::harvest::{StrategyAnalysis, Strategy};
use crate::llm::gateway::truncate;
use crate::llm::{ChatMessage, Gateway};
use crate::model::{
    build_graph, validate_blueprint, validate_library, ConnectionsPlan, Implementation, NodeBlueprint,
    NodeLibrary, NodeType, OutputRef, Provenance, Source, ValidationReport, ViolationKind, INITIAL_FIELDS,
    RETRIEVED_CONTEXT,
};
use crate::prompts::{PromptLibrary, NODE_GENERATION, NODE_REGENERATION, NODE_TEMPLATE, WIRING_EMISSION};

/// Per-node input sources, as emitted by the wiring call.
type Wiring = BTreeMap<String, BTreeMap<String, Source>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthesisOptions {
    pub preview_count: usize,
    pub preview_chars: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { preview_count: 3, preview_chars: 2000 }
    }
}

/// A parsed generation reply before wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct Draft {
    pub pipeline_description: String,
    pub nodes: Vec<NodeBlueprint>,
    /// The generated execution code, kept only to derive wiring.
    pub connections_code: String,
    /// Node-level and graph-level problems.
    pub report: ValidationReport,
}

pub struct Synthesizer<'a> {
    pub designer: &'a Gateway,
    pub prompts: &'a PromptLibrary,
    pub options: SynthesisOptions,
}

impl Synthesizer<'_> {
    pub fn generate_initial_nodes(
        &self,
        task_thinking: &str,
        previews: &[Sample],
        analyses: &[StrategyAnalysis],
        provenance: Provenance,
    ) -> Result<NodeLibrary> {
        let present: BTreeSet<Strategy> = analyses.iter().map(|a| a.strategy).collect();
        if let Some(missing) = Strategy::ALL.iter().find(|s| !present.contains(s)) {
            return Err(Error::Precondition(format!("strategy {missing} analysis is missing")));
        }
        let asset = self.prompts.get(NODE_GENERATION);
        let samples = self.samples_section(previews);
        let analysis = render_analyses(analyses);
        let template = self.prompts.get(NODE_TEMPLATE).text.trim().to_string();
        let user = asset.render_user(&[
            ("task_thinking", task_thinking),
            ("task_samples_section", &samples),
            ("strategy_analysis", &analysis),
            ("code_template", &template),
        ])?;
        let reply = self.designer.chat_json(&[ChatMessage::system(asset.system()), ChatMessage::user(user)])?;
        let mut draft = parse_draft(&reply)?;
        if !draft.report.ok() {
            log::warn!("generated pipeline failed validation: {}", draft.report);
            draft = self.regenerate_on_failure(&Value::Object(reply).to_string(), &draft.report)?;
        }
        let (plan_inputs, final_answer) = self.emit_wiring(&draft)?;
        let library = NodeLibrary {
            pipeline_description: draft.pipeline_description,
            nodes: draft.nodes,
            connections_plan: ConnectionsPlan { inputs: plan_inputs, final_answer: Some(final_answer) },
            epoch: 0,
            provenance,
        };
        let report = validate_library(&library);
        if !report.ok() {
            return Err(Error::Validation(vec![report]));
        }
        Ok(library)
    }

    /// One re-prompt that lists the violations and the rules they break.
    pub fn regenerate_on_failure(&self, previous_output: &str, violations: &ValidationReport) -> Result<Draft> {
        if violations.ok() {
            return Err(Error::Precondition("regeneration needs at least one violation".into()));
        }
        let asset = self.prompts.get(NODE_REGENERATION);
        let listed: String = violations.violations.iter().map(|v| format!("- {v}\n")).collect();
        let rules: String = violations.kinds().into_iter().map(|k| format!("- {}\n", k.rule())).collect();
        let user = asset.render_user(&[
            ("previous_output", previous_output),
            ("violations", listed.trim_end()),
            ("rules", rules.trim_end()),
        ])?;
        let reply = self.designer.chat_json(&[ChatMessage::system(asset.system()), ChatMessage::user(user)])?;
        let draft = parse_draft(&reply)?;
        if draft.report.ok() {
            Ok(draft)
        } else {
            Err(Error::Validation(vec![violations.clone(), draft.report]))
        }
    }

    fn emit_wiring(&self, draft: &Draft) -> Result<(Wiring, OutputRef)> {
        let asset = self.prompts.get(WIRING_EMISSION);
        let summary: String = draft
            .nodes
            .iter()
            .map(|n| {
                format!(
                    "- {} (depends on: {:?}; input: {:?}; output: {:?})\n",
                    n.node_name, n.dependencies, n.input_keys, n.output_keys
                )
            })
            .collect();
        let fields = serde_json::to_string(INITIAL_FIELDS).expect("static list");
        let code = if draft.connections_code.trim().is_empty() { "(none provided)" } else { draft.connections_code.as_str() };
        let user = asset.render_user(&[
            ("initial_fields", &fields),
            ("node_summary", summary.trim_end()),
            ("connections_code", code),
        ])?;
        let reply = self.designer.chat_json(&[ChatMessage::system(asset.system()), ChatMessage::user(user)])?;
        let plan = reply
            .get("connections_plan")
            .cloned()
            .ok_or_else(|| Error::MalformedOutput("wiring reply lacks `connections_plan`".into()))?;
        let plan = serde_json::from_value(plan)
            .map_err(|e| Error::MalformedOutput(format!("wiring `connections_plan`: {e}")))?;
        let final_answer = reply
            .get("final_answer")
            .cloned()
            .ok_or_else(|| Error::MalformedOutput("wiring reply lacks `final_answer`".into()))?;
        let final_answer = serde_json::from_value(final_answer)
            .map_err(|e| Error::MalformedOutput(format!("wiring `final_answer`: {e}")))?;
        Ok((plan, final_answer))
    }

    fn samples_section(&self, previews: &[Sample]) -> String {
        if previews.is_empty() {
            return String::new();
        }
        let mut out = String::from("Task Samples:\n");
        for (i, s) in previews.iter().take(self.options.preview_count).enumerate() {
            let block = format!("Question: {}\nAnswer: {}", s.question, s.answer);
            out.push_str(&format!("\nSample {}:\n{}\n", i + 1, truncate(&block, self.options.preview_chars)));
        }
        out
    }
}

fn render_analyses(analyses: &[StrategyAnalysis]) -> String {
    let mut sorted: Vec<&StrategyAnalysis> = analyses.iter().collect();
    sorted.sort_by_key(|a| a.strategy);
    sorted
        .iter()
        .map(|a| {
            let body = serde_json::to_string_pretty(&Value::Object(a.payload.clone())).expect("json value");
            format!("### {}\n{body}", a.strategy.title())
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn text_field(obj: &Map<String, Value>, key: &str) -> String {
    match obj.get(key) {
        Some(Value::String(s)) => s.clone(),
        None | Some(Value::Null) => String::new(),
        Some(other) => other.to_string(),
    }
}

fn list_field(obj: &Map<String, Value>, key: &str) -> Vec<String> {
    match obj.get(key) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => s.trim().to_string(),
                other => other.to_string(),
            })
            .collect(),
        Some(Value::String(s)) if !s.trim().is_empty() => vec![s.trim().to_string()],
        _ => Vec::new(),
    }
}

/// `{{x}}` becomes `{x}` and `{retrieved_chunks}` becomes `{retrieved_context}`.
pub fn normalize_template(template: &str) -> String {
    let re = regex::Regex::new(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}").expect("static regex");
    re.replace_all(template, "{$1}")
        .replace("{retrieved_chunks}", &format!("{{{RETRIEVED_CONTEXT}}}"))
}

/// Parses a generation reply. Shape errors are fatal; rule violations are
/// collected in the draft's report.
pub fn parse_draft(reply: &Map<String, Value>) -> Result<Draft> {
    let nodes_raw = reply
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::MalformedOutput("generation reply lacks a `nodes` array".into()))?;
    let mut report = ValidationReport::default();
    let mut nodes = Vec::new();
    for (i, raw) in nodes_raw.iter().enumerate() {
        let obj = raw
            .as_object()
            .ok_or_else(|| Error::MalformedOutput(format!("nodes[{i}] is not an object")))?;
        let name = text_field(obj, "node_name");
        if name.is_empty() {
            return Err(Error::MalformedOutput(format!("nodes[{i}] has no node_name")));
        }
        let impl_obj = obj.get("implementation").and_then(Value::as_object).cloned().unwrap_or_default();
        let type_text = text_field(obj, "node_type");
        let parsed = NodeType::parse(type_text.trim());
        if parsed.is_none() {
            report.push(Some(name.trim()), ViolationKind::DisallowedNodeType, format!("node_type `{type_text}`"));
        }
        let node_type = parsed.unwrap_or(NodeType::LlmGenerator);
        let bp = NodeBlueprint {
            node_name: name.trim().to_string(),
            node_type,
            description: text_field(obj, "description"),
            dependencies: list_field(obj, "dependencies"),
            input_keys: list_field(obj, "input"),
            output_keys: list_field(obj, "output"),
            constraints: text_field(obj, "constraints"),
            implementation: Implementation {
                logic_description: text_field(&impl_obj, "logic_description"),
                prompt_template: normalize_template(&text_field(&impl_obj, "prompt_template")),
                tools_needed: list_field(&impl_obj, "tools_needed"),
            },
            all_code: text_field(obj, "all_code"),
            version: 0,
        };
        let mut own = validate_blueprint(&bp);
        if parsed.is_none() {
            // The tool check is meaningless against a stand-in type.
            own.violations.retain(|v| v.kind != ViolationKind::ToolsTypeMismatch);
        }
        report.extend(own);
        nodes.push(bp);
    }
    if nodes.is_empty() {
        return Err(Error::MalformedOutput("generation reply has no nodes".into()));
    }
    if let Err(e) = build_graph(&nodes) {
        let kind = match &e {
            Error::DuplicateNode(_) => ViolationKind::DuplicateNode,
            Error::DanglingDependency { .. } => ViolationKind::DanglingDependency,
            _ => ViolationKind::Cycle,
        };
        report.push(None, kind, e.to_string());
    }
    let connections_code = reply
        .get("Connections")
        .or_else(|| reply.get("connections"))
        .map(|v| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .unwrap_or_default();
    Ok(Draft {
        pipeline_description: text_field(reply, "pipeline_description"),
        nodes,
        connections_code,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockProvider, MockScript};
    use serde_json::json;
    use std::sync::Arc;

    fn node(name: &str, ty: &str, deps: &[&str], input: &str, output: &str) -> Value {
        let tools: Vec<&str> = if ty == "Retrieval_RAG" { vec!["Search"] } else { vec![] };
        let ctx = if ty == "Retrieval_RAG" { " Context: {retrieved_chunks}" } else { "" };
        json!({
            "node_name": name,
            "node_type": ty,
            "description": "d",
            "dependencies": deps,
            "input": [input],
            "output": [output],
            "constraints": "",
            "implementation": {
                "logic_description": "l",
                "prompt_template": format!("System Prompt: s\nUser Prompt: {{{{{input}}}}}{ctx}"),
                "tools_needed": tools
            },
            "all_code": "def f(self, input_data): ..."
        })
    }

    fn two_node(ty2: &str, deps1: &[&str]) -> Value {
        json!({
            "pipeline_description": "p",
            "nodes": [node("Reader", "LLM_Generator", deps1, "question", "facts"), node("Writer", ty2, &["Reader"], "facts", "answer")],
            "Connections": "def execute_pipeline(self, d): ..."
        })
    }

    fn wiring() -> Value {
        json!({
            "connections_plan": {
                "Reader": {"question": {"input": "question"}},
                "Writer": {"facts": {"node": "Reader", "key": "facts"}}
            },
            "final_answer": {"node": "Writer", "key": "answer"}
        })
    }

    fn analyses() -> Vec<StrategyAnalysis> {
        Strategy::ALL
            .iter()
            .map(|&s| StrategyAnalysis {
                strategy: s,
                payload: s.required_keys().iter().map(|k| (k.to_string(), json!("x"))).collect(),
                source_sessions: vec![],
                truncated: false,
            })
            .collect()
    }

    fn run(script: MockScript) -> (Arc<MockProvider>, Result<NodeLibrary>) {
        let mock = Arc::new(MockProvider::new(script));
        let gw = Gateway::new(mock.clone());
        let prompts = PromptLibrary::load_default().unwrap();
        let syn = Synthesizer { designer: &gw, prompts: &prompts, options: SynthesisOptions::default() };
        let out = syn.generate_initial_nodes("task", &[Sample::new("s", "q", "a")], &analyses(), Provenance::default());
        (mock, out)
    }

    #[test]
    fn normalizes_placeholders() {
        assert_eq!(normalize_template("a {{x}} {retrieved_chunks}"), "a {x} {retrieved_context}");
    }

    #[test]
    fn happy_path_uses_one_wiring_call() {
        let mut s = MockScript::default();
        s.push_chat_json(&["expert system architect"], two_node("Retrieval_RAG", &[]));
        s.push_chat_json(&["wiring assistant"], wiring());
        let (mock, lib) = run(s);
        let lib = lib.unwrap();
        assert_eq!(lib.nodes.len(), 2);
        assert_eq!(lib.epoch, 0);
        assert!(lib.nodes.iter().all(|n| n.version == 0));
        assert!(lib.nodes[1].prompt_template().contains("{retrieved_context}"));
        assert_eq!(mock.chat_calls().len(), 2);
        let gen = &mock.chat_calls()[0].user;
        assert!(gen.contains("Task Samples:") && gen.contains("def {node_name}(self, input_data):"));
    }

    #[test]
    fn disallowed_type_regenerated_then_terminal() {
        let mut s = MockScript::default();
        s.push_chat_json(&["expert system architect"], two_node("Validator_Tool", &[]));
        s.push_chat_json(&["wiring assistant"], wiring());
        let (mock, err) = run(s);
        match err.unwrap_err() {
            Error::Validation(reports) => {
                assert_eq!(reports.len(), 2);
                assert!(reports.iter().all(|r| r.has(ViolationKind::DisallowedNodeType)));
            }
            e => panic!("unexpected {e}"),
        }
        assert_eq!(mock.chat_calls().len(), 2);
        assert!(mock.chat_calls()[1].user.contains("Allowed node types: LLM_Generator and Retrieval_RAG."));
    }

    #[test]
    fn cycle_fixed_by_regeneration() {
        let mut s = MockScript::default();
        s.push_chat_json(&["failed validation"], two_node("LLM_Generator", &[]));
        s.push_chat_json(&["expert system architect"], two_node("LLM_Generator", &["Writer"]));
        s.push_chat_json(&["wiring assistant"], wiring());
        let (mock, lib) = run(s);
        assert_eq!(lib.unwrap().nodes.len(), 2);
        let calls = mock.chat_calls();
        assert_eq!(calls.len(), 3);
        assert!(calls[1].user.contains("Dependencies must form a valid DAG"));
    }

    #[test]
    fn empty_violations_rejected() {
        let gw = Gateway::new(Arc::new(MockProvider::new(MockScript::default())));
        let prompts = PromptLibrary::load_default().unwrap();
        let syn = Synthesizer { designer: &gw, prompts: &prompts, options: SynthesisOptions::default() };
        let err = syn.regenerate_on_failure("{}", &ValidationReport::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn missing_analysis_rejected() {
        let gw = Gateway::new(Arc::new(MockProvider::new(MockScript::default())));
        let prompts = PromptLibrary::load_default().unwrap();
        let syn = Synthesizer { designer: &gw, prompts: &prompts, options: SynthesisOptions::default() };
        let err = syn.generate_initial_nodes("t", &[], &analyses()[..3], Provenance::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
