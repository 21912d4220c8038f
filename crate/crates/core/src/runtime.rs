//! Executes a node library on one sample, in pipeline order, recording each
//! node's output and the growing context the scorer conditions on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::harvest::{run_multi_turn_search, EngineKind, SearchBackend, SearchSession};
use crate::llm::{ChatMessage, Gateway, ResponseFormat};
use crate::model::{
    build_pipeline_graph, fill_placeholders, split_prompt, NodeBlueprint, NodeLibrary, NodeType, Source,
    RETRIEVED_CONTEXT,
};
use crate::prompts::{PromptLibrary, RETRIEVAL_TARGET};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub node_name: String,
    pub output: Map<String, Value>,
    /// The labelled section this step appends to the context.
    pub rendered: String,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub failure_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<SearchSession>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_id: String,
    pub question: String,
    pub ground_truth: String,
    pub steps: Vec<Step>,
    /// `accumulated[t]` is the context after `t` steps; `accumulated[0]` is empty.
    pub accumulated: Vec<String>,
    pub final_answer: String,
}

impl Trajectory {
    pub fn order(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.node_name.as_str()).collect()
    }

    /// Checks the prefix and length invariants.
    pub fn check(&self) -> Result<()> {
        if self.accumulated.len() != self.steps.len() + 1 || !self.accumulated[0].is_empty() {
            return Err(Error::Alignment(format!("trajectory {} has malformed contexts", self.sample_id)));
        }
        for (t, step) in self.steps.iter().enumerate() {
            if self.accumulated[t + 1] != format!("{}{}", self.accumulated[t], step.rendered) {
                return Err(Error::Alignment(format!(
                    "trajectory {} breaks the prefix property at step {}",
                    self.sample_id,
                    t + 1
                )));
            }
        }
        Ok(())
    }
}

/// What a node produced, before it is folded into a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutput {
    pub output: Map<String, Value>,
    pub retrieval: Option<SearchSession>,
}

pub fn value_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => serde_json::to_string_pretty(other).unwrap_or_else(|_| other.to_string()),
    }
}

/// `key: value` lines in output-key order.
pub fn render_output(bp: &NodeBlueprint, output: &Map<String, Value>) -> String {
    bp.output_keys
        .iter()
        .map(|k| format!("{k}: {}", output.get(k).map(value_text).unwrap_or_default()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn section(node_name: &str, body: &str) -> String {
    format!("### Output of {node_name}\n{body}\n")
}

pub fn failure_placeholder(node_name: &str, note: &str) -> String {
    format!("[node {node_name} failed: {note}]")
}

pub struct Runtime<'a> {
    pub executor: &'a Gateway,
    /// Distils retrieval targets.
    pub designer: &'a Gateway,
    pub prompts: &'a PromptLibrary,
    pub backend: &'a dyn SearchBackend,
    pub max_rounds: usize,
    pub rag_engine: EngineKind,
}

impl Runtime<'_> {
    pub fn execute_node(&self, bp: &NodeBlueprint, inputs: &BTreeMap<String, String>) -> Result<NodeOutput> {
        if let Some(key) = bp.input_keys.iter().find(|k| !inputs.contains_key(*k)) {
            return Err(Error::MissingInput { node: bp.node_name.clone(), key: key.clone() });
        }
        match bp.node_type {
            NodeType::LlmGenerator => Ok(NodeOutput { output: self.generate(bp, inputs, None)?, retrieval: None }),
            NodeType::RetrievalRag => {
                let target = self.retrieval_target(bp, inputs)?;
                let session =
                    run_multi_turn_search(self.executor, self.prompts, &target, self.rag_engine, self.backend, self.max_rounds)?;
                let context = session.context_text();
                let output = self.generate(bp, inputs, Some(&context))?;
                Ok(NodeOutput { output, retrieval: Some(session) })
            }
        }
    }

    fn generate(&self, bp: &NodeBlueprint, inputs: &BTreeMap<String, String>, retrieved: Option<&str>) -> Result<Map<String, Value>> {
        let sections = split_prompt(bp.prompt_template())
            .ok_or_else(|| Error::Precondition(format!("{} has no prompt sections", bp.node_name)))?;
        let lookup = |name: &str| {
            if name == RETRIEVED_CONTEXT {
                retrieved.map(str::to_string)
            } else {
                inputs.get(name).cloned()
            }
        };
        let system = fill_placeholders(sections.system, lookup);
        let user = fill_placeholders(sections.user, lookup);
        let structured = bp.output_keys.len() > 1 || bp.prompt_template().contains("JSON");
        let format = if structured { ResponseFormat::JsonObject } else { ResponseFormat::Normal };
        let mut messages = Vec::new();
        if !system.trim().is_empty() {
            messages.push(ChatMessage::system(system));
        }
        messages.push(ChatMessage::user(user));
        let reply = self.executor.chat(&messages, format)?;
        map_reply(bp, &reply.text, structured)
    }

    fn retrieval_target(&self, bp: &NodeBlueprint, inputs: &BTreeMap<String, String>) -> Result<String> {
        let asset = self.prompts.get(RETRIEVAL_TARGET);
        let rendered: String = inputs.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
        let user = asset.render_user(&[
            ("node_name", &bp.node_name),
            ("logic_description", bp.logic_description()),
            ("inputs", &rendered),
        ])?;
        let reply = self.designer.chat_json(&[ChatMessage::system(asset.system()), ChatMessage::user(user)])?;
        let target = reply.get("target_description").map(value_text).unwrap_or_default();
        let target = target.trim();
        let echoes_question = inputs.get("question").is_some_and(|q| q.trim().eq_ignore_ascii_case(target));
        if target.is_empty() || echoes_question {
            log::debug!("{}: falling back to logic_description as retrieval target", bp.node_name);
            return Ok(bp.logic_description().trim().to_string());
        }
        Ok(target.to_string())
    }

    /// Runs every node in pipeline order. Node failures become placeholder
    /// outputs; only unresolvable wiring aborts.
    pub fn run_pipeline(&self, library: &NodeLibrary, sample: &Sample) -> Result<Trajectory> {
        let graph = build_pipeline_graph(library)?;
        if graph.is_empty() {
            return Err(Error::Precondition("library has no nodes".into()));
        }
        let plan = &library.connections_plan;
        let mut outputs: BTreeMap<String, (Map<String, Value>, String)> = BTreeMap::new();
        let mut steps = Vec::with_capacity(graph.len());
        let mut accumulated = vec![String::new()];

        for name in &graph.ordered_nodes {
            let bp = library.node(name).expect("graph nodes come from the library");
            let mut inputs = BTreeMap::new();
            for key in &bp.input_keys {
                let source = plan
                    .source(name, key)
                    .ok_or_else(|| Error::Wiring(format!("no source for {name}.{key}")))?;
                inputs.insert(key.clone(), resolve(source, sample, &outputs, name, key)?);
            }
            let step = match self.execute_node(bp, &inputs) {
                Ok(NodeOutput { output, retrieval }) => Step {
                    node_name: name.clone(),
                    rendered: section(name, &render_output(bp, &output)),
                    output,
                    failed: false,
                    failure_note: String::new(),
                    retrieval,
                },
                Err(e @ (Error::MissingInput { .. } | Error::Config(_))) => return Err(e),
                Err(e) => {
                    log::warn!("sample {}: node {name} failed: {e}", sample.id);
                    let note = e.to_string();
                    let placeholder = failure_placeholder(name, &note);
                    let output = bp.output_keys.iter().map(|k| (k.clone(), Value::String(placeholder.clone()))).collect();
                    Step {
                        node_name: name.clone(),
                        output,
                        rendered: section(name, &placeholder),
                        failed: true,
                        failure_note: note,
                        retrieval: None,
                    }
                }
            };
            let whole = if step.failed { failure_placeholder(name, &step.failure_note) } else { render_output(bp, &step.output) };
            outputs.insert(name.clone(), (step.output.clone(), whole));
            let next = format!("{}{}", accumulated.last().expect("non-empty"), step.rendered);
            accumulated.push(next);
            steps.push(step);
        }

        let final_answer = match &plan.final_answer {
            Some(r) => outputs
                .get(&r.node)
                .and_then(|(o, _)| o.get(&r.key))
                .map(value_text)
                .ok_or_else(|| Error::Wiring(format!("final answer {}.{} was not produced", r.node, r.key)))?,
            None => return Err(Error::Wiring("library names no final answer".into())),
        };
        Ok(Trajectory {
            sample_id: sample.id.clone(),
            question: sample.question.clone(),
            ground_truth: sample.answer.clone(),
            steps,
            accumulated,
            final_answer,
        })
    }
}

fn resolve(
    source: &Source,
    sample: &Sample,
    outputs: &BTreeMap<String, (Map<String, Value>, String)>,
    node: &str,
    key: &str,
) -> Result<String> {
    let missing = || Error::Wiring(format!("{node}.{key} <- {source} is not available"));
    match source {
        Source::Input(field) if field == "question" => Ok(sample.question.clone()),
        Source::Input(_) => Err(missing()),
        Source::NodeKey { node: up, key: k } => {
            let (out, _) = outputs.get(up).ok_or_else(missing)?;
            out.get(k).map(value_text).ok_or_else(missing)
        }
        Source::NodeOutput(up) => outputs.get(up).map(|(_, whole)| whole.clone()).ok_or_else(missing),
    }
}

fn map_reply(bp: &NodeBlueprint, text: &str, structured: bool) -> Result<Map<String, Value>> {
    let mut out = Map::new();
    if !structured {
        let key = &bp.output_keys[0];
        out.insert(key.clone(), Value::String(text.trim().to_string()));
        return Ok(out);
    }
    let obj: Map<String, Value> = match serde_json::from_str(text) {
        Ok(Value::Object(o)) => o,
        _ => return Err(Error::MalformedOutput(format!("{} reply is not an object", bp.node_name))),
    };
    if let [only] = bp.output_keys.as_slice() {
        let value = obj.get(only).cloned().unwrap_or(Value::Object(obj));
        out.insert(only.clone(), value);
        return Ok(out);
    }
    for key in &bp.output_keys {
        let value = obj
            .get(key)
            .ok_or_else(|| Error::MalformedOutput(format!("{} reply lacks output key `{key}`", bp.node_name)))?;
        out.insert(key.clone(), value.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harvest::SearchHit;
    use crate::llm::{MockCall, MockProvider, MockScript};
    use crate::model::{ConnectionsPlan, Implementation, OutputRef, Provenance};
    use serde_json::json;
    use std::sync::Arc;

    struct Echo;

    impl SearchBackend for Echo {
        fn name(&self) -> &str {
            "echo"
        }

        fn search(&self, q: &str, _: EngineKind) -> Result<Vec<SearchHit>> {
            Ok(vec![SearchHit { title: q.into(), url: "u".into(), content: format!("law about {q}") }])
        }
    }

    fn node(name: &str, deps: &[&str], input: &str, output: &str, ty: NodeType) -> NodeBlueprint {
        let ctx = if ty == NodeType::RetrievalRag { "\nContext: {retrieved_context}" } else { "" };
        NodeBlueprint {
            node_name: name.into(),
            node_type: ty,
            description: format!("{name} node"),
            dependencies: deps.iter().map(|d| d.to_string()).collect(),
            input_keys: vec![input.into()],
            output_keys: vec![output.into()],
            constraints: String::new(),
            implementation: Implementation {
                logic_description: format!("{name} logic"),
                prompt_template: format!("System Prompt: You are {name}.\nUser Prompt: Input: {{{input}}}{ctx}"),
                tools_needed: ty.required_tools().iter().map(|t| t.to_string()).collect(),
            },
            all_code: String::new(),
            version: 0,
        }
    }

    fn chain() -> NodeLibrary {
        let nodes = vec![
            node("A", &[], "question", "a_out", NodeType::LlmGenerator),
            node("B", &["A"], "a_out", "b_out", NodeType::LlmGenerator),
            node("C", &["B"], "b_out", "answer", NodeType::LlmGenerator),
        ];
        let mut plan = ConnectionsPlan::default();
        plan.inputs.insert("A".into(), [("question".into(), Source::Input("question".into()))].into());
        plan.inputs.insert("B".into(), [("a_out".into(), Source::NodeKey { node: "A".into(), key: "a_out".into() })].into());
        plan.inputs.insert("C".into(), [("b_out".into(), Source::NodeKey { node: "B".into(), key: "b_out".into() })].into());
        plan.final_answer = Some(OutputRef { node: "C".into(), key: "answer".into() });
        NodeLibrary {
            pipeline_description: "chain".into(),
            nodes,
            connections_plan: plan,
            epoch: 0,
            provenance: Provenance::default(),
        }
    }

    fn script() -> MockScript {
        let mut s = MockScript::default();
        s.push_chat_json(&["You are A."], json!("alpha"));
        s.push_chat_json(&["You are B."], json!("beta"));
        s.push_chat_json(&["You are C."], json!("gamma"));
        s
    }

    fn run(lib: &NodeLibrary, script: MockScript) -> (Arc<MockProvider>, Result<Trajectory>) {
        let mock = Arc::new(MockProvider::new(script));
        let gw = Gateway::new(mock.clone());
        let prompts = PromptLibrary::load_default().unwrap();
        let rt = Runtime {
            executor: &gw,
            designer: &gw,
            prompts: &prompts,
            backend: &Echo,
            max_rounds: 3,
            rag_engine: EngineKind::GeneralWeb,
        };
        let traj = rt.run_pipeline(lib, &Sample::new("s1", "What is owed?", "100"));
        (mock, traj)
    }

    #[test]
    fn chain_accumulates_in_order() {
        let (_, traj) = run(&chain(), script());
        let traj = traj.unwrap();
        traj.check().unwrap();
        assert_eq!(traj.order(), ["A", "B", "C"]);
        assert_eq!(traj.accumulated.len(), 4);
        let last = &traj.accumulated[3];
        for (name, text) in [("A", "alpha"), ("B", "beta"), ("C", "gamma")] {
            assert_eq!(last.matches(&format!("### Output of {name}\n")).count(), 1);
            assert!(last.contains(text));
        }
        assert!(last.find("alpha").unwrap() < last.find("beta").unwrap());
        assert_eq!(traj.final_answer, "gamma");
    }

    #[test]
    fn upstream_values_reach_downstream_prompts() {
        let (mock, _) = run(&chain(), script());
        let calls = mock.chat_calls();
        assert!(calls[0].user.contains("Input: What is owed?"));
        assert!(calls[1].user.contains("Input: alpha"));
    }

    #[test]
    fn failed_node_is_isolated() {
        let mut s = MockScript::default();
        s.push_chat_json(&["You are A."], json!("alpha"));
        s.push_chat_json(&["You are C."], json!("gamma"));
        let (mock, traj) = run(&chain(), s);
        let traj = traj.unwrap();
        traj.check().unwrap();
        assert!(traj.steps[1].failed && !traj.steps[2].failed);
        assert_eq!(traj.steps.len(), 3);
        assert!(mock.chat_calls()[2].user.contains("[node B failed:"));
    }

    #[test]
    fn single_node_library() {
        let mut lib = chain();
        lib.nodes.truncate(1);
        lib.nodes[0].output_keys = vec!["answer".into()];
        lib.connections_plan.inputs.retain(|k, _| k == "A");
        lib.connections_plan.final_answer = Some(OutputRef { node: "A".into(), key: "answer".into() });
        let (_, traj) = run(&lib, script());
        let traj = traj.unwrap();
        assert_eq!(traj.steps.len(), 1);
        assert_eq!(traj.accumulated, vec![String::new(), "### Output of A\nanswer: alpha\n".to_string()]);
    }

    #[test]
    fn multi_key_output_maps_json() {
        let mut bp = node("J", &[], "question", "x", NodeType::LlmGenerator);
        bp.output_keys = vec!["verdict".into(), "amount".into()];
        let mut s = MockScript::default();
        s.push_chat_json(&[], json!({"verdict": "liable", "amount": 100, "extra": 1}));
        let mock = Arc::new(MockProvider::new(s));
        let gw = Gateway::new(mock);
        let prompts = PromptLibrary::load_default().unwrap();
        let rt = Runtime { executor: &gw, designer: &gw, prompts: &prompts, backend: &Echo, max_rounds: 1, rag_engine: EngineKind::GeneralWeb };
        let inputs = [("question".to_string(), "q".to_string())].into();
        let out = rt.execute_node(&bp, &inputs).unwrap().output;
        assert_eq!(Value::Object(out), json!({"verdict": "liable", "amount": 100}));
        let err = rt.execute_node(&bp, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::MissingInput { key, .. } if key == "question"));
    }

    #[test]
    fn retrieval_node_searches_once_then_summarises() {
        let bp = node("R", &[], "question", "laws", NodeType::RetrievalRag);
        let mut s = MockScript::default();
        s.push_chat_json(&["retrieval node"], json!({"target_description": "tort damages statutes"}));
        s.push_chat_json(&["web search controller"], json!({"done": true, "summary": "statute 1"}));
        s.push_chat_json(&["You are R."], json!("the statute says pay"));
        let mock = Arc::new(MockProvider::new(s));
        let gw = Gateway::new(mock.clone());
        let prompts = PromptLibrary::load_default().unwrap();
        let rt = Runtime { executor: &gw, designer: &gw, prompts: &prompts, backend: &Echo, max_rounds: 3, rag_engine: EngineKind::GeneralWeb };
        let inputs = [("question".to_string(), "Who pays?".to_string())].into();
        let out = rt.execute_node(&bp, &inputs).unwrap();
        let session = out.retrieval.unwrap();
        assert_eq!(session.target_description, "tort damages statutes");
        let calls = mock.calls();
        let summarise: Vec<_> = calls
            .iter()
            .filter(|c| matches!(c, MockCall::Chat { system, .. } if system.contains("You are R.")))
            .collect();
        assert_eq!(summarise.len(), 1);
        assert!(matches!(summarise[0], MockCall::Chat { user, .. } if user.contains("Context: statute 1")));
        assert_eq!(out.output["laws"], "the statute says pay");
    }

    #[test]
    fn retrieval_target_never_the_question() {
        let bp = node("R", &[], "question", "laws", NodeType::RetrievalRag);
        let mut s = MockScript::default();
        s.push_chat_json(&["retrieval node"], json!({"target_description": "Who pays?"}));
        s.push_chat_json(&["web search controller"], json!({"done": true, "summary": "x"}));
        s.push_chat_json(&["You are R."], json!("y"));
        let gw = Gateway::new(Arc::new(MockProvider::new(s)));
        let prompts = PromptLibrary::load_default().unwrap();
        let rt = Runtime { executor: &gw, designer: &gw, prompts: &prompts, backend: &Echo, max_rounds: 3, rag_engine: EngineKind::GeneralWeb };
        let inputs = [("question".to_string(), "Who pays?".to_string())].into();
        let out = rt.execute_node(&bp, &inputs).unwrap();
        assert_eq!(out.retrieval.unwrap().target_description, "R logic");
    }

    #[test]
    fn deterministic_bytes() {
        let a = crate::canonical::to_canonical_json(&run(&chain(), script()).1.unwrap()).unwrap();
        let b = crate::canonical::to_canonical_json(&run(&chain(), script()).1.unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
