#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nodesmith::config::RunConfig;
use nodesmith::dataset::Sample;
use nodesmith::harvest::{EngineKind, FixtureBackend};
use nodesmith::llm::{Gateway, MockProvider, MockScript};
use nodesmith::model::{
    ConnectionsPlan, Implementation, NodeBlueprint, NodeLibrary, NodeType, OutputRef, Provenance, Source,
};
use nodesmith::optimizer::{OptimizeSettings, Optimizer};
use nodesmith::prompts::PromptLibrary;
use nodesmith::runtime::Runtime;
use serde_json::json;

pub fn judicial_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/judicial")
}

pub fn judicial_config() -> RunConfig {
    RunConfig::load(&judicial_dir().join("config.toml")).expect("judicial config loads")
}

pub fn golden_library_path() -> PathBuf {
    judicial_dir().join("golden/library.json")
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_nodesmith"))
}

/// Single-input, single-output generator. The user prompt carries an
/// "as NAME," marker so mock rules can tell nodes apart.
pub fn node(name: &str, deps: &[&str], input: &str, output: &str) -> NodeBlueprint {
    NodeBlueprint {
        node_name: name.into(),
        node_type: NodeType::LlmGenerator,
        description: format!("{name} step"),
        dependencies: deps.iter().map(|d| d.to_string()).collect(),
        input_keys: vec![input.into()],
        output_keys: vec![output.into()],
        constraints: String::new(),
        implementation: Implementation {
            logic_description: "one call".into(),
            prompt_template: format!("System Prompt: you are {name}\nUser Prompt: as {name}, work on {{{input}}}"),
            tools_needed: vec![],
        },
        all_code: String::new(),
        version: 0,
    }
}

/// A -> B -> C, answer taken from C.
pub fn chain_library() -> NodeLibrary {
    let mut inputs = BTreeMap::new();
    inputs.insert("A".to_string(), BTreeMap::from([("question".to_string(), Source::Input("question".into()))]));
    inputs.insert("B".to_string(), BTreeMap::from([("a".to_string(), Source::NodeKey { node: "A".into(), key: "a".into() })]));
    inputs.insert("C".to_string(), BTreeMap::from([("b".to_string(), Source::NodeKey { node: "B".into(), key: "b".into() })]));
    NodeLibrary {
        pipeline_description: "three step chain".into(),
        nodes: vec![node("A", &[], "question", "a"), node("B", &["A"], "a", "b"), node("C", &["B"], "b", "c")],
        connections_plan: ConnectionsPlan { inputs, final_answer: Some(OutputRef { node: "C".into(), key: "c".into() }) },
        epoch: 0,
        provenance: Provenance { seed: 0, designer: "mock".into(), dataset: "chain".into() },
    }
}

pub fn chain_samples() -> Vec<Sample> {
    (1..=4).map(|i| Sample::new(format!("s{i}"), format!("question sample-{i}"), format!("answer {i}"))).collect()
}

/// J0 = -2 everywhere. Samples 1, 2 and 4 see J = [-1.5, -1.8, -1.0];
/// sample 3 sees [-1.5, -1.4, -1.9].
pub fn chain_executor() -> MockScript {
    let mut s = MockScript::default();
    s.push_chat_text(&["as A,"], "alpha");
    s.push_chat_text(&["as B,"], "beta");
    s.push_chat_text(&["as C,"], "gamma");
    s.push_score_mean(&["sample-3", "### Output of C"], -1.9);
    s.push_score_mean(&["sample-3", "### Output of B"], -1.4);
    s.push_score_mean(&["### Output of C"], -1.0);
    s.push_score_mean(&["### Output of B"], -1.8);
    s.push_score_mean(&["### Output of A"], -1.5);
    s.push_score_mean(&["Answer:"], -2.0);
    s
}

/// Refinements keep the "as B," marker, so B stays the weakest node, but
/// each reply rewrites the prompt differently.
pub fn chain_designer(epochs: usize) -> MockScript {
    let mut s = MockScript::default();
    let replies: Vec<String> = (1..=epochs)
        .map(|k| {
            json!({
                "analysis": {"problem_identification": "weak step", "root_cause": "vague prompt", "optimization_strategy": "be specific"},
                "optimized_implementation": {
                    "prompt_template": format!("System Prompt: you are B, revision {k}\nUser Prompt: as B, work on {{a}}"),
                    "tools_needed": [],
                    "logic_description": format!("one call, revision {k}")
                },
                "optimized_all_code": "def B(self, input_data): ...",
                "optimization_explanation": "tighter prompt"
            })
            .to_string()
        })
        .collect();
    let refs: Vec<&str> = replies.iter().map(String::as_str).collect();
    s.push_chat_sequence(&["Node Name: B"], &refs);
    s
}

pub struct Harness {
    pub executor: Gateway,
    pub designer: Gateway,
    pub executor_mock: Arc<MockProvider>,
    pub designer_mock: Arc<MockProvider>,
    pub prompts: PromptLibrary,
    pub backend: FixtureBackend,
}

impl Harness {
    pub fn new(executor: MockScript, designer: MockScript) -> Self {
        let executor_mock = Arc::new(MockProvider::named("executor", executor));
        let designer_mock = Arc::new(MockProvider::named("designer", designer));
        Self {
            executor: Gateway::new(executor_mock.clone()),
            designer: Gateway::new(designer_mock.clone()),
            executor_mock,
            designer_mock,
            prompts: PromptLibrary::load_default().expect("bundled prompts"),
            backend: FixtureBackend::empty(),
        }
    }

    pub fn runtime(&self) -> Runtime<'_> {
        Runtime {
            executor: &self.executor,
            designer: &self.designer,
            prompts: &self.prompts,
            backend: &self.backend,
            max_rounds: 3,
            rag_engine: EngineKind::GeneralWeb,
        }
    }

    pub fn optimizer(&self) -> Optimizer<'_> {
        Optimizer::new(self.runtime(), OptimizeSettings::default())
    }
}

/// Every file under `root`, relative path to bytes.
pub fn snapshot_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}
