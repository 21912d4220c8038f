//! Three epochs of bottleneck refinement on a scripted three-node chain.
//!
//! Node B drags the objective down on most samples, so every epoch picks it
//! and asks the Designer for a new prompt.

use std::collections::BTreeMap;
use std::sync::Arc;

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

fn node(name: &str, deps: &[&str], input: &str, output: &str) -> NodeBlueprint {
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

fn chain() -> NodeLibrary {
    let link = |node: &str, key: &str| Source::NodeKey { node: node.into(), key: key.into() };
    let inputs = BTreeMap::from([
        ("A".to_string(), BTreeMap::from([("question".to_string(), Source::Input("question".into()))])),
        ("B".to_string(), BTreeMap::from([("a".to_string(), link("A", "a"))])),
        ("C".to_string(), BTreeMap::from([("b".to_string(), link("B", "b"))])),
    ]);
    NodeLibrary {
        pipeline_description: "chain".into(),
        nodes: vec![node("A", &[], "question", "a"), node("B", &["A"], "a", "b"), node("C", &["B"], "b", "c")],
        connections_plan: ConnectionsPlan { inputs, final_answer: Some(OutputRef { node: "C".into(), key: "c".into() }) },
        epoch: 0,
        provenance: Provenance::default(),
    }
}

fn executor() -> MockScript {
    let mut s = MockScript::default();
    for (marker, reply) in [("as A,", "alpha"), ("as B,", "beta"), ("as C,", "gamma")] {
        s.push_chat_text(&[marker], reply);
    }
    s.push_score_mean(&["q3", "### Output of C"], -1.9);
    s.push_score_mean(&["q3", "### Output of B"], -1.4);
    s.push_score_mean(&["### Output of C"], -1.0);
    s.push_score_mean(&["### Output of B"], -1.8);
    s.push_score_mean(&["### Output of A"], -1.5);
    s.push_score_mean(&["Answer:"], -2.0);
    s
}

fn designer() -> MockScript {
    let replies: Vec<String> = (1..=3)
        .map(|k| {
            json!({
                "analysis": {"problem_identification": "vague", "root_cause": "no structure", "optimization_strategy": "structure"},
                "optimized_implementation": {
                    "prompt_template": format!("System Prompt: you are B (rev {k})\nUser Prompt: as B, work on {{a}}"),
                    "tools_needed": [],
                    "logic_description": format!("one call, rev {k}")
                },
                "optimized_all_code": "",
                "optimization_explanation": "structured prompt"
            })
            .to_string()
        })
        .collect();
    let mut s = MockScript::default();
    s.push_chat_sequence(&["Node Name: B"], &replies.iter().map(String::as_str).collect::<Vec<_>>());
    s
}

fn main() -> nodesmith::Result<()> {
    let executor = Gateway::new(Arc::new(MockProvider::named("executor", executor())));
    let designer = Gateway::new(Arc::new(MockProvider::named("designer", designer())));
    let prompts = PromptLibrary::load_default()?;
    let backend = FixtureBackend::empty();
    let runtime = Runtime {
        executor: &executor,
        designer: &designer,
        prompts: &prompts,
        backend: &backend,
        max_rounds: 3,
        rag_engine: EngineKind::GeneralWeb,
    };
    let samples: Vec<Sample> = (1..=4).map(|i| Sample::new(format!("s{i}"), format!("q{i}"), format!("y{i}"))).collect();

    let run = Optimizer::new(runtime, OptimizeSettings::default()).optimize(&chain(), &samples, 3, None)?;
    for rec in &run.epochs {
        let l = rec.report.ledger.as_ref().expect("epoch scored");
        let means: Vec<String> = l.node_order.iter().map(|n| format!("{n}={:.4}", l.per_node_mean[n])).collect();
        println!(
            "epoch {}: {} | bottleneck {} | evidence {:?} | B now v{}",
            rec.report.epoch,
            means.join(" "),
            l.bottleneck,
            l.refinement_sample_ids,
            rec.library.node("B").map_or(0, |b| b.version)
        );
    }
    println!("kept snapshot {} ({})", run.selected_snapshot, run.selection_policy.as_str());
    println!("score calls: {}", executor.score_call_count());
    Ok(())
}
