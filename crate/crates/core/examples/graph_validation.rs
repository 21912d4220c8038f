//! Builds a small library, orders it, then breaks it in two ways.

use std::collections::BTreeMap;

use nodesmith::model::{
    build_pipeline_graph, serialize_library, validate_library, ConnectionsPlan, Implementation, NodeBlueprint,
    NodeLibrary, NodeType, OutputRef, Provenance, Source,
};

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
            logic_description: "single call".into(),
            prompt_template: format!("System Prompt: You are {name}.\nUser Prompt: Work on {{{input}}}"),
            tools_needed: vec![],
        },
        all_code: String::new(),
        version: 0,
    }
}

fn wire(node: &str, key: &str, source: Source) -> (String, BTreeMap<String, Source>) {
    (node.to_string(), BTreeMap::from([(key.to_string(), source)]))
}

fn main() -> nodesmith::Result<()> {
    let library = NodeLibrary {
        pipeline_description: "summarize then answer".into(),
        nodes: vec![node("Answer", &["Summarize"], "summary", "answer"), node("Summarize", &[], "question", "summary")],
        connections_plan: ConnectionsPlan {
            inputs: BTreeMap::from([
                wire("Summarize", "question", Source::Input("question".into())),
                wire("Answer", "summary", Source::NodeKey { node: "Summarize".into(), key: "summary".into() }),
            ]),
            final_answer: Some(OutputRef { node: "Answer".into(), key: "answer".into() }),
        },
        epoch: 0,
        provenance: Provenance::default(),
    };
    let graph = build_pipeline_graph(&library)?;
    println!("order: {:?}", graph.ordered_nodes);
    println!("valid: {}", validate_library(&library).ok());
    println!("{} bytes serialized", serialize_library(&library)?.len());

    let mut cyclic = library.clone();
    cyclic.nodes[1].dependencies.push("Answer".into());
    println!("cyclic: {}", build_pipeline_graph(&cyclic).unwrap_err());

    let mut bad_prompt = library.clone();
    bad_prompt.nodes[0].implementation.prompt_template = "User Prompt: {undeclared}".into();
    println!("bad prompt: {}", validate_library(&bad_prompt));
    Ok(())
}
