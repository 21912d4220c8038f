//! Harvest, then synthesize and validate the initial node library.

use std::path::Path;

use nodesmith::config::RunConfig;
use nodesmith::harvest::harvest;
use nodesmith::model::{build_pipeline_graph, Provenance};
use nodesmith::prompts::PromptLibrary;
use nodesmith::synthesis::{SynthesisOptions, Synthesizer};

fn main() -> nodesmith::Result<()> {
    let config = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/judicial/config.toml"))?;
    let source = config.load_dataset()?;
    let prompts = PromptLibrary::load_default()?;
    let designer = config.gateway(&config.designer)?;
    let backend = config.search_backend()?;
    let harvested =
        harvest(&designer, &prompts, backend.as_ref(), &source, &config.dataset_name(), &config.harvest_options())?;

    let synth = Synthesizer { designer: &designer, prompts: &prompts, options: SynthesisOptions::default() };
    let provenance = Provenance { seed: config.seed, designer: designer.provider_name().into(), dataset: config.dataset_name() };
    let library =
        synth.generate_initial_nodes(&harvested.profile.thinking, &harvested.buffer.samples, &harvested.analyses, provenance)?;

    println!("{}", library.pipeline_description);
    let graph = build_pipeline_graph(&library)?;
    for name in &graph.ordered_nodes {
        let bp = library.node(name).expect("ordered from the library");
        println!("  {name} [{}] {:?} -> {:?}", bp.node_type, bp.input_keys, bp.output_keys);
    }
    if let Some(out) = &library.connections_plan.final_answer {
        println!("final answer: {}.{}", out.node, out.key);
    }
    println!("designer calls: {}", designer.chat_call_count());
    Ok(())
}
