//! Knowledge harvest over the bundled judicial fixtures.

use std::path::Path;

use nodesmith::config::RunConfig;
use nodesmith::harvest::harvest;
use nodesmith::prompts::PromptLibrary;

fn main() -> nodesmith::Result<()> {
    let config = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/judicial/config.toml"))?;
    let source = config.load_dataset()?;
    let prompts = PromptLibrary::load_default()?;
    let designer = config.gateway(&config.designer)?;
    let backend = config.search_backend()?;

    let out = harvest(&designer, &prompts, backend.as_ref(), &source, &config.dataset_name(), &config.harvest_options())?;
    let ids: Vec<&str> = out.buffer.samples.iter().map(|s| s.id.as_str()).collect();
    println!("context buffer: {ids:?}");
    for (dim, words) in &out.profile.dimensions {
        println!("{dim}: {}", words.join(", "));
    }
    for set in &out.query_sets {
        println!("strategy {:?}: {} queries", set.strategy, set.queries.len());
    }
    println!("{} search sessions, {} failed", out.sessions.len(), out.failed_sessions.len());
    for a in &out.analyses {
        let keys: Vec<&String> = a.payload.keys().collect();
        println!("analysis {:?} from {} sessions: {keys:?}", a.strategy, a.source_sessions.len());
    }
    Ok(())
}
