//! Runs the golden judicial library on one case and scores the trajectory.

use std::path::Path;

use nodesmith::config::RunConfig;
use nodesmith::model::load_library;
use nodesmith::prompts::PromptLibrary;
use nodesmith::reward::score_trajectory;
use nodesmith::runtime::Runtime;

fn main() -> nodesmith::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/judicial");
    let config = RunConfig::load(&root.join("config.toml"))?;
    let library = load_library(&root.join("golden/library.json"))?;
    let samples = config.load_dataset()?;
    let prompts = PromptLibrary::load_default()?;
    let designer = config.gateway(&config.designer)?;
    let executor = config.gateway(&config.executor)?;
    let backend = config.search_backend()?;
    let runtime = Runtime {
        executor: &executor,
        designer: &designer,
        prompts: &prompts,
        backend: backend.as_ref(),
        max_rounds: config.harvest.max_search_rounds,
        rag_engine: config.runtime.rag_engine,
    };

    let traj = runtime.run_pipeline(&library, &samples[0])?;
    println!("case {}: {}", traj.sample_id, traj.question);
    for step in &traj.steps {
        let searched = step.retrieval.as_ref().map_or(0, |s| s.rounds.len());
        println!("--- {} (search rounds: {searched})\n{}", step.node_name, step.rendered.trim_end());
    }
    println!("final answer: {}", traj.final_answer);

    let scores = score_trajectory(&traj, &executor, config.reward.alpha, config.reward.delta_mode, None)?;
    println!("baseline J0 = {:?}", scores.baseline_j);
    for s in &scores.steps {
        println!("{:<22} J {:>7.3}  reward {:>8.4}", s.node_name, s.j.unwrap_or(f64::NAN), s.reward);
    }
    Ok(())
}
