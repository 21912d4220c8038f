mod common;

use common::{golden_library_path, judicial_config};
use nodesmith::cli;
use nodesmith::model::{load_library, validate_library, NodeType};
use nodesmith::optimizer::{recompute_ledger, Optimizer, RunStore};
use nodesmith::prompts::PromptLibrary;
use nodesmith::reward::score_trajectory;
use nodesmith::runtime::Runtime;

const PIPELINE: [&str; 5] = ["Case_Structurer", "Fact_Analyzer", "Legal_Search_Engine", "Damages_Calculator", "Judgment_Drafter"];

#[test]
fn generate_reproduces_the_golden_library() {
    let config = judicial_config();
    let out = tempfile::tempdir().unwrap();
    cli::generate(&config, out.path()).unwrap();
    let produced = std::fs::read_to_string(out.path().join("library.json")).unwrap();
    let golden = std::fs::read_to_string(golden_library_path()).unwrap();
    assert_eq!(produced, golden);
    assert!(out.path().join("harvest.json").is_file());
}

#[test]
fn golden_library_is_a_valid_five_node_pipeline() {
    let lib = load_library(&golden_library_path()).unwrap();
    assert!(validate_library(&lib).ok());
    assert_eq!(lib.nodes.len(), 5);
    let lse = lib.node("Legal_Search_Engine").unwrap();
    assert_eq!(lse.node_type, NodeType::RetrievalRag);
    assert_eq!(lse.tools_needed(), ["Search"]);
    assert!(lse.prompt_template().contains("{retrieved_context}"));
    assert_eq!(lib.connections_plan.final_answer.as_ref().unwrap().node, "Judgment_Drafter");
}

#[test]
fn trajectory_and_one_epoch_are_recomputable() {
    let config = judicial_config();
    let lib = load_library(&golden_library_path()).unwrap();
    let samples = config.load_validation().unwrap();
    let prompts = PromptLibrary::load_default().unwrap();
    let designer = config.gateway(&config.designer).unwrap();
    let executor = config.gateway(&config.executor).unwrap();
    let backend = config.search_backend().unwrap();
    let runtime = Runtime {
        executor: &executor,
        designer: &designer,
        prompts: &prompts,
        backend: backend.as_ref(),
        max_rounds: config.harvest.max_search_rounds,
        rag_engine: config.runtime.rag_engine,
    };

    let traj = runtime.run_pipeline(&lib, &samples[0]).unwrap();
    assert_eq!(traj.order(), PIPELINE);
    assert_eq!(traj.accumulated.len(), 6);
    assert!(traj.steps.iter().all(|s| !s.failed));
    let lse = &traj.steps[2];
    assert!(lse.retrieval.as_ref().is_some_and(|r| r.has_content()));
    let scores = score_trajectory(&traj, &executor, 0.6, Default::default(), None).unwrap();
    assert_eq!(scores.steps.len(), 5);
    let telescoped: f64 = scores.steps.iter().map(|s| s.reward).sum();
    assert!((telescoped - scores.steps[4].quality).abs() < 1e-12);

    let optimizer = Optimizer::new(runtime, config.optimize_settings());
    let out = optimizer.run_epoch(1, &lib, &samples).unwrap();
    let ledger = out.report.ledger.as_ref().unwrap();
    assert_eq!(ledger.bottleneck, "Fact_Analyzer");
    assert_eq!(ledger.refinement_sample_ids, ["case_01", "case_02", "case_03"]);
    assert!(out.report.changed);
    assert_eq!(out.library.node("Fact_Analyzer").unwrap().version, 1);
    for name in PIPELINE.iter().filter(|n| **n != "Fact_Analyzer") {
        assert_eq!(out.library.node(name), lib.node(name));
    }
    let again = recompute_ledger(1, &out.dumps, 0.6, Default::default(), 3).unwrap();
    assert_eq!(&again, ledger);
}

#[test]
fn three_epoch_run_follows_the_bottleneck() {
    let config = judicial_config();
    let out = tempfile::tempdir().unwrap();
    cli::optimize(&config, &golden_library_path(), out.path()).unwrap();
    let store = RunStore::open(out.path()).unwrap();
    let reports = store.reports().unwrap();
    let bottlenecks: Vec<&str> = reports.iter().map(|r| r.ledger.as_ref().unwrap().bottleneck.as_str()).collect();
    assert_eq!(bottlenecks, ["Fact_Analyzer", "Legal_Search_Engine", "Legal_Search_Engine"]);
    assert_eq!(reports[1].ledger.as_ref().unwrap().refinement_sample_ids, ["case_05", "case_01", "case_02"]);
    assert!(reports[0].changed && reports[1].changed && !reports[2].changed);

    for r in &reports {
        let dumps = store.dumps(r.epoch).unwrap();
        assert_eq!(dumps.len(), 6);
        let again = recompute_ledger(r.epoch, &dumps, 0.6, Default::default(), 3).unwrap();
        assert_eq!(Some(&again), r.ledger.as_ref());
    }
    let marker = store.read_final().unwrap();
    assert_eq!(marker.selected_snapshot, 3);
    let final_lib = load_library(&store.final_library_path()).unwrap();
    assert_eq!(final_lib, load_library(&store.library_path(3)).unwrap());
    assert!(final_lib.node("Legal_Search_Engine").unwrap().prompt_template().contains("two-stage"));
}
