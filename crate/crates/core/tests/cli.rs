mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{bin, golden_library_path, judicial_dir};
use nodesmith::model::NodeLibrary;
use nodesmith::reward::RewardLedger;

fn nodesmith(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn config_arg() -> String {
    judicial_dir().join("config.toml").display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The judicial config with the dataset pointed elsewhere.
fn config_with_dataset(dir: &Path, dataset: &Path) -> String {
    let j = judicial_dir();
    let text = format!(
        "seed = 7\n\n[dataset]\npath = {:?}\nfields = {{ id = \"id\" }}\n\n\
         [designer]\nprovider = \"mock\"\nscript = {:?}\n\n\
         [executor]\nprovider = \"mock\"\nscript = {:?}\n\n\
         [search]\nbackend = \"fixture\"\ndir = {:?}\n",
        dataset.display().to_string(),
        j.join("designer.json").display().to_string(),
        j.join("executor.json").display().to_string(),
        j.join("search").display().to_string(),
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn missing_dataset_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere.jsonl");
    let cfg = config_with_dataset(tmp.path(), &missing);
    let out_dir = tmp.path().join("gen");
    let o = nodesmith(&["generate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.jsonl"), "{}", stderr(&o));
}

#[test]
fn out_of_range_alpha_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = golden_library_path();
    let o = nodesmith(&[
        "optimize",
        "--config",
        &config_arg(),
        "--alpha",
        "1.5",
        "--library",
        lib.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"));
}

#[test]
fn missing_config_file_exits_two() {
    let o = nodesmith(&["generate", "--config", "/nonexistent/config.toml", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optimize_two_epochs_then_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    let lib = golden_library_path();
    let o = nodesmith(&[
        "optimize",
        "--config",
        &config_arg(),
        "--epochs",
        "2",
        "--library",
        lib.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for k in 0..=2 {
        assert!(run.join(format!("libraries/epoch_{k:03}.json")).is_file());
    }
    assert!(!run.join("libraries/epoch_003.json").exists());
    let reports = std::fs::read_dir(run.join("reports")).unwrap().count();
    assert_eq!(reports, 2);
    assert!(run.join("final_library.json").is_file());

    let o = nodesmith(&["inspect", run.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("epoch 1: bottleneck Fact_Analyzer"));
    assert!(lines[1].starts_with("epoch 2: bottleneck Legal_Search_Engine"));
    assert_eq!(lines[2], "final: libraries/epoch_002.json (last_epoch)");
}

#[test]
fn cyclic_library_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(golden_library_path()).unwrap();
    let mut lib: NodeLibrary = serde_json::from_str(&text).unwrap();
    let first = lib.nodes.iter().position(|n| n.node_name == "Case_Structurer").unwrap();
    lib.nodes[first].dependencies.push("Judgment_Drafter".into());
    let path = tmp.path().join("cyclic.json");
    std::fs::write(&path, serde_json::to_string_pretty(&lib).unwrap()).unwrap();
    let out_dir = tmp.path().join("traj");
    let o = nodesmith(&["run", "--config", &config_arg(), "--library", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("cycle"), "{}", stderr(&o));
}

#[test]
fn run_then_score_matches_the_optimizer_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    let lib = golden_library_path();
    let traj = tmp.path().join("traj");
    let o = nodesmith(&["run", "--config", &config_arg(), "--library", lib.to_str().unwrap(), "--out", traj.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = nodesmith(&["score", "--config", &config_arg(), "--trajectories", traj.to_str().unwrap(), "--epoch", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fresh: RewardLedger = serde_json::from_slice(&o.stdout).unwrap();

    let run = tmp.path().join("run");
    let o = nodesmith(&[
        "optimize",
        "--config",
        &config_arg(),
        "--epochs",
        "1",
        "--library",
        lib.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stored = std::fs::read(run.join("reports/epoch_001.json")).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&stored).unwrap();
    let stored_ledger: RewardLedger = serde_json::from_value(report["ledger"].clone()).unwrap();
    assert_eq!(fresh, stored_ledger);

    let o = nodesmith(&[
        "score",
        "--config",
        &config_arg(),
        "--trajectories",
        run.join("trajectories/epoch_001").to_str().unwrap(),
        "--epoch",
        "1",
    ]);
    assert!(o.status.success());
    let rescored: RewardLedger = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rescored, stored_ledger);
}
