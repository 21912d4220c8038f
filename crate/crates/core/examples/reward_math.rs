//! Step rewards for one trajectory from hand-picked objectives.

use nodesmith::reward::{compose, consistency_score, improvement_score, relative_gain, DeltaMode, Measured};

fn measured(j: f64) -> Measured {
    Measured { j: Some(j), token_count: 4, note: None }
}

fn main() -> nodesmith::Result<()> {
    let baseline = measured(-2.0);
    let js = [-1.5, -1.8, -1.0];
    let names: Vec<String> = ["Parse", "Retrieve", "Draft"].iter().map(|s| s.to_string()).collect();
    let steps: Vec<Measured> = js.iter().copied().map(measured).collect();

    let scores = compose("demo", &names, &baseline, &steps, 0.6, DeltaMode::Magnitude)?;
    println!("{:<10} {:>7} {:>7} {:>7} {:>7} {:>8}", "node", "J", "S_i", "S_c", "S_t", "reward");
    for s in &scores.steps {
        println!(
            "{:<10} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>8.4}",
            s.node_name,
            s.j.unwrap_or(f64::NAN),
            s.improvement,
            s.consistency,
            s.quality,
            s.reward
        );
    }
    let total: f64 = scores.steps.iter().map(|s| s.reward).sum();
    println!("rewards sum to {total:.6}, the last quality");

    let delta = relative_gain(-1.0, -2.0, DeltaMode::Magnitude);
    println!("delta {delta} -> S_i {:.6}", improvement_score(delta));
    println!("consistency of {js:?}: {:.4}", consistency_score(&js));
    Ok(())
}
