//! Perplexity objective, improvement and consistency scores, per-step
//! rewards, and the per-epoch ledger that names the bottleneck node.

mod ledger;
mod math;
mod scoring;

pub use ledger::{aggregate_epoch, argmin_first, RewardLedger, DEFAULT_N_REFINE};
pub use math::{
    check_alpha, consistency_score, improvement_score, mean_logprob, objective, quality_score,
    relative_gain, step_rewards, DeltaMode, StepObjective, DELTA_CLAMP, EPSILON,
};
pub use scoring::{
    compose, measure_trajectory, score_trajectory, scoring_prompt, BaselineCache, Measured,
    SampleScores, StepScore,
};
