use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::CompletionScore;

/// Guard on |J_0| in the gain denominator.
pub const EPSILON: f64 = 1e-6;

/// |δ| is capped here before tanh.
pub const DELTA_CLAMP: f64 = 10.0;

/// How the relative gain is normalised by the baseline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// (J_t − J_0) / |J_0|: a context that makes the answer more likely raises δ.
    #[default]
    Magnitude,
    /// (J_t − J_0) / J_0 with no absolute value. With J ≤ 0 this flips the sign.
    Literal,
}

impl DeltaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DeltaMode::Magnitude => "magnitude",
            DeltaMode::Literal => "literal",
        }
    }
}

/// Mean token logprob of one forced completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepObjective {
    pub t: usize,
    /// Natural-log units, never positive.
    pub j: f64,
    pub token_count: usize,
}

impl StepObjective {
    pub fn perplexity(&self) -> f64 {
        (-self.j).exp()
    }
}

pub fn objective(t: usize, score: &CompletionScore) -> Result<StepObjective> {
    let j = mean_logprob(score.logprobs())?;
    Ok(StepObjective { t, j, token_count: score.tokens.len() })
}

pub fn mean_logprob(logprobs: impl IntoIterator<Item = f64>) -> Result<f64> {
    let (sum, n) = logprobs.into_iter().fold((0.0, 0usize), |(s, n), lp| (s + lp, n + 1));
    if n == 0 {
        return Err(Error::EmptyTarget);
    }
    Ok(sum / n as f64)
}

pub fn relative_gain(j_t: f64, j_0: f64, mode: DeltaMode) -> f64 {
    let delta = match mode {
        DeltaMode::Magnitude => (j_t - j_0) / j_0.abs().max(EPSILON),
        DeltaMode::Literal => {
            let denom = if j_0.abs() < EPSILON { -EPSILON } else { j_0 };
            (j_t - j_0) / denom
        }
    };
    delta.clamp(-DELTA_CLAMP, DELTA_CLAMP)
}

/// tanh(δ + 1). δ is clamped first so the result stays strictly inside (−1, 1).
pub fn improvement_score(delta: f64) -> f64 {
    (delta.clamp(-DELTA_CLAMP, DELTA_CLAMP) + 1.0).tanh()
}

/// Kendall-type trend of J over step index, in [−1, 1]; 0 for a single point.
///
/// Counts, for each j, the earlier values below and above J_j using a sorted
/// prefix, so the cost is O(t log t) comparisons.
pub fn consistency_score(js: &[f64]) -> f64 {
    let t = js.len();
    if t < 2 {
        return 0.0;
    }
    let mut seen: Vec<f64> = Vec::with_capacity(t);
    let mut concordance: i64 = 0;
    for &x in js {
        let below = seen.partition_point(|v| v.total_cmp(&x).is_lt());
        let not_above = seen.partition_point(|v| v.total_cmp(&x).is_le());
        concordance += below as i64 - (seen.len() - not_above) as i64;
        seen.insert(not_above, x);
    }
    2.0 * concordance as f64 / (t * (t - 1)) as f64
}

pub fn quality_score(s_i: f64, s_c: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok((1.0 - alpha) * s_i + alpha * s_c)
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::AlphaRange(alpha))
    }
}

/// r_1 = S_1, r_t = S_t − S_{t−1}.
pub fn step_rewards(qualities: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    qualities
        .iter()
        .map(|&s| {
            let r = s - prev;
            prev = s;
            r
        })
        .collect()
}
