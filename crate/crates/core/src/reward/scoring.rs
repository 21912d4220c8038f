use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::math::{
    check_alpha, consistency_score, improvement_score, objective, quality_score, relative_gain, DeltaMode,
};
use crate::error::Result;
use crate::llm::{fingerprint, Gateway};
use crate::runtime::Trajectory;

/// Prompt the Executor completes with the ground truth.
pub fn scoring_prompt(question: &str, context: &str) -> String {
    format!("Question: {question}\n\nReasoning so far:\n{context}\n\nAnswer:")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub t: usize,
    pub node_name: String,
    /// Mean target logprob given A_t; `None` when scoring failed.
    pub j: Option<f64>,
    pub token_count: usize,
    pub delta: f64,
    pub improvement: f64,
    pub consistency: f64,
    pub quality: f64,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub sample_id: String,
    /// J_0, the empty-context baseline.
    pub baseline_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_note: Option<String>,
    pub steps: Vec<StepScore>,
}

/// Raw scoring result for one context: J and token count, or the failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub j: Option<f64>,
    pub token_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Builds step scores from measured objectives.
///
/// A step without J, or every step when J_0 is missing, gets reward 0 and
/// carries the previous quality forward, so rewards still sum to the last
/// quality. Consistency at step t uses the J values measured up to t.
pub fn compose(
    sample_id: &str,
    node_names: &[String],
    baseline: &Measured,
    measured: &[Measured],
    alpha: f64,
    mode: DeltaMode,
) -> Result<SampleScores> {
    check_alpha(alpha)?;
    let mut steps = Vec::with_capacity(measured.len());
    let mut seen: Vec<f64> = Vec::new();
    let mut prev_quality = 0.0;
    for (i, (m, name)) in measured.iter().zip(node_names).enumerate() {
        let t = i + 1;
        let step = match (baseline.j, m.j) {
            (Some(j0), Some(j)) => {
                seen.push(j);
                let delta = relative_gain(j, j0, mode);
                let improvement = improvement_score(delta);
                let consistency = consistency_score(&seen);
                let quality = quality_score(improvement, consistency, alpha)?;
                let reward = quality - prev_quality;
                prev_quality = quality;
                StepScore {
                    t,
                    node_name: name.clone(),
                    j: Some(j),
                    token_count: m.token_count,
                    delta,
                    improvement,
                    consistency,
                    quality,
                    reward,
                    failed: false,
                    note: None,
                }
            }
            (j0, j) => {
                let note = if j0.is_none() {
                    Some(format!("baseline unavailable: {}", baseline.note.clone().unwrap_or_default()))
                } else {
                    m.note.clone()
                };
                StepScore {
                    t,
                    node_name: name.clone(),
                    j,
                    token_count: m.token_count,
                    delta: 0.0,
                    improvement: 0.0,
                    consistency: 0.0,
                    quality: prev_quality,
                    reward: 0.0,
                    failed: true,
                    note,
                }
            }
        };
        steps.push(step);
    }
    Ok(SampleScores {
        sample_id: sample_id.to_string(),
        baseline_j: baseline.j,
        baseline_note: baseline.note.clone(),
        steps,
    })
}

/// Optional per-prompt memo of J_0, valid while the Executor is unchanged.
#[derive(Debug, Default)]
pub struct BaselineCache {
    inner: Mutex<HashMap<(String, String), Measured>>,
}

impl BaselineCache {
    pub fn len(&self) -> usize {
        self.inner.lock().expect("baseline cache").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn measure(gateway: &Gateway, t: usize, prompt: &str, target: &str) -> Measured {
    match gateway.score_completion(prompt, target).and_then(|s| objective(t, &s)) {
        Ok(o) => Measured { j: Some(o.j), token_count: o.token_count, note: None },
        Err(e) => {
            log::warn!("scoring step {t} failed: {e}");
            Measured { j: None, token_count: 0, note: Some(e.to_string()) }
        }
    }
}

/// Objectives for J_0 .. J_m. Without a cache this is exactly m+1 scoring calls.
pub fn measure_trajectory(
    traj: &Trajectory,
    gateway: &Gateway,
    cache: Option<&BaselineCache>,
) -> (Measured, Vec<Measured>) {
    let target = traj.ground_truth.as_str();
    let base_prompt = scoring_prompt(&traj.question, &traj.accumulated[0]);
    let baseline = match cache {
        Some(c) => {
            let key = (fingerprint(&base_prompt), target.to_string());
            let hit = c.inner.lock().expect("baseline cache").get(&key).cloned();
            match hit {
                Some(m) => m,
                None => {
                    let m = measure(gateway, 0, &base_prompt, target);
                    if m.j.is_some() {
                        c.inner.lock().expect("baseline cache").insert(key, m.clone());
                    }
                    m
                }
            }
        }
        None => measure(gateway, 0, &base_prompt, target),
    };
    let steps = (1..=traj.steps.len())
        .map(|t| measure(gateway, t, &scoring_prompt(&traj.question, &traj.accumulated[t]), target))
        .collect();
    (baseline, steps)
}

pub fn score_trajectory(
    traj: &Trajectory,
    gateway: &Gateway,
    alpha: f64,
    mode: DeltaMode,
    cache: Option<&BaselineCache>,
) -> Result<SampleScores> {
    check_alpha(alpha)?;
    traj.check()?;
    let (baseline, measured) = measure_trajectory(traj, gateway, cache);
    let names: Vec<String> = traj.steps.iter().map(|s| s.node_name.clone()).collect();
    compose(&traj.sample_id, &names, &baseline, &measured, alpha, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockProvider, MockScript};
    use crate::runtime::Step;
    use proptest::prelude::*;
    use serde_json::Map;
    use std::sync::Arc;

    fn ok(j: f64) -> Measured {
        Measured { j: Some(j), token_count: 1, note: None }
    }

    fn names(m: usize) -> Vec<String> {
        (1..=m).map(|i| format!("N{i}")).collect()
    }

    fn traj(m: usize) -> Trajectory {
        let mut accumulated = vec![String::new()];
        let mut steps = Vec::new();
        for i in 1..=m {
            let rendered = format!("### Output of N{i}\nout: step{i}\n");
            accumulated.push(format!("{}{rendered}", accumulated.last().unwrap()));
            steps.push(Step {
                node_name: format!("N{i}"),
                output: Map::new(),
                rendered,
                failed: false,
                failure_note: String::new(),
                retrieval: None,
            });
        }
        Trajectory {
            sample_id: "s1".into(),
            question: "q".into(),
            ground_truth: "the answer".into(),
            steps,
            accumulated,
            final_answer: String::new(),
        }
    }

    #[test]
    fn one_node_composition() {
        let s = compose("s", &names(1), &ok(-2.0), &[ok(-1.0)], 0.6, DeltaMode::Magnitude).unwrap();
        let st = &s.steps[0];
        assert_eq!(st.delta, 0.5);
        assert!((st.improvement - 0.905148).abs() < 1e-6);
        assert_eq!(st.consistency, 0.0);
        assert!((st.quality - 0.362059).abs() < 1e-6);
        assert!((st.reward - 0.362059).abs() < 1e-6);
    }

    #[test]
    fn flat_trajectory() {
        let s = compose("s", &names(4), &ok(-2.0), &vec![ok(-2.0); 4], 0.6, DeltaMode::Magnitude).unwrap();
        let tanh1 = 1f64.tanh();
        assert!(s.steps.iter().all(|st| st.delta == 0.0 && st.improvement == tanh1));
        let sum: f64 = s.steps.iter().map(|st| st.reward).sum();
        assert!((sum - s.steps[3].quality).abs() < 1e-12);
    }

    #[test]
    fn failed_step_carries_quality() {
        let failed = Measured { j: None, token_count: 0, note: Some("boom".into()) };
        let s = compose("s", &names(3), &ok(-2.0), &[ok(-1.0), failed, ok(-0.5)], 0.6, DeltaMode::Magnitude).unwrap();
        assert!(s.steps[1].failed);
        assert_eq!(s.steps[1].reward, 0.0);
        assert_eq!(s.steps[1].quality, s.steps[0].quality);
        assert_eq!(s.steps[2].consistency, 1.0);
        let sum: f64 = s.steps.iter().map(|st| st.reward).sum();
        assert!((sum - s.steps[2].quality).abs() < 1e-12);
    }

    #[test]
    fn issues_m_plus_one_calls() {
        let script = MockScript { score_fallback: crate::llm::ScoreFallback::Synthetic, ..Default::default() };
        let mock = Arc::new(MockProvider::new(script));
        let gw = Gateway::new(mock.clone());
        let t = traj(4);
        let s = score_trajectory(&t, &gw, 0.6, DeltaMode::Magnitude, None).unwrap();
        assert_eq!(gw.score_call_count(), 5);
        let prompts: Vec<_> = mock.score_calls().into_iter().map(|(p, _)| p).collect();
        assert_eq!(prompts[0], "Question: q\n\nReasoning so far:\n\n\nAnswer:");
        assert!(prompts[4].ends_with("out: step4\n\n\nAnswer:"));
        assert_eq!(s, score_trajectory(&t, &gw, 0.6, DeltaMode::Magnitude, None).unwrap());
    }

    #[test]
    fn cache_skips_repeated_baseline() {
        let script = MockScript { score_fallback: crate::llm::ScoreFallback::Synthetic, ..Default::default() };
        let gw = Gateway::new(Arc::new(MockProvider::new(script)));
        let cache = BaselineCache::default();
        let t = traj(2);
        let a = score_trajectory(&t, &gw, 0.6, DeltaMode::Magnitude, Some(&cache)).unwrap();
        let b = score_trajectory(&t, &gw, 0.6, DeltaMode::Magnitude, Some(&cache)).unwrap();
        assert_eq!(a, b);
        assert_eq!(gw.score_call_count(), 5);
        assert_eq!(cache.len(), 1);
    }

    proptest! {
        #[test]
        fn rewards_sum_to_last_quality(
            j0 in -6.0f64..-0.01,
            js in prop::collection::vec(prop::option::weighted(0.85, -6.0f64..0.0), 1..=8),
            alpha in 0.0f64..=1.0,
        ) {
            let measured: Vec<Measured> = js.iter().map(|j| Measured { j: *j, token_count: 1, note: None }).collect();
            let s = compose("s", &names(js.len()), &ok(j0), &measured, alpha, DeltaMode::Magnitude).unwrap();
            let sum: f64 = s.steps.iter().map(|st| st.reward).sum();
            prop_assert!((sum - s.steps.last().unwrap().quality).abs() <= 1e-12);
            prop_assert!(s.steps.iter().all(|st| st.quality > -1.0 && st.quality < 1.0));
        }
    }
}
