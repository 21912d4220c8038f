use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::math::DeltaMode;
use super::scoring::SampleScores;
use crate::error::{Error, Result};

/// Default number of samples handed to refinement.
pub const DEFAULT_N_REFINE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardLedger {
    pub epoch: u32,
    pub alpha: f64,
    pub delta_mode: DeltaMode,
    /// Pipeline order the step indices refer to.
    pub node_order: Vec<String>,
    pub per_sample: BTreeMap<String, SampleScores>,
    pub per_node_mean: BTreeMap<String, f64>,
    pub bottleneck: String,
    pub refinement_sample_ids: Vec<String>,
}

impl RewardLedger {
    pub fn mean(&self, node: &str) -> Option<f64> {
        self.per_node_mean.get(node).copied()
    }

    /// Mean of all per-node means, used by best-mean selection.
    pub fn overall_mean(&self) -> f64 {
        if self.per_node_mean.is_empty() {
            return 0.0;
        }
        self.node_order.iter().filter_map(|n| self.mean(n)).sum::<f64>() / self.node_order.len() as f64
    }
}

/// Index of the smallest value; ties go to the earliest position.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.map_or(true, |b| v.total_cmp(&values[b]).is_lt()) {
            best = Some(i);
        }
    }
    best
}

pub fn aggregate_epoch(
    epoch: u32,
    node_order: &[String],
    scores: &[SampleScores],
    alpha: f64,
    delta_mode: DeltaMode,
    n_refine: usize,
) -> Result<RewardLedger> {
    if scores.is_empty() {
        return Err(Error::Precondition("no sample scores to aggregate".into()));
    }
    let m = node_order.len();
    let mut per_sample = BTreeMap::new();
    for s in scores {
        if s.steps.len() != m {
            return Err(Error::Alignment(format!(
                "sample {} has {} step scores for {m} nodes",
                s.sample_id,
                s.steps.len()
            )));
        }
        if let Some((st, want)) = s.steps.iter().zip(node_order).find(|(st, want)| st.node_name != **want) {
            return Err(Error::Alignment(format!(
                "sample {} scores {} where {want} was expected",
                s.sample_id, st.node_name
            )));
        }
        if per_sample.insert(s.sample_id.clone(), s.clone()).is_some() {
            return Err(Error::Alignment(format!("duplicate sample id {}", s.sample_id)));
        }
    }

    // Summed in sample-id order so the result does not depend on input order.
    let means: Vec<f64> = (0..m)
        .map(|t| per_sample.values().map(|s: &SampleScores| s.steps[t].reward).sum::<f64>() / per_sample.len() as f64)
        .collect();
    let b = argmin_first(&means).ok_or_else(|| Error::Precondition("library has no nodes".into()))?;

    let mut evidence: Vec<(f64, &String)> = per_sample
        .values()
        .filter(|s| {
            let rb = s.steps[b].reward;
            s.steps.iter().enumerate().all(|(t, st)| t == b || rb < st.reward)
        })
        .map(|s| (s.steps[b].reward, &s.sample_id))
        .collect();
    evidence.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(y.1)));
    let refinement_sample_ids = evidence.into_iter().take(n_refine).map(|(_, id)| id.clone()).collect();

    Ok(RewardLedger {
        epoch,
        alpha,
        delta_mode,
        node_order: node_order.to_vec(),
        per_node_mean: node_order.iter().cloned().zip(means).collect(),
        bottleneck: node_order[b].clone(),
        per_sample,
        refinement_sample_ids,
    })
}
