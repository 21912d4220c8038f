use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::analysis::{analyze_strategy, StrategyAnalysis, DEFAULT_CHAR_BUDGET};
use super::buffer::{sample_context_buffer, ContextBuffer};
use super::controller::{run_multi_turn_search, SearchSession};
use super::keywords::{extract_keywords, KeywordProfile};
use super::queries::{synthesize_queries, StrategyQuerySet};
use super::search::SearchBackend;
use super::{EngineKind, Strategy};
use crate::dataset::Sample;
use crate::error::Result;
use crate::llm::Gateway;
use crate::parallel::parallel_map;
use crate::prompts::PromptLibrary;

/// Engines searched for each strategy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Routing(pub BTreeMap<Strategy, Vec<EngineKind>>);

impl Default for Routing {
    fn default() -> Self {
        Routing(Strategy::ALL.iter().map(|&s| (s, s.default_engines().to_vec())).collect())
    }
}

impl Routing {
    pub fn engines(&self, strategy: Strategy) -> &[EngineKind] {
        self.0.get(&strategy).map(Vec::as_slice).unwrap_or(strategy.default_engines())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestOptions {
    pub n: usize,
    pub seed: u64,
    pub max_rounds: usize,
    /// Generated queries actually searched, per strategy.
    pub query_budget: usize,
    pub char_budget: usize,
    pub routing: Routing,
    pub jobs: usize,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        Self {
            n: 10,
            seed: 0,
            max_rounds: 10,
            query_budget: 3,
            char_budget: DEFAULT_CHAR_BUDGET,
            routing: Routing::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: String,
    pub strategy: Strategy,
    pub query: String,
    pub session: SearchSession,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestOutput {
    pub buffer: ContextBuffer,
    pub profile: KeywordProfile,
    pub query_sets: Vec<StrategyQuerySet>,
    pub sessions: Vec<SessionRecord>,
    /// Sessions that errored, as (id, message); they feed no analysis.
    pub failed_sessions: Vec<(String, String)>,
    pub analyses: Vec<StrategyAnalysis>,
}

struct Job<'a> {
    id: String,
    strategy: Strategy,
    query: &'a str,
    kind: EngineKind,
}

/// Buffer, keywords, queries, searches, analyses. Sessions run on up to
/// `options.jobs` threads; the output does not depend on scheduling.
pub fn harvest(
    designer: &Gateway,
    prompts: &PromptLibrary,
    backend: &dyn SearchBackend,
    source: &[Sample],
    source_name: &str,
    options: &HarvestOptions,
) -> Result<HarvestOutput> {
    let buffer = sample_context_buffer(source, options.n, options.seed, source_name)?;
    let profile = extract_keywords(designer, prompts, &buffer)?;
    let query_sets = synthesize_queries(designer, prompts, &profile)?;

    let mut jobs = Vec::new();
    for set in &query_sets {
        for (qi, q) in set.queries.iter().take(options.query_budget).enumerate() {
            for &kind in options.routing.engines(set.strategy) {
                jobs.push(Job {
                    id: format!("{}-{:02}-{}", set.strategy, qi + 1, kind),
                    strategy: set.strategy,
                    query: &q.query,
                    kind,
                });
            }
        }
    }
    log::info!("harvest: {} search sessions", jobs.len());
    let results = parallel_map(&jobs, options.jobs, |job| {
        run_multi_turn_search(designer, prompts, job.query, job.kind, backend, options.max_rounds)
    });

    let mut sessions = Vec::new();
    let mut failed_sessions = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(session) => sessions.push(SessionRecord {
                id: job.id.clone(),
                strategy: job.strategy,
                query: job.query.to_string(),
                session,
            }),
            Err(e) => {
                log::warn!("session {} failed: {e}", job.id);
                failed_sessions.push((job.id.clone(), e.to_string()));
            }
        }
    }

    let mut analyses = Vec::new();
    for strategy in Strategy::ALL {
        let picked: Vec<(String, &SearchSession)> = sessions
            .iter()
            .filter(|r| r.strategy == strategy)
            .map(|r| (r.id.clone(), &r.session))
            .collect();
        analyses.push(analyze_strategy(
            designer,
            prompts,
            strategy,
            &picked,
            &profile.thinking,
            options.char_budget,
        )?);
    }
    Ok(HarvestOutput { buffer, profile, query_sets, sessions, failed_sessions, analyses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_routing() {
        let r = Routing::default();
        assert_eq!(r.engines(Strategy::C), [EngineKind::CodeRepository]);
        for s in [Strategy::A, Strategy::B, Strategy::D] {
            let mut e = r.engines(s).to_vec();
            e.sort();
            assert_eq!(e, [EngineKind::GeneralWeb, EngineKind::Scholarly]);
        }
    }

    #[test]
    fn routing_override_parses() {
        let r: Routing = serde_json::from_str(r#"{"C": ["general_web"]}"#).unwrap();
        assert_eq!(r.engines(Strategy::C), [EngineKind::GeneralWeb]);
        assert_eq!(r.engines(Strategy::A), Strategy::A.default_engines());
    }
}
