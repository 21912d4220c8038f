//! Knowledge harvest: context buffer, keyword profile, strategy queries,
//! multi-turn search sessions and per-strategy analyses.

mod analysis;
mod buffer;
mod controller;
mod keywords;
mod pipeline;
mod queries;
mod search;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use analysis::{analyze_strategy, render_files_text, StrategyAnalysis, DEFAULT_CHAR_BUDGET};
pub use buffer::{sample_context_buffer, ContextBuffer};
pub use controller::{run_multi_turn_search, ControllerDecision, SearchRound, SearchSession};
pub use keywords::{extract_keywords, KeywordProfile, DIMENSIONS};
pub use pipeline::{harvest, HarvestOptions, HarvestOutput, Routing, SessionRecord};
pub use queries::{synthesize_queries, StrategyQuery, StrategyQuerySet};
pub use search::{
    fixture_file_name, parse_github, parse_searx, parse_semantic_scholar, FixtureBackend, FixtureRecord,
    HttpBackend, HttpSearchConfig, SearchBackend, SearchHit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    A,
    B,
    C,
    D,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::A, Strategy::B, Strategy::C, Strategy::D];

    pub fn intent(self) -> Intent {
        match self {
            Strategy::A => Intent::BackgroundKnowledge,
            Strategy::B => Intent::SystemArchitecture,
            Strategy::C => Intent::CodeImplementation,
            Strategy::D => Intent::Evaluation,
        }
    }

    /// Key used in the query-generation output.
    pub fn json_key(self) -> &'static str {
        match self {
            Strategy::A => "strategy_A",
            Strategy::B => "strategy_B",
            Strategy::C => "strategy_C",
            Strategy::D => "strategy_D",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Strategy::A => "Strategy A: Background Knowledge",
            Strategy::B => "Strategy B: High-quality Academic Papers about System Architecture (Workflow & Design)",
            Strategy::C => "Strategy C: Technical Code Implementation",
            Strategy::D => "Strategy D: Evaluation & Metrics",
        }
    }

    pub fn analysis_asset(self) -> &'static str {
        use crate::prompts::*;
        match self {
            Strategy::A => STRATEGY_A,
            Strategy::B => STRATEGY_B,
            Strategy::C => STRATEGY_C,
            Strategy::D => STRATEGY_D,
        }
    }

    /// Top-level keys the strategy's analysis payload must carry.
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            Strategy::A => &["aspects_covered", "background_information", "summary"],
            Strategy::B => &["architectural_patterns", "design_information", "summary"],
            Strategy::C => &["overall_framework", "llm_migration", "data_processing", "summary"],
            Strategy::D => &["evaluation_metrics", "evaluation_information", "summary"],
        }
    }

    /// Default search engines for the strategy.
    pub fn default_engines(self) -> &'static [EngineKind] {
        match self {
            Strategy::A => &[EngineKind::GeneralWeb, EngineKind::Scholarly],
            Strategy::B | Strategy::D => &[EngineKind::Scholarly, EngineKind::GeneralWeb],
            Strategy::C => &[EngineKind::CodeRepository],
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    BackgroundKnowledge,
    SystemArchitecture,
    CodeImplementation,
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    GeneralWeb,
    CodeRepository,
    Scholarly,
}

impl EngineKind {
    pub const ALL: [EngineKind; 3] = [EngineKind::GeneralWeb, EngineKind::CodeRepository, EngineKind::Scholarly];

    pub fn as_str(self) -> &'static str {
        match self {
            EngineKind::GeneralWeb => "general_web",
            EngineKind::CodeRepository => "code_repository",
            EngineKind::Scholarly => "scholarly",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
