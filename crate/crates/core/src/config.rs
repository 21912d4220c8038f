//! Run configuration, read from TOML. Relative paths resolve against the
//! config file's directory. Secrets never live here: live providers name the
//! environment variable that holds their key.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{load_jsonl, FieldMap, Sample};
use crate::error::{Error, Result};
use crate::harvest::{EngineKind, FixtureBackend, HarvestOptions, HttpBackend, HttpSearchConfig, Routing, SearchBackend, DEFAULT_CHAR_BUDGET};
use crate::llm::{Gateway, MockProvider, OpenAiCompatible, OpenAiConfig, Rates, SamplingParams};
use crate::optimizer::{OptimizeSettings, SelectionPolicy};
use crate::reward::{check_alpha, DeltaMode, DEFAULT_N_REFINE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Cap on concurrent samples and search sessions.
    pub jobs: usize,
    pub dataset: DatasetConfig,
    pub harvest: HarvestConfig,
    pub reward: RewardConfig,
    pub optimize: OptimizeConfig,
    pub runtime: RuntimeConfig,
    pub designer: RoleConfig,
    pub executor: RoleConfig,
    pub search: SearchConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub fields: FieldMap,
    /// Validation set for optimization; the dataset itself when absent.
    pub validation: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestConfig {
    /// Context-buffer size N.
    pub n: usize,
    pub max_search_rounds: usize,
    pub query_budget: usize,
    pub char_budget: usize,
    pub routing: Routing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha: f64,
    pub delta_mode: DeltaMode,
    pub n_refine: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// K.
    pub epochs: u32,
    pub selection: SelectionPolicy,
    pub cache_baseline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Engine Retrieval_RAG nodes search with.
    pub rag_engine: EngineKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    Mock { script: PathBuf },
    Openai(OpenAiConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleConfig {
    #[serde(flatten)]
    pub provider: ProviderConfig,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub rates: Rates,
}

fn default_temperature() -> f64 {
    SamplingParams::default().temperature
}

fn default_max_tokens() -> u32 {
    SamplingParams::default().max_tokens
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum SearchConfig {
    Fixture { dir: PathBuf },
    Http(HttpSearchConfig),
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            dataset: DatasetConfig::default(),
            harvest: HarvestConfig::default(),
            reward: RewardConfig::default(),
            optimize: OptimizeConfig::default(),
            runtime: RuntimeConfig::default(),
            designer: RoleConfig::mock("designer.json"),
            executor: RoleConfig::mock("executor.json"),
            search: SearchConfig::Fixture { dir: "search".into() },
            base_dir: PathBuf::from("."),
        }
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { path: "dataset.jsonl".into(), fields: FieldMap::default(), validation: None }
    }
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            n: 10,
            max_search_rounds: 10,
            query_budget: 3,
            char_budget: DEFAULT_CHAR_BUDGET,
            routing: Routing::default(),
        }
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { alpha: 0.6, delta_mode: DeltaMode::Magnitude, n_refine: DEFAULT_N_REFINE }
    }
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self { epochs: 10, selection: SelectionPolicy::LastEpoch, cache_baseline: false }
    }
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self { rag_engine: EngineKind::GeneralWeb }
    }
}

impl RoleConfig {
    pub fn mock(script: impl Into<PathBuf>) -> Self {
        Self {
            provider: ProviderConfig::Mock { script: script.into() },
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            rates: Rates::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let mut config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.into_inner().message().to_string(),
        })?;
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.reward.alpha)?;
        let positive = [
            ("jobs", self.jobs),
            ("harvest.n", self.harvest.n),
            ("harvest.max_search_rounds", self.harvest.max_search_rounds),
            ("harvest.query_budget", self.harvest.query_budget),
            ("reward.n_refine", self.reward.n_refine),
            ("optimize.epochs", self.optimize.epochs as usize),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_dataset(&self) -> Result<Vec<Sample>> {
        read_samples(&self.resolve(&self.dataset.path), &self.dataset.fields)
    }

    pub fn load_validation(&self) -> Result<Vec<Sample>> {
        match &self.dataset.validation {
            Some(p) => read_samples(&self.resolve(p), &self.dataset.fields),
            None => self.load_dataset(),
        }
    }

    /// Name recorded in library provenance: the dataset file name.
    pub fn dataset_name(&self) -> String {
        self.dataset.path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    }

    pub fn harvest_options(&self) -> HarvestOptions {
        HarvestOptions {
            n: self.harvest.n,
            seed: self.seed,
            max_rounds: self.harvest.max_search_rounds,
            query_budget: self.harvest.query_budget,
            char_budget: self.harvest.char_budget,
            routing: self.harvest.routing.clone(),
            jobs: self.jobs,
        }
    }

    pub fn optimize_settings(&self) -> OptimizeSettings {
        OptimizeSettings {
            alpha: self.reward.alpha,
            delta_mode: self.reward.delta_mode,
            n_refine: self.reward.n_refine,
            jobs: self.jobs,
            cache_baseline: self.optimize.cache_baseline,
            selection: self.optimize.selection,
        }
    }

    pub fn gateway(&self, role: &RoleConfig) -> Result<Gateway> {
        let sampling = SamplingParams { temperature: role.temperature, max_tokens: role.max_tokens };
        let gateway = match &role.provider {
            ProviderConfig::Mock { script } => {
                let path = self.resolve(script);
                let provider = MockProvider::from_file(&path).map_err(as_input_error)?;
                Gateway::new(Arc::new(provider))
            }
            ProviderConfig::Openai(cfg) => Gateway::new(Arc::new(OpenAiCompatible::new(cfg.clone())?)),
        };
        Ok(gateway.with_sampling(sampling).with_rates(role.rates))
    }

    pub fn search_backend(&self) -> Result<Box<dyn SearchBackend>> {
        Ok(match &self.search {
            SearchConfig::Fixture { dir } => Box::new(FixtureBackend::open(&self.resolve(dir)).map_err(as_input_error)?),
            SearchConfig::Http(cfg) => Box::new(HttpBackend::new(cfg.clone())?),
        })
    }
}

fn read_samples(path: &Path, fields: &FieldMap) -> Result<Vec<Sample>> {
    let samples = load_jsonl(path, fields).map_err(as_input_error)?;
    if samples.is_empty() {
        return Err(Error::EmptySource);
    }
    Ok(samples)
}

/// Unreadable inputs are usage errors, not storage failures.
pub fn as_input_error(e: Error) -> Error {
    match e {
        Error::Io { path, source } => Error::Config(format!("cannot read {}: {source}", path.display())),
        other => other,
    }
}
