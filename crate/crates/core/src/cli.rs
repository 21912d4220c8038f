//! Command-line surface. Each command is a thin wrapper over the library.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::canonical::{to_canonical_json, write_json};
use crate::config::{as_input_error, RunConfig};
use crate::dataset::{load_jsonl, Sample};
use crate::error::{Error, Result};
use crate::harvest::harvest;
use crate::model::{load_library, write_library, NodeLibrary, Provenance};
use crate::optimizer::{read_dump_dir, rescore, Optimizer, RunStore, SelectionPolicy, TrajectoryDump};
use crate::parallel::parallel_map;
use crate::prompts::PromptLibrary;
use crate::reward::{aggregate_epoch, score_trajectory, DeltaMode};
use crate::runtime::Runtime;
use crate::synthesis::{SynthesisOptions, Synthesizer};

#[derive(Debug, Parser)]
#[command(name = "nodesmith", version, about = "Generate and refine domain-specific agent nodes")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Harvest knowledge and synthesize the epoch-0 node library.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output directory for library.json and harvest.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a library for K epochs and write a run directory.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        library: PathBuf,
        #[arg(long, value_enum)]
        selection: Option<SelectionPolicy>,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute a library on samples and dump the trajectories.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        library: PathBuf,
        /// JSONL samples; the configured dataset when omitted.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score trajectory dumps and print the reward ledger.
    Score {
        #[command(flatten)]
        common: Common,
        /// A dump file or a directory of dumps.
        #[arg(long)]
        trajectories: PathBuf,
        /// Epoch number recorded in the ledger.
        #[arg(long, default_value_t = 0)]
        epoch: u32,
        /// Write the ledger here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a run directory, one line per epoch.
    Inspect { run_dir: PathBuf },
}

/// Flags that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Context-buffer size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Search rounds per session.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long, value_enum)]
    pub delta_mode: Option<DeltaMode>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Common {
    pub fn load_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.alpha {
            c.reward.alpha = v;
        }
        if let Some(v) = self.epochs {
            c.optimize.epochs = v;
        }
        if let Some(v) = self.n {
            c.harvest.n = v;
        }
        if let Some(v) = self.rounds {
            c.harvest.max_search_rounds = v;
        }
        if let Some(v) = self.delta_mode {
            c.reward.delta_mode = v;
        }
        if let Some(v) = self.jobs {
            c.jobs = v;
        }
        c.validate()?;
        Ok(c)
    }
}

/// Runs one command and returns what it prints on stdout.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Generate { common, out } => generate(&common.load_config()?, &out),
        Command::Optimize { common, library, selection, out } => {
            let mut c = common.load_config()?;
            if let Some(s) = selection {
                c.optimize.selection = s;
            }
            optimize(&c, &library, &out)
        }
        Command::Run { common, library, samples, out } => run(&common.load_config()?, &library, samples.as_deref(), &out),
        Command::Score { common, trajectories, epoch, out } => {
            let text = score(&common.load_config()?, &trajectories, epoch)?;
            match out {
                Some(p) => {
                    std::fs::write(&p, &text).map_err(|e| Error::io(&p, e))?;
                    Ok(format!("{}\n", p.display()))
                }
                None => Ok(text),
            }
        }
        Command::Inspect { run_dir } => inspect(&run_dir),
    }
}

fn read_library(path: &Path) -> Result<NodeLibrary> {
    load_library(path).map_err(as_input_error)
}

pub fn generate(config: &RunConfig, out: &Path) -> Result<String> {
    let source = config.load_dataset()?;
    let prompts = PromptLibrary::load_default()?;
    let designer = config.gateway(&config.designer)?;
    let backend = config.search_backend()?;
    let dataset = config.dataset_name();
    let harvested = harvest(&designer, &prompts, backend.as_ref(), &source, &dataset, &config.harvest_options())?;
    if !harvested.failed_sessions.is_empty() {
        log::warn!("{} search sessions failed", harvested.failed_sessions.len());
    }
    write_json(&out.join("harvest.json"), &harvested)?;
    let synth = Synthesizer { designer: &designer, prompts: &prompts, options: SynthesisOptions::default() };
    let provenance = Provenance { seed: config.seed, designer: designer.provider_name().to_string(), dataset };
    let library =
        synth.generate_initial_nodes(&harvested.profile.thinking, &harvested.buffer.samples, &harvested.analyses, provenance)?;
    let path = out.join("library.json");
    write_library(&path, &library)?;
    log::info!("designer usage: {:?}", designer.usage_summary());
    Ok(format!("{}\n", path.display()))
}

pub fn optimize(config: &RunConfig, library: &Path, out: &Path) -> Result<String> {
    let initial = read_library(library)?;
    let samples = config.load_validation()?;
    let prompts = PromptLibrary::load_default()?;
    let designer = config.gateway(&config.designer)?;
    let executor = config.gateway(&config.executor)?;
    let backend = config.search_backend()?;
    let runtime = Runtime {
        executor: &executor,
        designer: &designer,
        prompts: &prompts,
        backend: backend.as_ref(),
        max_rounds: config.harvest.max_search_rounds,
        rag_engine: config.runtime.rag_engine,
    };
    let store = RunStore::create(out)?;
    store.write_config(config)?;
    let optimizer = Optimizer::new(runtime, config.optimize_settings());
    optimizer.optimize(&initial, &samples, config.optimize.epochs, Some(&store))?;
    Ok(format!("{}\n", store.final_library_path().display()))
}

pub fn run(config: &RunConfig, library: &Path, samples: Option<&Path>, out: &Path) -> Result<String> {
    let library = read_library(library)?;
    let samples: Vec<Sample> = match samples {
        Some(p) => load_jsonl(p, &config.dataset.fields).map_err(as_input_error)?,
        None => config.load_dataset()?,
    };
    let prompts = PromptLibrary::load_default()?;
    let designer = config.gateway(&config.designer)?;
    let executor = config.gateway(&config.executor)?;
    let backend = config.search_backend()?;
    let runtime = Runtime {
        executor: &executor,
        designer: &designer,
        prompts: &prompts,
        backend: backend.as_ref(),
        max_rounds: config.harvest.max_search_rounds,
        rag_engine: config.runtime.rag_engine,
    };
    let trajectories: Vec<_> = parallel_map(&samples, config.jobs, |s| runtime.run_pipeline(&library, s))
        .into_iter()
        .collect::<Result<_>>()?;
    for t in trajectories {
        let name = format!("{}.json", t.sample_id);
        write_json(&out.join(name), &TrajectoryDump { trajectory: t, scores: None })?;
    }
    Ok(format!("{}\n", out.display()))
}

fn read_dumps(path: &Path) -> Result<Vec<TrajectoryDump>> {
    if path.is_dir() {
        read_dump_dir(path).map_err(as_input_error)
    } else {
        Ok(vec![crate::canonical::read_json(path).map_err(as_input_error)?])
    }
}

/// Ledger over dumped trajectories. Dumps that already carry J values are
/// recomposed without model calls; the rest are scored by the Executor.
pub fn score(config: &RunConfig, path: &Path, epoch: u32) -> Result<String> {
    let dumps = read_dumps(path)?;
    let first = dumps.first().ok_or_else(|| Error::Precondition(format!("no trajectory dumps in {}", path.display())))?;
    let order: Vec<String> = first.trajectory.order().into_iter().map(str::to_string).collect();
    let (alpha, mode) = (config.reward.alpha, config.reward.delta_mode);
    let executor = if dumps.iter().any(|d| d.scores.is_none()) { Some(config.gateway(&config.executor)?) } else { None };
    let mut scores = Vec::with_capacity(dumps.len());
    for d in &dumps {
        scores.push(match (&d.scores, &executor) {
            (Some(s), _) => rescore(s, alpha, mode)?,
            (None, Some(gw)) => score_trajectory(&d.trajectory, gw, alpha, mode, None)?,
            (None, None) => unreachable!("executor exists when a dump lacks scores"),
        });
    }
    let ledger = aggregate_epoch(epoch, &order, &scores, alpha, mode, config.reward.n_refine)?;
    to_canonical_json(&ledger)
}

pub fn inspect(run_dir: &Path) -> Result<String> {
    let store = RunStore::open(run_dir)?;
    let mut out = String::new();
    for r in store.reports()? {
        match (&r.ledger, &r.error) {
            (Some(l), _) => {
                let refined = match (&r.refinement_failure, r.changed) {
                    (Some(f), _) => format!("refinement failed: {f}"),
                    (None, true) => "refined".to_string(),
                    (None, false) => "unchanged".to_string(),
                };
                out.push_str(&format!(
                    "epoch {}: bottleneck {} (mean reward {:.6}), overall mean {:.6}, {} evidence samples, {refined}\n",
                    r.epoch,
                    l.bottleneck,
                    l.mean(&l.bottleneck).unwrap_or_default(),
                    l.overall_mean(),
                    l.refinement_sample_ids.len(),
                ));
            }
            (None, e) => out.push_str(&format!("epoch {}: failed: {}\n", r.epoch, e.as_deref().unwrap_or("unknown"))),
        }
    }
    if let Ok(m) = store.read_final() {
        out.push_str(&format!("final: {} ({})\n", m.library, m.selection_policy.as_str()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn overrides_apply_and_validate() {
        let cli = Cli::try_parse_from(["nodesmith", "generate", "--n", "4", "--rounds", "2", "--out", "x"]).unwrap();
        let Command::Generate { common, .. } = cli.command else { panic!() };
        let c = common.load_config().unwrap();
        assert_eq!((c.harvest.n, c.harvest.max_search_rounds), (4, 2));

        let cli = Cli::try_parse_from(["nodesmith", "generate", "--out", "x"]).unwrap();
        let Command::Generate { common, .. } = cli.command else { panic!() };
        let c = common.load_config().unwrap();
        assert_eq!((c.harvest.n, c.harvest.max_search_rounds), (10, 10));

        let cli = Cli::try_parse_from(["nodesmith", "score", "--alpha", "1.5", "--trajectories", "t"]).unwrap();
        let Command::Score { common, .. } = cli.command else { panic!() };
        assert_eq!(common.load_config().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn delta_mode_flag_parses() {
        let cli = Cli::try_parse_from(["nodesmith", "score", "--delta-mode", "literal", "--trajectories", "t"]).unwrap();
        let Command::Score { common, .. } = cli.command else { panic!() };
        assert_eq!(common.delta_mode, Some(DeltaMode::Literal));
    }
}
