//! Reward-driven refinement: run the library over the validation samples,
//! score every step, refine the bottleneck node, repeat for K epochs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::canonical::{digest, read_json, write_json};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::llm::{ChatMessage, Gateway};
use crate::model::{validate_blueprint, validate_library, NodeBlueprint, NodeLibrary, NodeType};
use crate::parallel::parallel_map;
use crate::prompts::{PromptLibrary, NODE_OPTIMIZATION};
use crate::reward::{aggregate_epoch, compose, score_trajectory, BaselineCache, DeltaMode, Measured, RewardLedger, SampleScores};
use crate::runtime::{Runtime, Trajectory};
use crate::synthesis::normalize_template;

/// One refinement sample handed to the Designer.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub question: String,
    pub answer: String,
    /// Every node output on the sample, in pipeline order.
    pub excerpt: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    /// The new blueprint, or the old one when refinement failed.
    pub blueprint: NodeBlueprint,
    pub changed: bool,
    pub designer_analysis: Option<Value>,
    pub failure: Option<String>,
    pub attempts: u32,
}

const RETRY_NOTE: &str = "Your previous response was rejected";

fn list_of(v: &Value) -> Option<Vec<String>> {
    v.as_array().map(|items| items.iter().map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string())).collect())
}

fn nonempty_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    obj.get(key).and_then(Value::as_str).filter(|s| !s.trim().is_empty())
}

/// Rejects replies that restate the node's interface differently.
fn check_drift(old: &NodeBlueprint, reply: &Map<String, Value>) -> Result<()> {
    let scopes = [Some(reply), reply.get("optimized_implementation").and_then(Value::as_object)];
    for obj in scopes.into_iter().flatten() {
        let mut drift = Vec::new();
        if let Some(v) = obj.get("node_name") {
            if v.as_str().map(str::trim) != Some(old.node_name.as_str()) {
                drift.push(format!("node_name became {v}"));
            }
        }
        if let Some(v) = obj.get("node_type") {
            if v.as_str().and_then(|s| NodeType::parse(s.trim())) != Some(old.node_type) {
                drift.push(format!("node_type became {v}"));
            }
        }
        for (key, want) in [("dependencies", &old.dependencies), ("input", &old.input_keys), ("output", &old.output_keys)] {
            if let Some(v) = obj.get(key) {
                if list_of(v).as_ref() != Some(want) {
                    drift.push(format!("{key} became {v}"));
                }
            }
        }
        if !drift.is_empty() {
            return Err(Error::InterfaceDrift { node: old.node_name.clone(), detail: drift.join("; ") });
        }
    }
    Ok(())
}

/// Applies an optimization reply to `old`. Missing fields keep their old
/// value; a `tools_needed` string means "unchanged".
pub fn apply_optimization(old: &NodeBlueprint, reply: &Map<String, Value>) -> Result<NodeBlueprint> {
    check_drift(old, reply)?;
    let opt = reply
        .get("optimized_implementation")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::MalformedOutput("optimization reply lacks `optimized_implementation`".into()))?;
    let mut next = old.clone();
    if let Some(t) = nonempty_str(opt, "prompt_template") {
        next.implementation.prompt_template = normalize_template(t);
    }
    if let Some(l) = nonempty_str(opt, "logic_description") {
        next.implementation.logic_description = l.to_string();
    }
    if let Some(tools) = opt.get("tools_needed").and_then(list_of) {
        next.implementation.tools_needed = tools;
    }
    if let Some(code) = nonempty_str(reply, "optimized_all_code") {
        next.all_code = code.to_string();
    }
    next.version = old.version + 1;
    let report = validate_blueprint(&next);
    if !report.ok() {
        return Err(Error::Validation(vec![report]));
    }
    Ok(next)
}

fn numbered(items: &[String]) -> String {
    if items.len() == 1 {
        return items[0].clone();
    }
    items.iter().enumerate().map(|(i, s)| format!("[Sample {}] {s}", i + 1)).collect::<Vec<_>>().join("\n\n")
}

pub fn optimization_prompt(
    prompts: &PromptLibrary,
    blueprint: &NodeBlueprint,
    position: usize,
    node_reward: f64,
    evidence: &[Evidence],
) -> Result<String> {
    let asset = prompts.get(NODE_OPTIMIZATION);
    let questions: Vec<String> = evidence.iter().map(|e| e.question.clone()).collect();
    let answers: Vec<String> = evidence.iter().map(|e| e.answer.clone()).collect();
    let context = evidence
        .iter()
        .enumerate()
        .map(|(i, e)| format!("[Sample {}] (node reward: {:.6})\n{}", i + 1, e.reward, e.excerpt.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n");
    let implementation = serde_json::to_string_pretty(&blueprint.implementation).expect("implementation serializes");
    asset.render_user(&[
        ("question", &numbered(&questions)),
        ("answer", &numbered(&answers)),
        ("node_name", &blueprint.node_name),
        ("node_type", blueprint.node_type.as_str()),
        ("node_description", &blueprint.description),
        ("node_reward", &format!("{node_reward:.6}")),
        ("node_position", &position.to_string()),
        ("node_implementation", &implementation),
        ("node_all_code", &blueprint.all_code),
        ("intermediate_context", &context),
        ("optimization_focus", asset.focus(blueprint.node_type.as_str())?.trim()),
    ])
}

/// Asks the Designer to rewrite one node's internals. Drifted or invalid
/// replies get one re-prompt; a second failure keeps the old blueprint.
/// Provider errors propagate.
pub fn refine_node(
    designer: &Gateway,
    prompts: &PromptLibrary,
    blueprint: &NodeBlueprint,
    position: usize,
    node_reward: f64,
    evidence: &[Evidence],
) -> Result<RefineOutcome> {
    if evidence.is_empty() {
        return Err(Error::Precondition(format!("no refinement evidence for {}", blueprint.node_name)));
    }
    let asset = prompts.get(NODE_OPTIMIZATION);
    let mut messages = vec![
        ChatMessage::system(asset.system()),
        ChatMessage::user(optimization_prompt(prompts, blueprint, position, node_reward, evidence)?),
    ];
    let mut last_error = String::new();
    for attempt in 1..=2 {
        let reply = match designer.chat_json(&messages) {
            Ok(r) => r,
            Err(e @ Error::MalformedOutput(_)) => {
                last_error = e.to_string();
                messages.push(ChatMessage::user(format!("{RETRY_NOTE}: {e}. Respond with the JSON object only.")));
                continue;
            }
            Err(e) => return Err(e),
        };
        match apply_optimization(blueprint, &reply) {
            Ok(next) => {
                let designer_analysis = json!({
                    "analysis": reply.get("analysis").cloned().unwrap_or(Value::Null),
                    "optimization_explanation": reply.get("optimization_explanation").cloned().unwrap_or(Value::Null),
                });
                return Ok(RefineOutcome {
                    changed: next.implementation != blueprint.implementation || next.all_code != blueprint.all_code,
                    blueprint: next,
                    designer_analysis: Some(designer_analysis),
                    failure: None,
                    attempts: attempt,
                });
            }
            Err(e) => {
                log::warn!("refinement of {} rejected (attempt {attempt}): {e}", blueprint.node_name);
                last_error = e.to_string();
                messages.push(ChatMessage::assistant(Value::Object(reply).to_string()));
                messages.push(ChatMessage::user(format!(
                    "{RETRY_NOTE}: {e}. Re-emit the full JSON object. Keep node_name, node_type, dependencies, input and output unchanged."
                )));
            }
        }
    }
    Ok(RefineOutcome {
        blueprint: blueprint.clone(),
        changed: false,
        designer_analysis: None,
        failure: Some(last_error),
        attempts: 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// The library after the last epoch.
    #[default]
    LastEpoch,
    /// The scored library with the highest mean per-node reward.
    BestMeanReward,
}

impl SelectionPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionPolicy::LastEpoch => "last_epoch",
            SelectionPolicy::BestMeanReward => "best_mean_reward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSettings {
    pub alpha: f64,
    pub delta_mode: DeltaMode,
    pub n_refine: usize,
    pub jobs: usize,
    /// Memoize J_0 per sample across epochs.
    pub cache_baseline: bool,
    pub selection: SelectionPolicy,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            delta_mode: DeltaMode::Magnitude,
            n_refine: crate::reward::DEFAULT_N_REFINE,
            jobs: 1,
            cache_baseline: false,
            selection: SelectionPolicy::LastEpoch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<RewardLedger>,
    /// Always the ledger's bottleneck when a ledger exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined_node: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blueprint_before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blueprint_after: Option<String>,
    pub changed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designer_analysis: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement_failure: Option<String>,
    /// Set when the epoch could not run at all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDump {
    pub trajectory: Trajectory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<SampleScores>,
}

#[derive(Debug, Clone)]
pub struct EpochOutcome {
    pub library: NodeLibrary,
    pub report: EpochReport,
    pub dumps: Vec<TrajectoryDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub library: NodeLibrary,
    pub report: EpochReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRun {
    pub initial: NodeLibrary,
    pub epochs: Vec<EpochRecord>,
    pub final_library: NodeLibrary,
    pub selection_policy: SelectionPolicy,
    /// Index of the chosen snapshot; 0 is the initial library.
    pub selected_snapshot: u32,
}

pub struct Optimizer<'a> {
    pub runtime: Runtime<'a>,
    pub settings: OptimizeSettings,
    cache: Option<BaselineCache>,
}

impl<'a> Optimizer<'a> {
    pub fn new(runtime: Runtime<'a>, settings: OptimizeSettings) -> Self {
        let cache = settings.cache_baseline.then(BaselineCache::default);
        Self { runtime, settings, cache }
    }

    fn execute(&self, library: &NodeLibrary, samples: &[Sample]) -> Result<Vec<(Trajectory, SampleScores)>> {
        let s = &self.settings;
        parallel_map(samples, s.jobs, |sample| {
            let traj = self.runtime.run_pipeline(library, sample)?;
            let scores = score_trajectory(&traj, self.runtime.executor, s.alpha, s.delta_mode, self.cache.as_ref())?;
            Ok((traj, scores))
        })
        .into_iter()
        .collect()
    }

    pub fn run_epoch(&self, epoch: u32, library: &NodeLibrary, samples: &[Sample]) -> Result<EpochOutcome> {
        let report = validate_library(library);
        if !report.ok() {
            return Err(Error::Validation(vec![report]));
        }
        if samples.is_empty() {
            return Err(Error::Precondition("validation set is empty".into()));
        }
        let runs = self.execute(library, samples)?;
        let order: Vec<String> = runs[0].0.order().into_iter().map(str::to_string).collect();
        let scores: Vec<SampleScores> = runs.iter().map(|(_, s)| s.clone()).collect();
        let s = &self.settings;
        let ledger = aggregate_epoch(epoch, &order, &scores, s.alpha, s.delta_mode, s.n_refine)?;

        let target = library.node(&ledger.bottleneck).expect("bottleneck comes from the library").clone();
        let position = order.iter().position(|n| *n == target.node_name).expect("in order") + 1;
        let t = position - 1;
        let evidence: Vec<Evidence> = ledger
            .refinement_sample_ids
            .iter()
            .filter_map(|id| runs.iter().find(|(traj, _)| &traj.sample_id == id))
            .map(|(traj, sc)| Evidence {
                question: traj.question.clone(),
                answer: traj.ground_truth.clone(),
                excerpt: traj.accumulated.last().cloned().unwrap_or_default(),
                reward: sc.steps[t].reward,
            })
            .collect();

        let before = digest(&target)?;
        let mut next = library.clone();
        let mut report = EpochReport {
            epoch,
            refined_node: Some(target.node_name.clone()),
            blueprint_before: Some(before.clone()),
            blueprint_after: Some(before),
            changed: false,
            designer_analysis: None,
            refinement_failure: None,
            error: None,
            ledger: None,
        };
        let mean = ledger.mean(&target.node_name).unwrap_or_default();
        let outcome = if evidence.is_empty() {
            Err(Error::Precondition(format!("no sample has {} as its strict minimum", target.node_name)))
        } else {
            refine_node(self.runtime.designer, self.runtime.prompts, &target, position, mean, &evidence)
        };
        match outcome {
            Ok(o) => {
                report.designer_analysis = o.designer_analysis;
                report.refinement_failure = o.failure;
                let candidate = next.with_replaced(o.blueprint.clone()).expect("same node name");
                let check = validate_library(&candidate);
                if !check.ok() {
                    report.refinement_failure = Some(format!("refined library failed validation: {check}"));
                } else if report.refinement_failure.is_none() {
                    report.blueprint_after = Some(digest(&o.blueprint)?);
                    report.changed = o.changed;
                    next = candidate;
                }
            }
            Err(e) => {
                log::warn!("epoch {epoch}: refinement of {} failed: {e}", target.node_name);
                report.refinement_failure = Some(e.to_string());
            }
        }
        next.epoch = epoch;
        report.ledger = Some(ledger);
        let dumps = runs.into_iter().map(|(trajectory, scores)| TrajectoryDump { trajectory, scores: Some(scores) }).collect();
        Ok(EpochOutcome { library: next, report, dumps })
    }

    /// Runs `epochs` epochs. Epoch failures are recorded and leave the library
    /// unchanged; only storage failures abort.
    pub fn optimize(
        &self,
        library: &NodeLibrary,
        samples: &[Sample],
        epochs: u32,
        store: Option<&RunStore>,
    ) -> Result<OptimizationRun> {
        if epochs == 0 {
            return Err(Error::Precondition("epoch count must be at least 1".into()));
        }
        if let Some(st) = store {
            st.write_library(0, library)?;
        }
        let mut current = library.clone();
        let mut records = Vec::new();
        for k in 1..=epochs {
            log::info!("epoch {k}/{epochs}");
            let record = match self.run_epoch(k, &current, samples) {
                Ok(out) => {
                    if let Some(st) = store {
                        for d in &out.dumps {
                            st.write_trajectory(k, d)?;
                        }
                    }
                    EpochRecord { library: out.library, report: out.report }
                }
                Err(e @ Error::Io { .. }) => return Err(e),
                Err(e) => {
                    log::error!("epoch {k} failed: {e}");
                    let mut lib = current.clone();
                    lib.epoch = k;
                    let report = EpochReport {
                        epoch: k,
                        ledger: None,
                        refined_node: None,
                        blueprint_before: None,
                        blueprint_after: None,
                        changed: false,
                        designer_analysis: None,
                        refinement_failure: None,
                        error: Some(e.to_string()),
                    };
                    EpochRecord { library: lib, report }
                }
            };
            if let Some(st) = store {
                st.write_report(&record.report)?;
                st.write_library(k, &record.library)?;
            }
            current = record.library.clone();
            records.push(record);
        }
        let selected = select(self.settings.selection, &records);
        let final_library = if selected == 0 { library.clone() } else { records[selected as usize - 1].library.clone() };
        if let Some(st) = store {
            st.write_final(&final_library, self.settings.selection, selected)?;
        }
        Ok(OptimizationRun {
            initial: library.clone(),
            epochs: records,
            final_library,
            selection_policy: self.settings.selection,
            selected_snapshot: selected,
        })
    }
}

/// Snapshot index to keep. Epoch k's ledger scores snapshot k-1, so best-mean
/// picks the input of the best-scoring epoch; ties go to the earliest.
pub fn select(policy: SelectionPolicy, records: &[EpochRecord]) -> u32 {
    match policy {
        SelectionPolicy::LastEpoch => records.len() as u32,
        SelectionPolicy::BestMeanReward => {
            let mut best: Option<(f64, u32)> = None;
            for r in records {
                if let Some(l) = &r.report.ledger {
                    let m = l.overall_mean();
                    if best.map_or(true, |(b, _)| m > b) {
                        best = Some((m, r.report.epoch - 1));
                    }
                }
            }
            best.map_or(records.len() as u32, |(_, i)| i)
        }
    }
}

/// Rebuilds an epoch ledger from dumped J values, without any model calls.
pub fn recompute_ledger(
    epoch: u32,
    dumps: &[TrajectoryDump],
    alpha: f64,
    mode: DeltaMode,
    n_refine: usize,
) -> Result<RewardLedger> {
    let first = dumps.first().ok_or_else(|| Error::Precondition("no trajectory dumps".into()))?;
    let order: Vec<String> = first.trajectory.order().into_iter().map(str::to_string).collect();
    let mut scores = Vec::with_capacity(dumps.len());
    for d in dumps {
        let stored = d
            .scores
            .as_ref()
            .ok_or_else(|| Error::Precondition(format!("dump {} carries no scores", d.trajectory.sample_id)))?;
        scores.push(rescore(stored, alpha, mode)?);
    }
    aggregate_epoch(epoch, &order, &scores, alpha, mode, n_refine)
}

/// Recomposes step scores from stored objectives.
pub fn rescore(stored: &SampleScores, alpha: f64, mode: DeltaMode) -> Result<SampleScores> {
    let baseline = Measured { j: stored.baseline_j, token_count: 0, note: stored.baseline_note.clone() };
    let measured: Vec<Measured> =
        stored.steps.iter().map(|s| Measured { j: s.j, token_count: s.token_count, note: s.note.clone() }).collect();
    let names: Vec<String> = stored.steps.iter().map(|s| s.node_name.clone()).collect();
    compose(&stored.sample_id, &names, &baseline, &measured, alpha, mode)
}

/// Run directory:
/// `config.json`, `libraries/epoch_NNN.json`, `reports/epoch_NNN.json`,
/// `trajectories/epoch_NNN/<sample>.json`, `final_library.json`, `final.json`.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMarker {
    pub selection_policy: SelectionPolicy,
    pub selected_snapshot: u32,
    pub library: String,
}

impl RunStore {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        if !root.is_dir() {
            return Err(Error::io(&root, std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found")));
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn library_path(&self, epoch: u32) -> PathBuf {
        self.root.join("libraries").join(format!("epoch_{epoch:03}.json"))
    }

    pub fn report_path(&self, epoch: u32) -> PathBuf {
        self.root.join("reports").join(format!("epoch_{epoch:03}.json"))
    }

    pub fn trajectory_dir(&self, epoch: u32) -> PathBuf {
        self.root.join("trajectories").join(format!("epoch_{epoch:03}"))
    }

    pub fn final_library_path(&self) -> PathBuf {
        self.root.join("final_library.json")
    }

    pub fn write_config<T: Serialize>(&self, config: &T) -> Result<()> {
        write_json(&self.root.join("config.json"), config)
    }

    pub fn write_library(&self, epoch: u32, library: &NodeLibrary) -> Result<()> {
        crate::model::write_library(&self.library_path(epoch), library)
    }

    pub fn write_report(&self, report: &EpochReport) -> Result<()> {
        write_json(&self.report_path(report.epoch), report)
    }

    pub fn write_trajectory(&self, epoch: u32, dump: &TrajectoryDump) -> Result<()> {
        let name = sanitize(&dump.trajectory.sample_id);
        write_json(&self.trajectory_dir(epoch).join(format!("{name}.json")), dump)
    }

    pub fn write_final(&self, library: &NodeLibrary, policy: SelectionPolicy, selected: u32) -> Result<()> {
        crate::model::write_library(&self.final_library_path(), library)?;
        let marker = FinalMarker {
            selection_policy: policy,
            selected_snapshot: selected,
            library: format!("libraries/epoch_{selected:03}.json"),
        };
        write_json(&self.root.join("final.json"), &marker)
    }

    pub fn read_final(&self) -> Result<FinalMarker> {
        read_json(&self.root.join("final.json"))
    }

    /// Reports in epoch order.
    pub fn reports(&self) -> Result<Vec<EpochReport>> {
        let mut out = Vec::new();
        let mut k = 1;
        while self.report_path(k).exists() {
            out.push(read_json(&self.report_path(k))?);
            k += 1;
        }
        Ok(out)
    }

    /// Trajectory dumps of one epoch, sorted by file name.
    pub fn dumps(&self, epoch: u32) -> Result<Vec<TrajectoryDump>> {
        read_dump_dir(&self.trajectory_dir(epoch))
    }
}

pub fn read_dump_dir(dir: &Path) -> Result<Vec<TrajectoryDump>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
