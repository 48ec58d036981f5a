use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{aggregate, Agent, FeedbackSummary, FeedbackVector, InnerError, TaskBatch, TaskSpec};
use crate::eval::score_exact;
use crate::gateway::{CompletionUsage, Gateway};
use crate::genotype::{instantiate, MemoryGenotype};
use crate::memory::{
    ManageReport, MemoryItem, MemoryProvider, MemoryRequest, MemoryResponse, NullProvider, Stage, TrajectoryData,
    TrajectoryStep, DEFAULT_SUCCESS_THRESHOLD,
};

pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const GENOTYPE_FILE: &str = "genotype.json";

/// When memory is written: after every episode, or once up front from a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Online,
    Offline,
}

impl FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "online" => Ok(RunMode::Online),
            "offline" => Ok(RunMode::Offline),
            other => Err(format!("unknown mode {other:?} (expected online or offline)")),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Online => "online",
            RunMode::Offline => "offline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// Delay is the number of agent steps (deterministic).
    Steps,
    /// Delay is elapsed wall time in seconds.
    WallClock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOptions {
    /// Ingest the trajectory after the episode (online mode).
    pub ingest: bool,
    pub max_memory_items: i64,
    pub delay: DelayMode,
    pub success_threshold: f64,
}

impl Default for EpisodeOptions {
    fn default() -> Self {
        EpisodeOptions {
            ingest: true,
            max_memory_items: 8,
            delay: DelayMode::Steps,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
        }
    }
}

/// Everything recorded about one episode, one line of `trajectories.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: String,
    pub family_id: String,
    pub attempt: usize,
    pub gold_answer: String,
    pub feedback: FeedbackVector,
    /// Provider ingest counter when the episode started.
    pub ingest_counter: u64,
    /// Items as they were handed to the agent.
    pub provided: Vec<MemoryItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<(bool, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manage: Option<ManageReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trajectory: TrajectoryData,
}

impl EpisodeRecord {
    /// Key under which the episode appears in a summary's `per_task` map.
    pub fn summary_key(&self) -> String {
        if self.attempt <= 1 {
            self.task_id.clone()
        } else {
            format!("{}#{}", self.task_id, self.attempt)
        }
    }
}

/// Run one task to completion, then (online) ingest it and manage memory.
///
/// Cost is the gateway spend between the start of the episode and the end
/// of its ingestion, so summed episode costs reconcile with the ledger.
pub fn run_episode(
    agent: &dyn Agent,
    task: &TaskSpec,
    provider: &mut dyn MemoryProvider,
    gateway: &Gateway,
    options: &EpisodeOptions,
) -> EpisodeRecord {
    let spend_before = gateway.spend();
    let started = Instant::now();
    let ingest_counter = provider.ingest_counter();
    let mut error = None;

    let request = MemoryRequest::new(task.query.clone(), Stage::Planning, options.max_memory_items);
    let memory = provider.provide_memory(&request).unwrap_or_else(|e| {
        error = Some(format!("memory: {e}"));
        MemoryResponse::empty()
    });

    let mut steps: Vec<TrajectoryStep> = Vec::new();
    let mut answer = String::new();
    let budget = usize::try_from(task.max_steps).unwrap_or(0);
    while steps.len() < budget {
        match agent.step(task, &steps, &memory, gateway) {
            Ok(s) => {
                steps.push(TrajectoryStep {
                    index: steps.len(),
                    agent_id: agent.id().to_string(),
                    state_summary: s.state_summary,
                    action: s.action,
                    observation: s.observation,
                    tokens_in: s.tokens_in,
                    tokens_out: s.tokens_out,
                    memory_tokens: s.memory_tokens,
                });
                if let Some(a) = s.answer {
                    answer = a;
                    break;
                }
            }
            Err(e) => {
                error = Some(format!("agent: {e}"));
                break;
            }
        }
    }
    let reward = if error.is_none() && score_exact(&answer, &task.gold_answer) { 1.0 } else { 0.0 };
    let delay = match options.delay {
        DelayMode::Steps => steps.len() as f64,
        DelayMode::WallClock => started.elapsed().as_secs_f64(),
    };
    let provided_ids = memory.ids();
    let trajectory = TrajectoryData::new(
        &task.task_id,
        &task.family_id,
        &task.query,
        steps,
        reward,
        options.success_threshold,
        delay,
        provided_ids.clone(),
        answer,
    );
    provider.record_outcome(&provided_ids, trajectory.success);

    let mut ingest = None;
    let mut manage = None;
    if options.ingest {
        ingest = Some(provider.take_in_memory(&trajectory));
        if provider.manage_due() {
            manage = Some(provider.manage());
        }
    }
    let cost = gateway.spend() - spend_before;
    EpisodeRecord {
        task_id: task.task_id.clone(),
        family_id: task.family_id.clone(),
        attempt: 1,
        gold_answer: task.gold_answer.clone(),
        feedback: FeedbackVector::new(reward, cost, delay),
        ingest_counter,
        provided: memory.items,
        ingest,
        manage,
        error,
        trajectory,
    }
}

/// Run `tasks` in order against one provider, `attempts` times over.
/// Memory carries over between attempts.
pub fn run_tasks(
    agent: &dyn Agent,
    tasks: &[TaskSpec],
    provider: &mut dyn MemoryProvider,
    gateway: &Gateway,
    options: &EpisodeOptions,
    attempts: usize,
) -> Vec<EpisodeRecord> {
    let mut out = Vec::new();
    for attempt in 1..=attempts.max(1) {
        for task in tasks {
            let mut r = run_episode(agent, task, provider, gateway, options);
            r.attempt = attempt;
            out.push(r);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: RunMode,
    pub seed: u64,
    pub attempts: usize,
    pub options: EpisodeOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { mode: RunMode::Online, seed: 0, attempts: 1, options: EpisodeOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub summary: FeedbackSummary,
    pub records: Vec<EpisodeRecord>,
    /// Store contents after the last episode.
    pub snapshot: Vec<MemoryItem>,
    /// Per-tag usage of the evaluated episodes.
    pub ledger: BTreeMap<String, CompletionUsage>,
    /// Usage spent loading the offline corpus, not part of the summary.
    pub preload: Option<CompletionUsage>,
}

impl BatchResult {
    /// Ingest counter at the start of every episode, in run order.
    pub fn ingest_trace(&self) -> Vec<u64> {
        self.records.iter().map(|r| r.ingest_counter).collect()
    }
}

/// Trajectories of the batch's new tasks run without memory. This is the
/// corpus offline mode loads when none is supplied.
pub fn offline_corpus(
    agent: &dyn Agent,
    batch: &TaskBatch,
    gateway: &Gateway,
    options: &EpisodeOptions,
) -> Vec<TrajectoryData> {
    let scratch = gateway.scoped();
    let options = EpisodeOptions { ingest: false, ..*options };
    run_tasks(agent, &batch.new_tasks, &mut NullProvider::default(), &scratch, &options, 1)
        .into_iter()
        .map(|r| r.trajectory)
        .collect()
}

/// Evaluate one genotype on a batch with a fresh, empty provider.
///
/// The provider bills to a fresh ledger scope of `gateway`. With `out`,
/// the candidate directory is recreated and receives `genotype.json`,
/// `memory.jsonl`, `trajectories.jsonl` and `summary.json`.
pub fn run_batch(
    genotype: &MemoryGenotype,
    batch: &TaskBatch,
    agent: &dyn Agent,
    gateway: &Gateway,
    config: &RunConfig,
    corpus: Option<&[TrajectoryData]>,
    out: Option<&Path>,
) -> Result<BatchResult, InnerError> {
    let gateway = gateway.scoped();
    let mut provider = instantiate(genotype, gateway.clone(), config.seed)?;
    if let Some(dir) = out {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| InnerError::file(dir, e))?;
        }
        provider = provider.with_storage(dir);
    }
    provider.initialize()?;

    let mut preload = None;
    if config.mode == RunMode::Offline {
        let generated;
        let corpus = match corpus {
            Some(c) => c,
            None => {
                generated = offline_corpus(agent, batch, &gateway, &config.options);
                &generated
            }
        };
        for t in corpus {
            provider.take_in_memory(t);
            if provider.manage_due() {
                provider.manage();
            }
        }
        preload = Some(gateway.total());
        gateway.reset();
    }

    let options = EpisodeOptions { ingest: config.mode == RunMode::Online, ..config.options };
    let tasks: Vec<TaskSpec> = batch.tasks().cloned().collect();
    let records = run_tasks(agent, &tasks, &mut provider, &gateway, &options, config.attempts);
    let keyed: Vec<(String, FeedbackVector)> = records.iter().map(|r| (r.summary_key(), r.feedback)).collect();
    let summary = aggregate(keyed.iter().map(|(k, f)| (k.as_str(), *f)))?;

    if let Some(dir) = out {
        provider.persist()?;
        fs::write(dir.join(GENOTYPE_FILE), genotype.to_json())
            .map_err(|e| InnerError::file(dir.join(GENOTYPE_FILE), e))?;
        write_records(&dir.join(TRAJECTORIES_FILE), &records)?;
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        fs::write(dir.join(SUMMARY_FILE), text).map_err(|e| InnerError::file(dir.join(SUMMARY_FILE), e))?;
    }
    Ok(BatchResult { summary, records, snapshot: provider.snapshot(), ledger: gateway.usage_ledger(), preload })
}

pub fn write_records(path: &Path, records: &[EpisodeRecord]) -> Result<(), InnerError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| InnerError::file(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>, InnerError> {
    let text = fs::read_to_string(path).map_err(|e| InnerError::file(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| InnerError::file(path, format!("line {}: {e}", n + 1))))
        .collect()
}
