use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{assign_ranks, design, diagnose, select_parents, CandidateRecord, DefectProfile, EvolveError, Proposer};
use crate::gateway::Gateway;
use crate::genotype::{preset, validate, MemoryGenotype};
use crate::hash::mix_seed;
use crate::inner::{
    compose_batch, offline_corpus, run_batch, Agent, EpisodeOptions, RunConfig, RunMode, TaskBatch, TaskSpec,
};

pub const STATE_FILE: &str = "state.json";
pub const EVOLUTION_LOG: &str = "evolution.jsonl";

/// Contents of `evolve.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    #[serde(rename = "K_max")]
    pub k_max: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub n_new: usize,
    pub n_reused: usize,
    pub seed: u64,
    pub proposer: Proposer,
    pub elitism: bool,
    /// Preset name or path to a genotype file.
    pub initial: String,
    pub mode: RunMode,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            k_max: 3,
            k: 1,
            s: 3,
            n_new: 40,
            n_reused: 20,
            seed: 0,
            proposer: Proposer::Deterministic,
            elitism: false,
            initial: "dilu".into(),
            mode: RunMode::Online,
        }
    }
}

impl EvolutionConfig {
    pub fn load(path: &Path) -> Result<Self, EvolveError> {
        let text = fs::read_to_string(path).map_err(|e| EvolveError::Config(format!("{}: {e}", path.display())))?;
        let c: EvolutionConfig =
            serde_json::from_str(&text).map_err(|e| EvolveError::Config(format!("{}: {e}", path.display())))?;
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<(), EvolveError> {
        if self.k_max == 0 || self.k == 0 || self.s == 0 {
            return Err(EvolveError::Config("K_max, K and S must be at least 1".into()));
        }
        if self.n_new + self.n_reused == 0 {
            return Err(EvolveError::Config("batches must hold at least one task".into()));
        }
        Ok(())
    }

    /// Resolve `initial` relative to `base` when it is not a preset name.
    pub fn initial_genotype(&self, base: Option<&Path>) -> Result<MemoryGenotype, EvolveError> {
        let g = match preset(&self.initial) {
            Ok(g) => g,
            Err(preset_err) => {
                let path = match base {
                    Some(b) if Path::new(&self.initial).is_relative() => b.join(&self.initial),
                    _ => PathBuf::from(&self.initial),
                };
                if !path.exists() {
                    return Err(EvolveError::Config(preset_err.to_string()));
                }
                MemoryGenotype::load(&path)?
            }
        };
        let violations = validate(&g);
        if !violations.is_empty() {
            return Err(crate::genotype::GenotypeError::Invalid { name: g.name, violations }.into());
        }
        Ok(g)
    }
}

/// A genotype waiting to be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub genotype: MemoryGenotype,
    pub parent_hash: Option<String>,
    pub origin: String,
}

/// Audit record of one completed iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub new_tasks: Vec<String>,
    pub reused_tasks: Vec<String>,
    pub candidates: Vec<CandidateRecord>,
    /// Indices into `candidates`, in selection order.
    pub parents: Vec<usize>,
    /// Defect profile per parent, empty in the final iteration.
    pub profiles: Vec<DefectProfile>,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionState {
    pub config: EvolutionConfig,
    /// Index of the next iteration to run.
    pub k: usize,
    pub pending: Vec<Pending>,
    pub iterations: Vec<IterationRecord>,
    pub previous_batch: Option<TaskBatch>,
    pub used_tasks: BTreeSet<String>,
}

impl EvolutionState {
    pub fn new(config: EvolutionConfig, initial: MemoryGenotype) -> Self {
        EvolutionState {
            config,
            k: 0,
            pending: vec![Pending { genotype: initial, parent_hash: None, origin: "initial".into() }],
            iterations: Vec::new(),
            previous_batch: None,
            used_tasks: BTreeSet::new(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.k >= self.config.k_max || self.pending.is_empty()
    }

    pub fn candidates_evaluated(&self) -> usize {
        self.iterations.iter().map(|i| i.candidates.len()).sum()
    }

    pub fn episodes_run(&self) -> usize {
        self.iterations.iter().flat_map(|i| &i.candidates).map(|c| c.summary.n).sum()
    }

    /// Best candidate of the last completed iteration.
    pub fn champion(&self) -> Option<&CandidateRecord> {
        let last = self.iterations.last()?;
        last.parents.first().map(|&i| &last.candidates[i])
    }

    /// One log line per (iteration, candidate).
    pub fn lineage_log(&self) -> String {
        let mut out = String::new();
        for it in &self.iterations {
            for (j, c) in it.candidates.iter().enumerate() {
                let line = LineageLine {
                    iteration: it.iteration,
                    candidate: j,
                    name: &c.genotype.name,
                    genotype_hash: c.genotype.hash(),
                    parent_hash: c.parent_hash.as_deref(),
                    origin: &c.origin,
                    perf_mean: c.summary.perf_mean,
                    cost_mean: c.summary.cost_mean,
                    delay_mean: c.summary.delay_mean,
                    n: c.summary.n,
                    summary_vector: c.summary_vector,
                    pareto_rank: c.pareto_rank,
                    selected: it.parents.contains(&j),
                };
                out.push_str(&serde_json::to_string(&line).expect("log line serializes"));
                out.push('\n');
            }
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), EvolveError> {
        let io = |p: PathBuf| move |e: std::io::Error| EvolveError::Io { path: p, source: e };
        let state = serde_json::to_string_pretty(self).expect("state serializes") + "\n";
        fs::write(dir.join(STATE_FILE), state).map_err(io(dir.join(STATE_FILE)))?;
        fs::write(dir.join(EVOLUTION_LOG), self.lineage_log()).map_err(io(dir.join(EVOLUTION_LOG)))
    }

    pub fn load(dir: &Path) -> Result<Option<Self>, EvolveError> {
        let path = dir.join(STATE_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| EvolveError::State(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(EvolveError::Io { path, source: e }),
        }
    }
}

#[derive(Serialize)]
struct LineageLine<'a> {
    iteration: usize,
    candidate: usize,
    name: &'a str,
    genotype_hash: String,
    parent_hash: Option<&'a str>,
    origin: &'a str,
    perf_mean: f64,
    cost_mean: f64,
    delay_mean: f64,
    n: usize,
    summary_vector: [f64; 3],
    pareto_rank: usize,
    selected: bool,
}

pub fn iteration_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("iter-{k}"))
}

pub fn candidate_dir(out: &Path, k: usize, j: usize) -> PathBuf {
    iteration_dir(out, k).join(format!("cand-{j}"))
}

/// Run one iteration: evaluate the pending candidates on a fresh batch, rank
/// them, select parents, and (unless this is the last iteration) design the
/// next candidate set.
pub fn evolve_iteration(
    mut state: EvolutionState,
    pool: &[TaskSpec],
    agent: &dyn Agent,
    gateway: &Gateway,
    out: &Path,
) -> Result<EvolutionState, EvolveError> {
    let k = state.k;
    if state.is_done() {
        return Err(EvolveError::Config(format!("iteration {k} requested but the run is complete")));
    }
    let cfg = state.config.clone();
    let fail = |source| EvolveError::Iteration { iteration: k, source };

    let available: Vec<TaskSpec> = pool.iter().filter(|t| !state.used_tasks.contains(&t.task_id)).cloned().collect();
    let batch =
        compose_batch(&available, state.previous_batch.as_ref(), cfg.n_new, cfg.n_reused, cfg.seed).map_err(fail)?;
    let options = EpisodeOptions::default();
    let corpus = (cfg.mode == RunMode::Offline).then(|| offline_corpus(agent, &batch, gateway, &options));

    let results: Vec<_> = state
        .pending
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let run =
                RunConfig { mode: cfg.mode, seed: mix_seed(&[cfg.seed, k as u64, j as u64]), attempts: 1, options };
            let dir = candidate_dir(out, k, j);
            run_batch(&p.genotype, &batch, agent, gateway, &run, corpus.as_deref(), Some(&dir))
        })
        .collect();

    let mut candidates = Vec::with_capacity(results.len());
    let mut batches = Vec::with_capacity(results.len());
    for (p, r) in state.pending.iter().zip(results) {
        let r = r.map_err(fail)?;
        let mut c = CandidateRecord::new(p.genotype.clone(), r.summary.clone(), k);
        c.parent_hash = p.parent_hash.clone();
        c.origin = p.origin.clone();
        candidates.push(c);
        batches.push(r);
    }
    assign_ranks(&mut candidates)?;
    let selected = select_parents(&candidates, cfg.k);
    let parents: Vec<usize> =
        selected.iter().map(|s| candidates.iter().position(|c| c == s).expect("selected from candidates")).collect();

    let mut profiles = Vec::new();
    let mut next = Vec::new();
    if k + 1 < cfg.k_max {
        for (pi, &i) in parents.iter().enumerate() {
            let parent = &candidates[i];
            let profile = diagnose(parent, &batches[i].records, &batches[i].snapshot, gateway);
            let seed = mix_seed(&[cfg.seed, k as u64, pi as u64]);
            if cfg.elitism {
                next.push(Pending {
                    genotype: parent.genotype.clone(),
                    parent_hash: parent.parent_hash.clone(),
                    origin: "elite".into(),
                });
            }
            for d in design(parent, &profile, cfg.s, cfg.proposer, seed, gateway) {
                next.push(Pending {
                    genotype: d.genotype,
                    parent_hash: Some(parent.genotype.hash()),
                    origin: d.origin,
                });
            }
            profiles.push(profile);
        }
    }

    state.used_tasks.extend(batch.ids());
    state.iterations.push(IterationRecord {
        iteration: k,
        new_tasks: batch.new_tasks.iter().map(|t| t.task_id.clone()).collect(),
        reused_tasks: batch.reused_tasks.iter().map(|t| t.task_id.clone()).collect(),
        candidates,
        parents,
        profiles,
    });
    state.previous_batch = Some(batch);
    state.pending = next;
    state.k = k + 1;
    Ok(state)
}

/// Run (or resume) a full evolution in `out`, saving state after every
/// completed iteration.
pub fn run_evolution(
    config: EvolutionConfig,
    initial: MemoryGenotype,
    pool: &[TaskSpec],
    agent: &dyn Agent,
    gateway: &Gateway,
    out: &Path,
) -> Result<EvolutionState, EvolveError> {
    config.check()?;
    fs::create_dir_all(out).map_err(|e| EvolveError::Io { path: out.to_path_buf(), source: e })?;
    let mut state = match EvolutionState::load(out)? {
        Some(s) if s.config == config => s,
        Some(_) => {
            return Err(EvolveError::Config(format!(
                "{} holds a run with a different configuration",
                out.join(STATE_FILE).display()
            )))
        }
        None => EvolutionState::new(config, initial),
    };
    while !state.is_done() {
        state = evolve_iteration(state, pool, agent, gateway, out)?;
        state.save(out)?;
    }
    state.save(out)?;
    Ok(state)
}
