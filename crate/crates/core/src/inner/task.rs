use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InnerError;
use crate::eval::normalize_answer;
use crate::hash::{fnv1a64, mix_seed, stable_hex};

/// A lookup task. The tool table is the simulated environment: exactly the
/// keys the agent may query, with the gold answer stored under one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub family_id: String,
    pub query: String,
    pub gold_answer: String,
    pub tool_table: BTreeMap<String, String>,
    pub max_steps: i64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), InnerError> {
        let bad = |reason: &str| InnerError::InvalidTask { task_id: self.task_id.clone(), reason: reason.into() };
        if self.max_steps < 1 {
            return Err(bad("max_steps must be at least 1"));
        }
        let gold = normalize_answer(&self.gold_answer);
        if !self.tool_table.values().any(|v| normalize_answer(v) == gold) {
            return Err(bad("gold answer is not stored in the tool table"));
        }
        Ok(())
    }

    /// The key holding the gold answer.
    pub fn gold_key(&self) -> Option<&str> {
        let gold = normalize_answer(&self.gold_answer);
        self.tool_table.iter().find(|(_, v)| normalize_answer(v) == gold).map(|(k, _)| k.as_str())
    }
}

/// Tasks for one iteration. New tasks run first, reused tasks last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBatch {
    pub iteration: usize,
    pub new_tasks: Vec<TaskSpec>,
    pub reused_tasks: Vec<TaskSpec>,
}

impl TaskBatch {
    pub fn tasks(&self) -> impl Iterator<Item = &TaskSpec> {
        self.new_tasks.iter().chain(&self.reused_tasks)
    }

    pub fn len(&self) -> usize {
        self.new_tasks.len() + self.reused_tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.tasks().map(|t| t.task_id.clone()).collect()
    }
}

/// Sample a batch without replacement.
///
/// With no previous batch all `n_new + n_reused` tasks are fresh. Otherwise
/// `n_new` tasks come from the pool minus the previous batch and `n_reused`
/// are drawn uniformly from the previous batch.
pub fn compose_batch(
    pool: &[TaskSpec],
    previous: Option<&TaskBatch>,
    n_new: usize,
    n_reused: usize,
    seed: u64,
) -> Result<TaskBatch, InnerError> {
    let iteration = previous.map_or(0, |p| p.iteration + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, iteration as u64, fnv1a64(b"batch")]));
    let Some(prev) = previous else {
        let need = n_new + n_reused;
        if pool.len() < need {
            return Err(InnerError::InsufficientPool { required: need, available: pool.len() });
        }
        let new_tasks = sample(&mut rng, pool.len(), need).into_iter().map(|i| pool[i].clone()).collect();
        return Ok(TaskBatch { iteration, new_tasks, reused_tasks: vec![] });
    };
    let seen = prev.ids();
    let fresh: Vec<&TaskSpec> = pool.iter().filter(|t| !seen.contains(&t.task_id)).collect();
    if fresh.len() < n_new {
        return Err(InnerError::InsufficientPool { required: n_new + seen.len(), available: pool.len() });
    }
    let prev_tasks: Vec<&TaskSpec> = prev.tasks().collect();
    if n_reused > 0 && prev_tasks.is_empty() {
        return Err(InnerError::NoPreviousBatch);
    }
    if prev_tasks.len() < n_reused {
        return Err(InnerError::InsufficientPool { required: n_reused, available: prev_tasks.len() });
    }
    let new_tasks = sample(&mut rng, fresh.len(), n_new).into_iter().map(|i| fresh[i].clone()).collect();
    let reused_tasks =
        sample(&mut rng, prev_tasks.len(), n_reused).into_iter().map(|i| prev_tasks[i].clone()).collect();
    Ok(TaskBatch { iteration, new_tasks, reused_tasks })
}

pub fn read_tasks(path: &Path) -> Result<Vec<TaskSpec>, InnerError> {
    let text = fs::read_to_string(path).map_err(|e| InnerError::file(path, e))?;
    let mut tasks = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let t: TaskSpec =
            serde_json::from_str(line).map_err(|e| InnerError::file(path, format!("line {}: {e}", n + 1)))?;
        t.validate()?;
        if !ids.insert(t.task_id.clone()) {
            return Err(InnerError::file(path, format!("line {}: duplicate task id {}", n + 1, t.task_id)));
        }
        tasks.push(t);
    }
    Ok(tasks)
}

pub fn write_tasks(path: &Path, tasks: &[TaskSpec]) -> Result<(), InnerError> {
    let mut text = String::new();
    for t in tasks {
        text.push_str(&serde_json::to_string(t).expect("task serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| InnerError::file(path, e))
}

const ADJECTIVES: &[&str] = &[
    "amber", "basalt", "cobalt", "dusky", "ember", "frosted", "granite", "hazel", "indigo", "jade", "lunar", "marble",
    "nickel", "onyx", "pine", "quartz", "russet", "slate", "topaz", "umber", "violet", "willow", "copper", "saffron",
];
const NOUNS: &[&str] = &[
    "harbor",
    "beacon",
    "canyon",
    "depot",
    "engine",
    "forge",
    "garden",
    "hangar",
    "island",
    "junction",
    "kiln",
    "lighthouse",
    "mill",
    "orchard",
    "pier",
    "quarry",
    "reservoir",
    "station",
    "tower",
    "vault",
    "wharf",
    "bridge",
];
const ATTRIBUTES: &[&str] = &["tariff", "serial", "quota", "rating", "permit", "ledger", "manifest", "voltage"];

/// Shape of a synthetic task pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub families: usize,
    pub tasks_per_family: usize,
    pub min_keys: usize,
    pub max_keys: usize,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig { families: 20, tasks_per_family: 8, min_keys: 4, max_keys: 8, seed: 0 }
    }
}

/// Generate a pool of families of lookup tasks. Tasks in one family share a
/// topic, a key set, and the key holding the answer; answers differ per task.
pub fn synth_pool(config: &PoolConfig) -> Vec<TaskSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, fnv1a64(b"pool")]));
    let (lo, hi) = (config.min_keys.max(1), config.max_keys.max(config.min_keys.max(1)));
    let mut tasks = Vec::with_capacity(config.families * config.tasks_per_family);
    for f in 0..config.families {
        let family_id = format!("f{f:02}");
        let n_keys = rng.random_range(lo..=hi);
        let gold_index = rng.random_range(0..n_keys);
        let adjective = ADJECTIVES[f % ADJECTIVES.len()];
        let noun = NOUNS[(f + f / ADJECTIVES.len()) % NOUNS.len()];
        let attribute = ATTRIBUTES[rng.random_range(0..ATTRIBUTES.len())];
        for t in 0..config.tasks_per_family {
            let task_id = format!("{family_id}-t{t:02}");
            let case = rng.random_range(100..1000);
            let gold = format!("{attribute}-{}", &stable_hex(&format!("{}/{task_id}", config.seed))[..6]);
            let tool_table = (0..n_keys)
                .map(|k| (format!("{family_id}-k{k}"), if k == gold_index { gold.clone() } else { String::new() }))
                .collect();
            tasks.push(TaskSpec {
                task_id,
                family_id: family_id.clone(),
                query: format!("What is the {attribute} of the {adjective} {noun} for case {case}?"),
                gold_answer: gold,
                tool_table,
                max_steps: n_keys as i64,
            });
        }
    }
    tasks
}
