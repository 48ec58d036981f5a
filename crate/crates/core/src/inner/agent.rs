use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TaskSpec;
use crate::gateway::{estimate_tokens, CompletionParams, Gateway};
use crate::hash::{fnv1a64, mix_seed};
use crate::markers::{key_marker, keys, miss_marker, misses};
use crate::memory::{MemoryResponse, TrajectoryStep};

/// Ledger tag for the agent's own token use.
pub const AGENT_TAG: &str = "agent";

/// One action and what the environment returned for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentStep {
    pub action: String,
    pub observation: String,
    pub state_summary: String,
    /// Set when the agent commits to a final answer, ending the episode.
    pub answer: Option<String>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub memory_tokens: u64,
}

/// A policy acting in the lookup environment. Implementations bill their
/// token use to the gateway they are handed.
pub trait Agent: Send + Sync {
    fn id(&self) -> &str;

    /// Take the next step. Memory is retrieved once per episode and passed
    /// to every step; only the first step pays for reading it.
    fn step(
        &self,
        task: &TaskSpec,
        history: &[TrajectoryStep],
        memory: &MemoryResponse,
        gateway: &Gateway,
    ) -> Result<AgentStep, String>;
}

fn lookup(task: &TaskSpec, key: &str) -> (String, Option<String>) {
    match task.tool_table.get(key) {
        Some(v) if !v.is_empty() => (format!("found {} value={v}", key_marker(key)), Some(v.clone())),
        Some(_) => (format!("no result {}", miss_marker(key)), None),
        None => (format!("unknown key {key}"), None),
    }
}

fn context(task: &TaskSpec, history: &[TrajectoryStep], memory_text: &str) -> String {
    let mut s = format!("question: {}\n", task.query);
    if !memory_text.is_empty() {
        s.push_str("memory:\n");
        s.push_str(memory_text);
        s.push('\n');
    }
    for h in history {
        s.push_str(&format!("{} -> {}\n", h.action, h.observation));
    }
    s
}

/// Scripted lookup agent.
///
/// It tries keys that memory marks as answer-bearing first, then the
/// family's keys in a seeded exploration order, and keys memory marks as
/// empty last. Without memory every task of a family costs the same number
/// of steps.
#[derive(Debug, Clone)]
pub struct SimAgent {
    id: String,
    seed: u64,
}

impl SimAgent {
    pub fn new(seed: u64) -> Self {
        SimAgent { id: "sim-0".into(), seed }
    }

    /// The order a memory-less agent explores `task`'s keys in.
    pub fn exploration_order(&self, task: &TaskSpec) -> Vec<String> {
        let mut order: Vec<String> = task.tool_table.keys().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.seed, fnv1a64(task.family_id.as_bytes())]));
        order.shuffle(&mut rng);
        order
    }

    /// Full lookup plan given what memory says.
    pub fn plan(&self, task: &TaskSpec, memory_text: &str) -> Vec<String> {
        let known = |k: &String| task.tool_table.contains_key(k);
        let hinted: Vec<String> = keys(memory_text).into_iter().filter(known).collect();
        let avoid: Vec<String> = misses(memory_text).into_iter().filter(|k| known(k) && !hinted.contains(k)).collect();
        let rest = self.exploration_order(task).into_iter().filter(|k| !hinted.contains(k) && !avoid.contains(k));
        hinted.iter().cloned().chain(rest).chain(avoid.iter().cloned()).collect()
    }
}

impl Agent for SimAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn step(
        &self,
        task: &TaskSpec,
        history: &[TrajectoryStep],
        memory: &MemoryResponse,
        gateway: &Gateway,
    ) -> Result<AgentStep, String> {
        let memory_text = memory.render();
        let plan = self.plan(task, &memory_text);
        let tried: Vec<&str> = history.iter().filter_map(|h| h.action.strip_prefix("lookup ")).collect();
        let next = plan.iter().find(|k| !tried.contains(&k.as_str()));
        let shown_memory = if history.is_empty() { memory_text.as_str() } else { "" };
        let prompt = context(task, history, shown_memory);
        let (action, observation, answer) = match next {
            Some(k) => {
                let (obs, ans) = lookup(task, k);
                (format!("lookup {k}"), obs, ans)
            }
            None => ("give up".to_string(), "no keys left".to_string(), Some(String::new())),
        };
        let step = AgentStep {
            state_summary: format!("tried {} of {} keys", tried.len(), task.tool_table.len()),
            tokens_in: estimate_tokens(&prompt),
            tokens_out: estimate_tokens(&action),
            memory_tokens: estimate_tokens(shown_memory),
            action,
            observation,
            answer,
        };
        gateway.record(AGENT_TAG, step.tokens_in, step.tokens_out, 0.0);
        Ok(step)
    }
}

/// Agent that asks the language model which key to look up next.
#[derive(Debug, Clone)]
pub struct LlmAgent {
    id: String,
    max_tokens: u32,
}

impl Default for LlmAgent {
    fn default() -> Self {
        LlmAgent { id: "llm-0".into(), max_tokens: 64 }
    }
}

impl Agent for LlmAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn step(
        &self,
        task: &TaskSpec,
        history: &[TrajectoryStep],
        memory: &MemoryResponse,
        gateway: &Gateway,
    ) -> Result<AgentStep, String> {
        let memory_text = memory.render();
        let shown_memory = if history.is_empty() { memory_text.as_str() } else { "" };
        let keys: Vec<&str> = task.tool_table.keys().map(String::as_str).collect();
        let prompt = format!(
            "You answer questions by looking up keys in a table.\navailable keys: {}\n{}Reply with one line: \"lookup <key>\" or \"answer: <text>\".\n",
            keys.join(", "),
            context(task, history, shown_memory)
        );
        let params = CompletionParams { temperature: 0.0, max_tokens: self.max_tokens, tag: AGENT_TAG.into() };
        let (reply, usage) = gateway.complete(&prompt, &params).map_err(|e| e.to_string())?;
        let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
        let (action, observation, answer) = if let Some(a) = line.strip_prefix("answer:") {
            (line.to_string(), String::new(), Some(a.trim().to_string()))
        } else if let Some(k) = line.strip_prefix("lookup ").map(str::trim).filter(|k| task.tool_table.contains_key(*k))
        {
            let (obs, ans) = lookup(task, k);
            (format!("lookup {k}"), obs, ans)
        } else {
            return Err(format!("unparseable agent reply: {line:?}"));
        };
        Ok(AgentStep {
            action,
            observation,
            state_summary: format!("step {}", history.len()),
            answer,
            tokens_in: usage.tokens_in,
            tokens_out: usage.tokens_out,
            memory_tokens: estimate_tokens(shown_memory).min(usage.tokens_in),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::{synth_pool, PoolConfig};

    #[test]
    fn plan_puts_hints_first_and_misses_last() {
        let task = synth_pool(&PoolConfig { families: 1, tasks_per_family: 1, ..Default::default() }).remove(0);
        let agent = SimAgent::new(3);
        let order = agent.exploration_order(&task);
        let gold = task.gold_key().unwrap().to_string();
        let first_other = order.iter().find(|k| **k != gold).unwrap().clone();
        let memory = format!("{} elsewhere [key=f99-k0] {}", key_marker(&gold), miss_marker(&first_other));
        let plan = agent.plan(&task, &memory);
        assert_eq!(plan[0], gold);
        assert_eq!(plan.last().unwrap(), &first_other);
        assert_eq!(plan.len(), task.tool_table.len());
        assert_eq!(agent.plan(&task, ""), order);
    }
}
