use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MemoryError;

/// What a stored experience unit represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    RawTrajectory,
    Insight,
    Tip,
    Shortcut,
    Workflow,
    ToolSpec,
}

impl MemoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryKind::RawTrajectory => "raw_trajectory",
            MemoryKind::Insight => "insight",
            MemoryKind::Tip => "tip",
            MemoryKind::Shortcut => "shortcut",
            MemoryKind::Workflow => "workflow",
            MemoryKind::ToolSpec => "tool_spec",
        }
    }
}

/// The atomic unit of stored experience.
///
/// Field order is the on-disk key order of `memory.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryItem {
    pub id: String,
    pub kind: MemoryKind,
    pub content: String,
    pub source_task_id: String,
    pub created_at_step: u64,
    pub confidence: f64,
    pub hit_count: u64,
    pub success_assoc: u64,
    /// Whether the episode this item was distilled from succeeded.
    #[serde(default)]
    pub source_success: bool,
    /// Library key for keyed stores (function name for tool specs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    /// Ids of the items a consolidated item was merged from.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
}

impl MemoryItem {
    pub fn check(&self) -> Result<(), MemoryError> {
        if self.id.is_empty() {
            return Err(MemoryError::InvalidItem("empty id".into()));
        }
        if self.content.is_empty() {
            return Err(MemoryError::InvalidItem(format!("item {} has empty content", self.id)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(MemoryError::InvalidItem(format!(
                "item {} confidence {} outside [0,1]",
                self.id, self.confidence
            )));
        }
        if self.success_assoc > self.hit_count {
            return Err(MemoryError::InvalidItem(format!(
                "item {} success_assoc {} exceeds hit_count {}",
                self.id, self.success_assoc, self.hit_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub index: usize,
    pub agent_id: String,
    pub state_summary: String,
    pub action: String,
    pub observation: String,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// Portion of `tokens_in` spent on retrieved memory context.
    #[serde(default)]
    pub memory_tokens: u64,
}

/// Complete record of one task episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryData {
    pub task_id: String,
    #[serde(default)]
    pub family_id: String,
    pub query: String,
    pub steps: Vec<TrajectoryStep>,
    pub reward: f64,
    pub success: bool,
    pub total_tokens: u64,
    pub wall_delay: f64,
    pub provided_memory_ids: Vec<String>,
    /// The agent's final answer, empty when it gave none.
    #[serde(default)]
    pub answer: String,
}

/// Default reward threshold for binary tasks.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1.0;

impl TrajectoryData {
    /// Build a trajectory, deriving `total_tokens` and `success`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        task_id: impl Into<String>,
        family_id: impl Into<String>,
        query: impl Into<String>,
        steps: Vec<TrajectoryStep>,
        reward: f64,
        success_threshold: f64,
        wall_delay: f64,
        provided_memory_ids: Vec<String>,
        answer: impl Into<String>,
    ) -> Self {
        let total_tokens = steps.iter().map(|s| s.tokens_in + s.tokens_out).sum();
        TrajectoryData {
            task_id: task_id.into(),
            family_id: family_id.into(),
            query: query.into(),
            steps,
            reward,
            success: reward >= success_threshold,
            total_tokens,
            wall_delay,
            provided_memory_ids,
            answer: answer.into(),
        }
    }

    pub fn validate(&self, success_threshold: f64) -> Result<(), MemoryError> {
        let bad = |msg: String| Err(MemoryError::InvalidTrajectory(format!("{}: {msg}", self.task_id)));
        for (i, step) in self.steps.iter().enumerate() {
            if step.index != i {
                return bad(format!("step indices not contiguous at position {i} (found {})", step.index));
            }
            if step.memory_tokens > step.tokens_in {
                return bad(format!("step {i} memory_tokens exceed tokens_in"));
            }
        }
        let sum: u64 = self.steps.iter().map(|s| s.tokens_in + s.tokens_out).sum();
        if sum != self.total_tokens {
            return bad(format!("total_tokens {} != step sum {sum}", self.total_tokens));
        }
        if !(0.0..=1.0).contains(&self.reward) {
            return bad(format!("reward {} outside [0,1]", self.reward));
        }
        if self.success != (self.reward >= success_threshold) {
            return bad("success flag disagrees with reward threshold".into());
        }
        if self.wall_delay.is_nan() || self.wall_delay < 0.0 {
            return bad("negative wall_delay".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Planning,
    Execution,
    Reflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRequest {
    pub query: String,
    /// Recent interaction history.
    pub context: String,
    pub stage: Stage,
    pub max_items: i64,
    #[serde(default)]
    pub status: BTreeMap<String, serde_json::Value>,
}

impl MemoryRequest {
    pub fn new(query: impl Into<String>, stage: Stage, max_items: i64) -> Self {
        MemoryRequest { query: query.into(), context: String::new(), stage, max_items, status: BTreeMap::new() }
    }

    pub fn validate(&self) -> Result<usize, MemoryError> {
        usize::try_from(self.max_items)
            .map_err(|_| MemoryError::InvalidRequest(format!("max_items must be >= 0, got {}", self.max_items)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryResponse {
    pub items: Vec<MemoryItem>,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl MemoryResponse {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.id.clone()).collect()
    }

    /// All item contents joined as they would be shown to an agent.
    pub fn render(&self) -> String {
        self.items.iter().map(|i| format!("[{}] {}", i.kind.as_str(), i.content)).collect::<Vec<_>>().join("\n")
    }
}

/// Counts produced by one `manage()` invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManageReport {
    pub merged: usize,
    pub pruned: usize,
    pub deduplicated: usize,
    pub ingest_counter: u64,
}

impl ManageReport {
    pub fn removed(&self) -> usize {
        self.merged + self.pruned + self.deduplicated
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(i: usize, tin: u64, tout: u64) -> TrajectoryStep {
        TrajectoryStep {
            index: i,
            agent_id: "agent-0".into(),
            state_summary: String::new(),
            action: format!("a{i}"),
            observation: String::new(),
            tokens_in: tin,
            tokens_out: tout,
            memory_tokens: 0,
        }
    }

    #[test]
    fn trajectory_derives_totals() {
        let t = TrajectoryData::new("t", "f", "q", vec![step(0, 3, 4), step(1, 5, 6)], 1.0, 1.0, 2.0, vec![], "x");
        assert_eq!(t.total_tokens, 18);
        assert!(t.success);
        t.validate(1.0).unwrap();
        let f = TrajectoryData::new("t", "f", "q", vec![], 0.0, 1.0, 0.0, vec![], "");
        assert!(!f.success);
    }

    #[test]
    fn trajectory_rejects_gaps_and_bad_totals() {
        let mut t = TrajectoryData::new("t", "f", "q", vec![step(0, 1, 1), step(2, 1, 1)], 1.0, 1.0, 0.0, vec![], "");
        assert!(t.validate(1.0).is_err());
        t.steps[1].index = 1;
        t.total_tokens += 1;
        assert!(t.validate(1.0).is_err());
    }

    #[test]
    fn negative_max_items_is_rejected() {
        let r = MemoryRequest::new("q", Stage::Planning, -1);
        assert!(matches!(r.validate(), Err(MemoryError::InvalidRequest(_))));
        assert_eq!(MemoryRequest::new("q", Stage::Planning, 4).validate().unwrap(), 4);
    }

    #[test]
    fn item_invariants() {
        let mut item = MemoryItem {
            id: "m1".into(),
            kind: MemoryKind::Tip,
            content: "x".into(),
            source_task_id: "t".into(),
            created_at_step: 1,
            confidence: 0.5,
            hit_count: 1,
            success_assoc: 1,
            source_success: true,
            key: None,
            parents: vec![],
        };
        item.check().unwrap();
        item.success_assoc = 2;
        assert!(item.check().is_err());
        item.success_assoc = 0;
        item.content.clear();
        assert!(item.check().is_err());
    }
}
