//! Experience evolution: running an agent with one fixed memory architecture
//! over a task batch and measuring what it costs and achieves.

mod agent;
mod episode;
mod feedback;
mod task;

use std::path::PathBuf;

use thiserror::Error;

pub use agent::{Agent, AgentStep, LlmAgent, SimAgent, AGENT_TAG};
pub use episode::{
    offline_corpus, read_records, run_batch, run_episode, run_tasks, write_records, BatchResult, DelayMode,
    EpisodeOptions, EpisodeRecord, RunConfig, RunMode, GENOTYPE_FILE, SUMMARY_FILE, TRAJECTORIES_FILE,
};
pub use feedback::{aggregate, FeedbackSummary, FeedbackVector};
pub use task::{compose_batch, read_tasks, synth_pool, write_tasks, PoolConfig, TaskBatch, TaskSpec};

#[derive(Debug, Error)]
pub enum InnerError {
    #[error("cannot aggregate an empty feedback list")]
    EmptyAggregate,
    #[error("task pool too small: need {required} tasks, have {available}")]
    InsufficientPool { required: usize, available: usize },
    #[error("reused tasks requested but there is no previous batch")]
    NoPreviousBatch,
    #[error("invalid task {task_id}: {reason}")]
    InvalidTask { task_id: String, reason: String },
    #[error(transparent)]
    Genotype(#[from] crate::genotype::GenotypeError),
    #[error(transparent)]
    Memory(#[from] crate::memory::MemoryError),
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
}

impl InnerError {
    pub(crate) fn file(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        InnerError::File { path: path.into(), reason: reason.to_string() }
    }
}
