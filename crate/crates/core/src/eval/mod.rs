//! Scoring protocols, attempt metrics, and run reports.

mod metrics;
mod report;
mod scoring;

use thiserror::Error;

pub use metrics::{cumulative_accuracy, pass_at_k, EpisodeOutcome};
pub use report::{collect_run, evaluate_run, rescore, write_report, CandidateRow, EvalRow, RunTables};
pub use scoring::{normalize_answer, parse_verdict, score_exact, score_judge, JudgeOutcome, Protocol};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no outcomes to score")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("task {task_id} has {attempts} attempts, fewer than k = {k}")]
    TooFewAttempts { task_id: String, attempts: usize, k: usize },
    #[error("task {task_id}: attempts are not numbered 1..n")]
    NonContiguous { task_id: String },
    #[error("run directory {0} holds no trajectories")]
    NoTrajectories(String),
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
}
