//! Architectural evolution: Pareto ranking, parent selection, diagnosis,
//! descendant design, and the iteration driver.

mod design;
mod diagnose;
mod driver;
mod pareto;

use std::path::PathBuf;

use thiserror::Error;

pub use design::{bias_table, design, Descendant, Proposer, DESIGN_REPAIRS};
pub use diagnose::{diagnose, diagnose_dir, profile, referenced, DefectProfile};
pub use driver::{
    candidate_dir, evolve_iteration, iteration_dir, run_evolution, EvolutionConfig, EvolutionState, IterationRecord,
    Pending, EVOLUTION_LOG, STATE_FILE,
};
pub use pareto::{assign_ranks, dominates, pareto_rank, select_parents, summary_vector, CandidateRecord};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("summary vector {index} has a non-finite component")]
    NonFinite { index: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: crate::inner::InnerError,
    },
    #[error("no trajectories in run directory {0}")]
    MissingTrajectories(String),
    #[error("state: {0}")]
    State(String),
    #[error(transparent)]
    Genotype(#[from] crate::genotype::GenotypeError),
    #[error(transparent)]
    Inner(#[from] crate::inner::InnerError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
