//! Data carriers and the four-stage memory-provider contract.
//!
//! A provider ingests finished trajectories (encode + store), answers memory
//! requests (retrieve), and periodically maintains its store (manage).
//! [`ModularProvider`] executes whatever strategies a
//! [`MemoryGenotype`](crate::genotype::MemoryGenotype) names;
//! [`NullProvider`] is the memory-free baseline.

mod encode;
mod manage;
mod modular;
mod types;

use std::path::PathBuf;

use thiserror::Error;

pub use encode::{parse_description, render_trajectory};
pub use manage::utility;
pub use modular::{ModularProvider, MANAGE_LOG, MEMORY_FILE};
pub use types::*;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("initialization failed for {path}: {reason}")]
    Init { path: PathBuf, reason: String },
    #[error("invalid memory request: {0}")]
    InvalidRequest(String),
    #[error("invalid trajectory {0}")]
    InvalidTrajectory(String),
    #[error("invalid memory item: {0}")]
    InvalidItem(String),
    #[error("provider not initialized")]
    NotInitialized,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Backend(#[from] crate::embed::BackendError),
}

/// The contract every memory architecture implements.
///
/// Calls on one instance are serialized by `&mut self`; distinct instances
/// share nothing and may run on different threads.
pub trait MemoryProvider: Send {
    /// Load persisted state or start empty. Calling it again is a no-op.
    fn initialize(&mut self) -> Result<bool, MemoryError>;

    /// Encode a finished trajectory and store the results, all or nothing.
    /// The description lists absorbed items as `"N <kind> item(s)"`.
    fn take_in_memory(&mut self, trajectory: &TrajectoryData) -> (bool, String);

    /// Retrieve at most `request.max_items` items, best first.
    fn provide_memory(&mut self, request: &MemoryRequest) -> Result<MemoryResponse, MemoryError>;

    /// Apply the maintenance strategy. Never grows the store.
    fn manage(&mut self) -> ManageReport;

    /// Post-episode callback: credit provided items when the episode succeeded.
    fn record_outcome(&mut self, provided_ids: &[String], success: bool);

    /// Whether the manage cadence fires at the current ingest count.
    fn manage_due(&self) -> bool;

    fn ingest_counter(&self) -> u64;

    /// All stored items in insertion order.
    fn snapshot(&self) -> Vec<MemoryItem>;

    fn len(&self) -> usize {
        self.snapshot().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write state to the configured storage directory, if any.
    fn persist(&self) -> Result<(), MemoryError> {
        Ok(())
    }
}

/// Provider that remembers nothing.
#[derive(Debug, Default, Clone)]
pub struct NullProvider {
    ingested: u64,
}

impl MemoryProvider for NullProvider {
    fn initialize(&mut self) -> Result<bool, MemoryError> {
        Ok(true)
    }

    fn take_in_memory(&mut self, trajectory: &TrajectoryData) -> (bool, String) {
        match trajectory.validate(DEFAULT_SUCCESS_THRESHOLD) {
            Ok(()) => {
                self.ingested += 1;
                (true, "0 items".into())
            }
            Err(e) => (false, e.to_string()),
        }
    }

    fn provide_memory(&mut self, request: &MemoryRequest) -> Result<MemoryResponse, MemoryError> {
        request.validate()?;
        Ok(MemoryResponse::empty())
    }

    fn manage(&mut self) -> ManageReport {
        ManageReport { ingest_counter: self.ingested, ..Default::default() }
    }

    fn record_outcome(&mut self, _provided_ids: &[String], _success: bool) {}

    fn manage_due(&self) -> bool {
        false
    }

    fn ingest_counter(&self) -> u64 {
        self.ingested
    }

    fn snapshot(&self) -> Vec<MemoryItem> {
        Vec::new()
    }
}
