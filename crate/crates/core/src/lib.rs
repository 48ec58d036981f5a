//! Modular agent memory with bilevel architecture search.
//!
//! Memory architectures are declarative [`genotype::MemoryGenotype`]s with one
//! strategy per stage (encode, store, retrieve, manage). The inner loop
//! ([`inner`]) runs an agent over a task batch with a fresh provider and
//! measures performance, cost and delay; the outer loop ([`evolve`]) ranks
//! candidates by Pareto dominance, diagnoses the best and designs
//! descendants.
//!
//! ```
//! use evolab::gateway::Gateway;
//! use evolab::genotype::{instantiate, preset};
//! use evolab::memory::{MemoryProvider, MemoryRequest, Stage};
//!
//! let mut provider = instantiate(&preset("dilu").unwrap(), Gateway::stub(), 0).unwrap();
//! provider.initialize().unwrap();
//! let response = provider.provide_memory(&MemoryRequest::new("anything", Stage::Planning, 3)).unwrap();
//! assert!(response.items.is_empty());
//! ```

pub mod embed;
pub mod eval;
pub mod evolve;
pub mod gateway;
pub mod genotype;
pub mod hash;
pub mod inner;
pub mod markers;
pub mod memory;
