//! Declarative memory architectures.
//!
//! A [`MemoryGenotype`] names one strategy plus parameters for each of the
//! four memory stages (encode, store, retrieve, manage). Genotypes are plain
//! data: they validate, serialize with a stable key order, mutate
//! deterministically, and are turned into running providers by
//! [`instantiate`].

mod mutate;
mod presets;
mod validate;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::embed::StoreKind;
use crate::gateway::Gateway;
use crate::hash::stable_hex;
use crate::memory::{ModularProvider, Stage};
pub use mutate::{adopt, mutate, mutate_site, mutate_weighted, MutationSite};
pub(crate) use mutate::{MAX_CHARS, RETRIEVE_K};
pub use presets::{preset, preset_names, PRESETS};
pub use validate::{validate, Violation};

pub const SCHEMA_VERSION: u32 = 1;
pub const GENOTYPE_EXTENSION: &str = ".genotype.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeStrategy {
    Verbatim,
    Summary,
    Insight,
    Workflow,
    TipsShortcuts,
    ToolSynthesis,
}

impl EncodeStrategy {
    pub const ALL: [EncodeStrategy; 6] = [
        EncodeStrategy::Verbatim,
        EncodeStrategy::Summary,
        EncodeStrategy::Insight,
        EncodeStrategy::Workflow,
        EncodeStrategy::TipsShortcuts,
        EncodeStrategy::ToolSynthesis,
    ];

    /// Whether the strategy needs a language-model call.
    pub fn uses_gateway(self) -> bool {
        self != EncodeStrategy::Verbatim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessFilter {
    All,
    SuccessOnly,
    Contrastive,
}

impl SuccessFilter {
    pub const ALL: [SuccessFilter; 3] = [SuccessFilter::All, SuccessFilter::SuccessOnly, SuccessFilter::Contrastive];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieveStrategy {
    SemanticTopK,
    ContrastivePair,
    FunctionMatch,
    ReturnAll,
}

impl RetrieveStrategy {
    pub const ALL: [RetrieveStrategy; 4] = [
        RetrieveStrategy::SemanticTopK,
        RetrieveStrategy::ContrastivePair,
        RetrieveStrategy::FunctionMatch,
        RetrieveStrategy::ReturnAll,
    ];

    pub fn needs_embeddings(self) -> bool {
        matches!(self, RetrieveStrategy::SemanticTopK | RetrieveStrategy::ContrastivePair)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManageStrategy {
    None,
    Dedup,
    PruneByScore,
    Consolidate,
}

impl ManageStrategy {
    pub const ALL: [ManageStrategy; 4] =
        [ManageStrategy::None, ManageStrategy::Dedup, ManageStrategy::PruneByScore, ManageStrategy::Consolidate];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeStage {
    pub strategy: EncodeStrategy,
    /// Second encoder run on the same trajectory ("Traj. & Tips" style).
    #[serde(default)]
    pub companion: Option<EncodeStrategy>,
    pub success_filter: SuccessFilter,
    pub max_items_per_trajectory: i64,
    pub max_chars: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreStage {
    pub strategy: StoreKind,
    /// `None` is unlimited. When full, the oldest item is evicted.
    #[serde(default)]
    pub capacity: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieveStage {
    pub strategy: RetrieveStrategy,
    pub k: i64,
    pub min_score: f64,
    #[serde(default)]
    pub stage_filter: Option<Vec<Stage>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManageStage {
    pub strategy: ManageStrategy,
    pub trigger_every: i64,
    pub dedup_threshold: f64,
    pub capacity: i64,
}

/// One memory architecture: a strategy and parameters per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryGenotype {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub lineage: Vec<String>,
    pub encode: EncodeStage,
    pub store: StoreStage,
    pub retrieve: RetrieveStage,
    pub manage: ManageStage,
}

#[derive(Debug, Error)]
pub enum GenotypeError {
    #[error("unknown preset {name:?}; available: {}", available.join(", "))]
    UnknownPreset { name: String, available: Vec<String> },
    #[error("invalid genotype {name:?}: {}", violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid { name: String, violations: Vec<Violation> },
    #[error("genotype file {path}: {reason}")]
    File { path: String, reason: String },
    #[error("genotype text: {0}")]
    Parse(String),
}

impl MemoryGenotype {
    /// Pretty JSON with struct-order keys and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("genotype serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, GenotypeError> {
        let g: MemoryGenotype = serde_json::from_str(text).map_err(|e| GenotypeError::Parse(e.to_string()))?;
        if g.schema_version != SCHEMA_VERSION {
            return Err(GenotypeError::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                g.schema_version
            )));
        }
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, GenotypeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GenotypeError::File { path: path.display().to_string(), reason: e.to_string() })?;
        Self::from_json(&text)
            .map_err(|e| GenotypeError::File { path: path.display().to_string(), reason: e.to_string() })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    /// Hash of the full serialized genotype, including name and lineage.
    pub fn hash(&self) -> String {
        stable_hex(&self.to_json())
    }

    /// Hash of the four stages only. Two genotypes with the same
    /// architecture but different names share it.
    pub fn architecture_hash(&self) -> String {
        let body = serde_json::to_string(&(&self.encode, &self.store, &self.retrieve, &self.manage))
            .expect("stages serialize");
        stable_hex(&body)
    }

    pub fn same_architecture(&self, other: &MemoryGenotype) -> bool {
        self.encode == other.encode
            && self.store == other.store
            && self.retrieve == other.retrieve
            && self.manage == other.manage
    }

    /// Name of the first ancestor, or this genotype's own name.
    pub fn root_name(&self) -> &str {
        self.lineage.first().map(String::as_str).unwrap_or(&self.name)
    }
}

/// Build a provider executing the genotype's four strategies.
pub fn instantiate(genotype: &MemoryGenotype, gateway: Gateway, seed: u64) -> Result<ModularProvider, GenotypeError> {
    let violations = validate(genotype);
    if !violations.is_empty() {
        return Err(GenotypeError::Invalid { name: genotype.name.clone(), violations });
    }
    Ok(ModularProvider::new(genotype.clone(), gateway, seed))
}
