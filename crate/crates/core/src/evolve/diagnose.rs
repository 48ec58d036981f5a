use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CandidateRecord, EvolveError};
use crate::gateway::{CompletionParams, Gateway, GatewayMode};
use crate::inner::{read_records, EpisodeRecord, TRAJECTORIES_FILE};
use crate::markers::keys;
use crate::memory::{MemoryItem, MEMORY_FILE};

const DIAGNOSE: &str = include_str!("../../assets/prompts/diagnose.txt");

/// Structural diagnosis of one candidate's memory behaviour.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DefectProfile {
    /// Share of provided items whose key shows up in an action of the
    /// episode they were provided to.
    pub retrieval_hit_rate: f64,
    /// Share of stored items never provided.
    pub dead_item_fraction: f64,
    /// Memory-context tokens over all tokens.
    pub memory_token_overhead: f64,
    /// Families with success rate below one half.
    pub failure_families: Vec<String>,
    /// Final store size per episode.
    pub store_growth: f64,
    /// Share of episodes whose ingestion failed.
    #[serde(default)]
    pub ingest_failure_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub narrative: Option<String>,
}

/// Whether an item was acted on: one of its answer keys (or its library
/// key) appears in an action of the episode.
pub fn referenced(item: &MemoryItem, record: &EpisodeRecord) -> bool {
    let mut tokens = keys(&item.content);
    tokens.extend(item.key.iter().cloned());
    record.trajectory.steps.iter().any(|s| tokens.iter().any(|t| s.action.split_whitespace().any(|w| w == t)))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Compute the structural profile. Never calls the gateway.
pub fn profile(records: &[EpisodeRecord], snapshot: &[MemoryItem]) -> DefectProfile {
    let provided: usize = records.iter().map(|r| r.provided.len()).sum();
    let used: usize = records.iter().map(|r| r.provided.iter().filter(|i| referenced(i, r)).count()).sum();
    let ever_provided: BTreeSet<&str> = records.iter().flat_map(|r| r.provided.iter().map(|i| i.id.as_str())).collect();
    let dead = snapshot.iter().filter(|i| i.hit_count == 0 && !ever_provided.contains(i.id.as_str())).count();
    let memory_tokens: u64 = records.iter().flat_map(|r| &r.trajectory.steps).map(|s| s.memory_tokens).sum();
    let total_tokens: u64 = records.iter().map(|r| r.trajectory.total_tokens).sum();
    let mut families: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = families.entry(&r.family_id).or_default();
        e.0 += usize::from(r.trajectory.success);
        e.1 += 1;
    }
    let failed_ingests = records.iter().filter(|r| matches!(r.ingest, Some((false, _)))).count();
    DefectProfile {
        retrieval_hit_rate: ratio(used, provided),
        dead_item_fraction: ratio(dead, snapshot.len()),
        memory_token_overhead: if total_tokens == 0 { 0.0 } else { memory_tokens as f64 / total_tokens as f64 },
        failure_families: families
            .iter()
            .filter(|(_, (ok, n))| (*ok as f64) < 0.5 * *n as f64)
            .map(|(f, _)| f.to_string())
            .collect(),
        store_growth: ratio(snapshot.len(), records.len()),
        ingest_failure_rate: ratio(failed_ingests, records.len()),
        narrative: None,
    }
}

/// Profile a candidate and, when a real model or a recorded fixture is
/// available, ask for a narrative under the `diagnose` tag.
pub fn diagnose(
    candidate: &CandidateRecord,
    records: &[EpisodeRecord],
    snapshot: &[MemoryItem],
    gateway: &Gateway,
) -> DefectProfile {
    let mut p = profile(records, snapshot);
    let metrics = serde_json::to_string_pretty(&p).expect("profile serializes");
    let episodes: Vec<String> = records
        .iter()
        .filter(|r| !r.trajectory.success)
        .take(3)
        .map(|r| crate::memory::render_trajectory(&r.trajectory))
        .collect();
    let prompt = DIAGNOSE
        .replace("{genotype}", &candidate.genotype.to_json())
        .replace("{metrics}", &metrics)
        .replace("{episodes}", &episodes.join("\n"));
    if gateway.mode() == GatewayMode::Real || gateway.has_fixture("diagnose", &prompt) {
        let params = CompletionParams { temperature: 0.0, max_tokens: 400, tag: "diagnose".into() };
        p.narrative = gateway.complete(&prompt, &params).ok().map(|(text, _)| text.trim().to_string());
    }
    p
}

/// Diagnose from a persisted candidate directory.
pub fn diagnose_dir(candidate: &CandidateRecord, dir: &Path, gateway: &Gateway) -> Result<DefectProfile, EvolveError> {
    let path = dir.join(TRAJECTORIES_FILE);
    if !path.exists() {
        return Err(EvolveError::MissingTrajectories(dir.display().to_string()));
    }
    let records = read_records(&path)?;
    let mut snapshot = Vec::new();
    if let Ok(text) = std::fs::read_to_string(dir.join(MEMORY_FILE)) {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            snapshot.push(
                serde_json::from_str(line)
                    .map_err(|e| EvolveError::State(format!("{}: {e}", dir.join(MEMORY_FILE).display())))?,
            );
        }
    }
    Ok(diagnose(candidate, &records, &snapshot, gateway))
}
