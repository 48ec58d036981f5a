use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CandidateRecord, DefectProfile};
use crate::gateway::{CompletionParams, Gateway};
use crate::genotype::{adopt, mutate_weighted, validate, MemoryGenotype, MutationSite, MAX_CHARS, RETRIEVE_K};
use crate::hash::mix_seed;

const DESIGN: &str = include_str!("../../assets/prompts/design.txt");

/// Repair attempts after the first invalid proposal.
pub const DESIGN_REPAIRS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proposer {
    Deterministic,
    Llm,
}

impl FromStr for Proposer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "deterministic" => Ok(Proposer::Deterministic),
            "llm" => Ok(Proposer::Llm),
            other => Err(format!("unknown proposer {other:?}")),
        }
    }
}

impl fmt::Display for Proposer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Proposer::Deterministic => "deterministic",
            Proposer::Llm => "llm",
        })
    }
}

/// A designed genotype and how it came about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descendant {
    pub genotype: MemoryGenotype,
    /// `"mutation"`, `"directed"`, `"llm"`, or `"fallback: <reason>"`.
    pub origin: String,
}

// Thresholds of the bias table.
const OVERHEAD_HIGH: f64 = 0.5;
const HIT_RATE_LOW: f64 = 0.5;
const DEAD_HIGH: f64 = 0.5;
const GROWTH_HIGH: f64 = 2.0;
const INGEST_FAILURE_HIGH: f64 = 0.25;

/// Site weights for a defect profile. Every site keeps weight at least 1 so
/// the search never stops exploring.
pub fn bias_table(profile: &DefectProfile) -> Vec<(MutationSite, f64)> {
    use MutationSite as S;
    MutationSite::ALL
        .iter()
        .map(|&site| {
            let mut w = 1.0;
            if profile.retrieval_hit_rate < HIT_RATE_LOW
                && matches!(site, S::RetrieveStrategy | S::RetrieveK | S::MinScore)
            {
                w *= 4.0;
            }
            if profile.memory_token_overhead > OVERHEAD_HIGH && matches!(site, S::RetrieveK | S::MaxChars) {
                w *= 4.0;
            }
            if profile.dead_item_fraction > DEAD_HIGH
                && matches!(site, S::ManageStrategy | S::ManageCapacity | S::TriggerEvery)
            {
                w *= 4.0;
            }
            if profile.store_growth > GROWTH_HIGH && matches!(site, S::StoreCapacity | S::MaxItemsPerTrajectory) {
                w *= 2.0;
            }
            if (!profile.failure_families.is_empty() || profile.ingest_failure_rate > INGEST_FAILURE_HIGH)
                && matches!(site, S::EncodeStrategy | S::EncodeCompanion | S::SuccessFilter)
            {
                w *= 2.0;
            }
            (site, w)
        })
        .collect()
}

/// Lower `retrieve.k` one notch, or `encode.max_chars` when k is at its floor.
fn reduce_overhead(g: &MemoryGenotype) -> Option<MemoryGenotype> {
    let mut child = g.clone();
    if let Some(k) = RETRIEVE_K.iter().rev().find(|&&k| k < g.retrieve.k) {
        child.retrieve.k = *k;
    } else {
        child.encode.max_chars = *MAX_CHARS.iter().rev().find(|&&c| c < g.encode.max_chars)?;
    }
    Some(adopt(g, child))
}

fn is_new(candidate: &MemoryGenotype, parent: &MemoryGenotype, taken: &[Descendant]) -> bool {
    !candidate.same_architecture(parent) && !taken.iter().any(|d| d.genotype.same_architecture(candidate))
}

/// Profile-guided mutation for descendant `index`, skipping architectures
/// already produced.
fn mutation_for(
    parent: &MemoryGenotype,
    profile: &DefectProfile,
    seed: u64,
    index: u64,
    taken: &[Descendant],
) -> Descendant {
    if index == 0 && profile.memory_token_overhead > OVERHEAD_HIGH {
        if let Some(g) = reduce_overhead(parent).filter(|g| is_new(g, parent, taken)) {
            return Descendant { genotype: g, origin: "directed".into() };
        }
    }
    let weights = bias_table(profile);
    let mut last = None;
    for attempt in 0..64u64 {
        let g = mutate_weighted(parent, seed, index + attempt * 1_000, &weights);
        if is_new(&g, parent, taken) {
            return Descendant { genotype: g, origin: "mutation".into() };
        }
        last = Some(g);
    }
    // The strategy space is large enough that this is unreachable in practice.
    Descendant { genotype: last.expect("at least one attempt"), origin: "mutation".into() }
}

fn extract_json(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

fn llm_proposal(
    parent: &MemoryGenotype,
    profile: &DefectProfile,
    index: usize,
    gateway: &Gateway,
    taken: &[Descendant],
) -> Result<MemoryGenotype, String> {
    let base = DESIGN
        .replace("{genotype}", &parent.to_json())
        .replace("{profile}", &serde_json::to_string_pretty(profile).expect("profile serializes"))
        .replace("{index}", &index.to_string());
    let params = CompletionParams { temperature: 0.0, max_tokens: 800, tag: "design".into() };
    let mut feedback = String::new();
    let mut last_error = String::new();
    for _ in 0..=DESIGN_REPAIRS {
        let prompt = format!("{base}{feedback}");
        let reply = match gateway.complete(&prompt, &params) {
            Ok((text, _)) => text,
            Err(e) => return Err(format!("gateway: {e}")),
        };
        let problem = match extract_json(&reply).map(MemoryGenotype::from_json) {
            None => "reply contains no JSON object".to_string(),
            Some(Err(e)) => e.to_string(),
            Some(Ok(g)) => {
                let violations = validate(&g);
                if !violations.is_empty() {
                    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
                } else if !is_new(&g, parent, taken) {
                    "architecture is unchanged or already proposed".to_string()
                } else {
                    return Ok(adopt(parent, g));
                }
            }
        };
        feedback =
            format!("\nyour previous reply was rejected: {problem}\nreply again with a corrected JSON object.\n");
        last_error = problem;
    }
    Err(last_error)
}

/// Produce `s` valid, distinct descendants of `parent`.
pub fn design(
    parent: &CandidateRecord,
    profile: &DefectProfile,
    s: usize,
    proposer: Proposer,
    seed: u64,
    gateway: &Gateway,
) -> Vec<Descendant> {
    let g = &parent.genotype;
    let seed = mix_seed(&[seed, parent.iteration as u64]);
    let mut out: Vec<Descendant> = Vec::with_capacity(s);
    for index in 0..s {
        let d = match proposer {
            Proposer::Deterministic => mutation_for(g, profile, seed, index as u64, &out),
            Proposer::Llm => match llm_proposal(g, profile, index, gateway, &out) {
                Ok(genotype) => Descendant { genotype, origin: "llm".into() },
                Err(reason) => {
                    let mut d = mutation_for(g, profile, seed, index as u64, &out);
                    d.origin = format!("fallback: {reason}");
                    d
                }
            },
        };
        out.push(d);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::preset;

    #[test]
    fn directed_reduction_prefers_k() {
        let g = preset("dilu").unwrap();
        let c = reduce_overhead(&g).unwrap();
        assert_eq!(c.retrieve.k, g.retrieve.k - 1);
        let mut floor = g.clone();
        floor.retrieve.k = 1;
        let c = reduce_overhead(&floor).unwrap();
        assert_eq!(c.retrieve.k, 1);
        assert!(c.encode.max_chars < floor.encode.max_chars);
    }

    #[test]
    fn json_extraction() {
        assert_eq!(extract_json("sure: {\"a\": 1} ok"), Some("{\"a\": 1}"));
        assert_eq!(extract_json("nothing"), None);
    }
}
