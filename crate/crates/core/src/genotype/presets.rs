//! Genotypes for established self-improving memory designs.
//!
//! Graph and hybrid stores (G-Memory, Agent-KB) have no direct counterpart in
//! the strategy space; those presets use a vector index with the matching
//! encode and manage strategies.

use super::{
    EncodeStage, EncodeStrategy as E, GenotypeError, ManageStage, ManageStrategy as M, MemoryGenotype, RetrieveStage,
    RetrieveStrategy as R, StoreKind as U, StoreStage, SuccessFilter, SCHEMA_VERSION,
};

/// Registry of preset names with the design each one reproduces.
pub const PRESETS: &[(&str, &str)] = &[
    ("voyager", "I. Voyager: traj. & tips / vector DB / semantic search / no management"),
    ("expel", "II. ExpeL: traj. & insights / vector DB / contrastive comparison / no management"),
    ("generative", "III. Generative Agents: traj. & insights / vector DB / semantic search / no management"),
    ("dilu", "IV. DiLu: trajectories / vector DB / semantic search / no management"),
    ("awm", "V. AWM: workflows / vector DB / semantic search / no management"),
    ("mobile_e", "VI. Mobile-E: tips & shortcuts / vector DB / semantic search / no management"),
    ("cheatsheet", "VII. Dynamic Cheatsheet: tips & shortcuts / JSON log / semantic search / no management"),
    ("skillweaver", "VIII. SkillWeaver: APIs / tool library / function matching / skill pruning"),
    (
        "g_memory",
        "IX. G-Memory (approx.): tips & workflow / vector DB in place of graph / semantic search / consolidation",
    ),
    (
        "agent_kb",
        "X. Agent-KB (approx.): tips & workflow / vector DB in place of hybrid DB / semantic search / deduplication",
    ),
    ("memp", "XI. Memp: tips & workflow / JSON log / semantic search / failure-driven pruning"),
    ("evolver", "XII. EvolveR: tips & workflow / JSON log / contrastive comparison / update & pruning"),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

struct Layout {
    encode: E,
    companion: Option<E>,
    filter: SuccessFilter,
    store: U,
    retrieve: R,
    manage: M,
}

fn build(name: &str, s: Layout) -> MemoryGenotype {
    MemoryGenotype {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        lineage: Vec::new(),
        encode: EncodeStage {
            strategy: s.encode,
            companion: s.companion,
            success_filter: s.filter,
            max_items_per_trajectory: 3,
            max_chars: 1200,
        },
        store: StoreStage { strategy: s.store, capacity: None },
        retrieve: RetrieveStage { strategy: s.retrieve, k: 3, min_score: 0.0, stage_filter: None },
        manage: ManageStage { strategy: s.manage, trigger_every: 10, dedup_threshold: 0.95, capacity: 64 },
    }
}

/// Look up a preset genotype by name.
pub fn preset(name: &str) -> Result<MemoryGenotype, GenotypeError> {
    use SuccessFilter::*;
    let layout = |encode, companion, filter, store, retrieve, manage| Layout {
        encode,
        companion,
        filter,
        store,
        retrieve,
        manage,
    };
    let s = match name {
        "voyager" => layout(E::Verbatim, Some(E::TipsShortcuts), All, U::VectorIndex, R::SemanticTopK, M::None),
        "expel" => layout(E::Insight, Some(E::Verbatim), Contrastive, U::VectorIndex, R::ContrastivePair, M::None),
        "generative" => layout(E::Verbatim, Some(E::Insight), All, U::VectorIndex, R::SemanticTopK, M::None),
        "dilu" => layout(E::Verbatim, None, All, U::VectorIndex, R::SemanticTopK, M::None),
        "awm" => layout(E::Workflow, None, SuccessOnly, U::VectorIndex, R::SemanticTopK, M::None),
        "mobile_e" => layout(E::TipsShortcuts, None, All, U::VectorIndex, R::SemanticTopK, M::None),
        "cheatsheet" => layout(E::TipsShortcuts, None, All, U::AppendLog, R::SemanticTopK, M::None),
        "skillweaver" => {
            layout(E::ToolSynthesis, None, SuccessOnly, U::KeyedLibrary, R::FunctionMatch, M::PruneByScore)
        }
        "g_memory" => layout(E::TipsShortcuts, Some(E::Workflow), All, U::VectorIndex, R::SemanticTopK, M::Consolidate),
        "agent_kb" => layout(E::TipsShortcuts, Some(E::Workflow), All, U::VectorIndex, R::SemanticTopK, M::Dedup),
        "memp" => layout(E::TipsShortcuts, Some(E::Workflow), All, U::AppendLog, R::SemanticTopK, M::PruneByScore),
        "evolver" => {
            layout(E::TipsShortcuts, Some(E::Workflow), All, U::AppendLog, R::ContrastivePair, M::PruneByScore)
        }
        _ => {
            return Err(GenotypeError::UnknownPreset {
                name: name.to_string(),
                available: preset_names().map(String::from).collect(),
            })
        }
    };
    Ok(build(name, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stages(name: &str) -> (E, U, R, M) {
        let g = preset(name).unwrap();
        (g.encode.strategy, g.store.strategy, g.retrieve.strategy, g.manage.strategy)
    }

    #[test]
    fn table_rows() {
        assert_eq!(stages("voyager"), (E::Verbatim, U::VectorIndex, R::SemanticTopK, M::None));
        assert_eq!(preset("voyager").unwrap().encode.companion, Some(E::TipsShortcuts));
        assert_eq!(stages("expel"), (E::Insight, U::VectorIndex, R::ContrastivePair, M::None));
        assert_eq!(preset("expel").unwrap().encode.success_filter, SuccessFilter::Contrastive);
        assert_eq!(stages("skillweaver"), (E::ToolSynthesis, U::KeyedLibrary, R::FunctionMatch, M::PruneByScore));
        assert_eq!(stages("dilu"), (E::Verbatim, U::VectorIndex, R::SemanticTopK, M::None));
        assert_eq!(stages("awm").0, E::Workflow);
        assert_eq!(stages("cheatsheet").1, U::AppendLog);
        assert_eq!(stages("evolver").2, R::ContrastivePair);
    }

    #[test]
    fn unknown_preset_lists_registry() {
        let err = preset("nope").unwrap_err().to_string();
        assert!(err.contains("voyager") && err.contains("evolver"), "{err}");
    }

    #[test]
    fn registry_is_complete() {
        for name in preset_names() {
            assert_eq!(preset(name).unwrap().name, name);
        }
        assert_eq!(PRESETS.len(), 12);
    }
}
