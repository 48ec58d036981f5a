use std::fmt;

use serde::{Deserialize, Serialize};

use super::{MemoryGenotype, RetrieveStrategy, StoreKind, SCHEMA_VERSION};

/// One broken rule, named by the dotted field path it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Check every range and cross-field rule. An empty result means valid.
pub fn validate(g: &MemoryGenotype) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &str, message: String| out.push(Violation { field: field.into(), message });

    if g.schema_version != SCHEMA_VERSION {
        push("schema_version", format!("must be {SCHEMA_VERSION}, got {}", g.schema_version));
    }
    if g.name.trim().is_empty() {
        push("name", "must be non-empty".into());
    }

    let e = &g.encode;
    if e.max_items_per_trajectory < 1 {
        push("encode.max_items_per_trajectory", format!("must be >= 1, got {}", e.max_items_per_trajectory));
    }
    if e.max_chars < 1 {
        push("encode.max_chars", format!("must be >= 1, got {}", e.max_chars));
    }
    if e.companion == Some(e.strategy) {
        push("encode.companion", "must differ from encode.strategy".into());
    }

    if let Some(cap) = g.store.capacity {
        if cap < 1 {
            push("store.capacity", format!("must be >= 1 or unlimited, got {cap}"));
        }
    }

    let r = &g.retrieve;
    if r.k < 0 {
        push("retrieve.k", format!("must be >= 0, got {}", r.k));
    }
    if !(-1.0..=1.0).contains(&r.min_score) {
        push("retrieve.min_score", format!("must be in [-1, 1], got {}", r.min_score));
    }
    if let Some(stages) = &r.stage_filter {
        if stages.is_empty() {
            push("retrieve.stage_filter", "must name at least one stage when present".into());
        }
    }
    if r.strategy == RetrieveStrategy::FunctionMatch && g.store.strategy != StoreKind::KeyedLibrary {
        push("retrieve.strategy", format!("function_match requires store keyed_library, got {:?}", g.store.strategy));
    }
    if r.strategy.needs_embeddings() && !g.store.strategy.provides_embeddings() {
        push(
            "retrieve.strategy",
            format!("{:?} requires a store that provides embeddings, got {:?}", r.strategy, g.store.strategy),
        );
    }

    let m = &g.manage;
    if m.trigger_every < 1 {
        push("manage.trigger_every", format!("must be >= 1, got {}", m.trigger_every));
    }
    if !(-1.0..=1.0).contains(&m.dedup_threshold) {
        push("manage.dedup_threshold", format!("must be in [-1, 1], got {}", m.dedup_threshold));
    }
    if m.capacity < 1 {
        push("manage.capacity", format!("must be >= 1, got {}", m.capacity));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{preset, preset_names};

    #[test]
    fn every_preset_validates() {
        for name in preset_names() {
            assert!(validate(&preset(name).unwrap()).is_empty(), "{name}");
        }
    }

    #[test]
    fn function_match_needs_keyed_library() {
        let mut g = preset("dilu").unwrap();
        g.retrieve.strategy = RetrieveStrategy::FunctionMatch;
        let v = validate(&g);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "retrieve.strategy");
        assert!(v[0].message.contains("keyed_library"));
    }

    #[test]
    fn semantic_needs_embeddings() {
        let mut g = preset("skillweaver").unwrap();
        g.retrieve.strategy = RetrieveStrategy::SemanticTopK;
        assert_eq!(validate(&g).len(), 1);
    }

    #[test]
    fn range_violations() {
        let mut g = preset("dilu").unwrap();
        g.retrieve.k = -1;
        g.retrieve.min_score = 1.5;
        g.manage.trigger_every = 0;
        g.encode.max_items_per_trajectory = 0;
        g.store.capacity = Some(0);
        g.name.clear();
        let fields: Vec<_> = validate(&g).into_iter().map(|v| v.field).collect();
        for f in [
            "retrieve.k",
            "retrieve.min_score",
            "manage.trigger_every",
            "encode.max_items_per_trajectory",
            "store.capacity",
            "name",
        ] {
            assert!(fields.iter().any(|x| x == f), "missing {f} in {fields:?}");
        }
    }
}
