//! Single-site mutation over the strategy space.
//!
//! Every mutation changes exactly one stage field or parameter, then repairs
//! the one coupled field a cross-field rule may require (store kind versus
//! retrieve strategy, companion versus primary encoder). Outputs always
//! validate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EncodeStrategy, ManageStrategy, MemoryGenotype, RetrieveStrategy, StoreKind, SuccessFilter};
use crate::hash::{fnv1a64, mix_seed};

/// Every mutable field of a genotype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationSite {
    EncodeStrategy,
    EncodeCompanion,
    SuccessFilter,
    MaxItemsPerTrajectory,
    MaxChars,
    StoreStrategy,
    StoreCapacity,
    RetrieveStrategy,
    RetrieveK,
    MinScore,
    ManageStrategy,
    TriggerEvery,
    DedupThreshold,
    ManageCapacity,
}

impl MutationSite {
    pub const ALL: [MutationSite; 14] = [
        MutationSite::EncodeStrategy,
        MutationSite::EncodeCompanion,
        MutationSite::SuccessFilter,
        MutationSite::MaxItemsPerTrajectory,
        MutationSite::MaxChars,
        MutationSite::StoreStrategy,
        MutationSite::StoreCapacity,
        MutationSite::RetrieveStrategy,
        MutationSite::RetrieveK,
        MutationSite::MinScore,
        MutationSite::ManageStrategy,
        MutationSite::TriggerEvery,
        MutationSite::DedupThreshold,
        MutationSite::ManageCapacity,
    ];

    /// The stage this site belongs to.
    pub fn stage(self) -> &'static str {
        use MutationSite::*;
        match self {
            EncodeStrategy | EncodeCompanion | SuccessFilter | MaxItemsPerTrajectory | MaxChars => "encode",
            StoreStrategy | StoreCapacity => "store",
            RetrieveStrategy | RetrieveK | MinScore => "retrieve",
            ManageStrategy | TriggerEvery | DedupThreshold | ManageCapacity => "manage",
        }
    }
}

const MAX_ITEMS: [i64; 6] = [1, 2, 3, 4, 5, 6];
pub(crate) const MAX_CHARS: [i64; 6] = [200, 400, 800, 1200, 2000, 4000];
const STORE_CAPACITY: [Option<i64>; 6] = [None, Some(16), Some(32), Some(64), Some(128), Some(256)];
pub(crate) const RETRIEVE_K: [i64; 8] = [1, 2, 3, 4, 5, 6, 7, 8];
const MIN_SCORE: [f64; 6] = [-1.0, 0.0, 0.1, 0.2, 0.3, 0.5];
const TRIGGER_EVERY: [i64; 5] = [1, 5, 10, 20, 40];
const DEDUP_THRESHOLD: [f64; 5] = [0.8, 0.85, 0.9, 0.95, 0.98];
const MANAGE_CAPACITY: [i64; 5] = [16, 32, 64, 128, 256];

fn rng_for(g: &MemoryGenotype, seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, index, fnv1a64(g.architecture_hash().as_bytes())]))
}

/// Pick uniformly among `options` that differ from `current`.
fn pick_other<T: Copy + PartialEq>(rng: &mut impl Rng, options: &[T], current: T) -> T {
    let others: Vec<T> = options.iter().copied().filter(|o| *o != current).collect();
    others[rng.random_range(0..others.len())]
}

/// Deterministic single-site mutation, uniform over sites.
pub fn mutate(g: &MemoryGenotype, seed: u64, descendant_index: u64) -> MemoryGenotype {
    let weights: Vec<(MutationSite, f64)> = MutationSite::ALL.iter().map(|s| (*s, 1.0)).collect();
    mutate_weighted(g, seed, descendant_index, &weights)
}

/// Deterministic single-site mutation with a site drawn from `weights`.
pub fn mutate_weighted(
    g: &MemoryGenotype,
    seed: u64,
    descendant_index: u64,
    weights: &[(MutationSite, f64)],
) -> MemoryGenotype {
    let mut rng = rng_for(g, seed, descendant_index);
    let total: f64 = weights.iter().map(|(_, w)| w.max(0.0)).sum();
    let site = if total > 0.0 {
        let mut roll = rng.random::<f64>() * total;
        let mut chosen = weights.last().map(|(s, _)| *s).unwrap_or(MutationSite::RetrieveK);
        for (s, w) in weights {
            let w = w.max(0.0);
            if roll < w {
                chosen = *s;
                break;
            }
            roll -= w;
        }
        chosen
    } else {
        MutationSite::ALL[rng.random_range(0..MutationSite::ALL.len())]
    };
    mutate_site(g, site, &mut rng)
}

/// Change `site` to a different value, repair coupled fields, and record lineage.
pub fn mutate_site(g: &MemoryGenotype, site: MutationSite, rng: &mut impl Rng) -> MemoryGenotype {
    let mut child = g.clone();
    use MutationSite as S;
    match site {
        S::EncodeStrategy => {
            child.encode.strategy = pick_other(rng, &EncodeStrategy::ALL, g.encode.strategy);
            if child.encode.companion == Some(child.encode.strategy) {
                child.encode.companion = None;
            }
        }
        S::EncodeCompanion => {
            let mut options: Vec<Option<EncodeStrategy>> = vec![None];
            options.extend(EncodeStrategy::ALL.iter().filter(|e| **e != g.encode.strategy).map(|e| Some(*e)));
            child.encode.companion = pick_other(rng, &options, g.encode.companion);
        }
        S::SuccessFilter => child.encode.success_filter = pick_other(rng, &SuccessFilter::ALL, g.encode.success_filter),
        S::MaxItemsPerTrajectory => {
            child.encode.max_items_per_trajectory = pick_other(rng, &MAX_ITEMS, g.encode.max_items_per_trajectory)
        }
        S::MaxChars => child.encode.max_chars = pick_other(rng, &MAX_CHARS, g.encode.max_chars),
        S::StoreStrategy => {
            child.store.strategy = pick_other(rng, &StoreKind::ALL, g.store.strategy);
            let r = child.retrieve.strategy;
            if r.needs_embeddings() && !child.store.strategy.provides_embeddings() {
                child.retrieve.strategy = RetrieveStrategy::FunctionMatch;
            } else if r == RetrieveStrategy::FunctionMatch && child.store.strategy != StoreKind::KeyedLibrary {
                child.retrieve.strategy = RetrieveStrategy::SemanticTopK;
            }
        }
        S::StoreCapacity => child.store.capacity = pick_other(rng, &STORE_CAPACITY, g.store.capacity),
        S::RetrieveStrategy => {
            child.retrieve.strategy = pick_other(rng, &RetrieveStrategy::ALL, g.retrieve.strategy);
            let r = child.retrieve.strategy;
            if r == RetrieveStrategy::FunctionMatch && child.store.strategy != StoreKind::KeyedLibrary {
                child.store.strategy = StoreKind::KeyedLibrary;
            } else if r.needs_embeddings() && !child.store.strategy.provides_embeddings() {
                child.store.strategy = StoreKind::VectorIndex;
            }
        }
        S::RetrieveK => child.retrieve.k = pick_other(rng, &RETRIEVE_K, g.retrieve.k),
        S::MinScore => child.retrieve.min_score = pick_other(rng, &MIN_SCORE, g.retrieve.min_score),
        S::ManageStrategy => child.manage.strategy = pick_other(rng, &ManageStrategy::ALL, g.manage.strategy),
        S::TriggerEvery => child.manage.trigger_every = pick_other(rng, &TRIGGER_EVERY, g.manage.trigger_every),
        S::DedupThreshold => child.manage.dedup_threshold = pick_other(rng, &DEDUP_THRESHOLD, g.manage.dedup_threshold),
        S::ManageCapacity => child.manage.capacity = pick_other(rng, &MANAGE_CAPACITY, g.manage.capacity),
    }
    adopt(g, child)
}

/// Give a modified copy of `parent` a lineage entry and a derived name.
pub fn adopt(parent: &MemoryGenotype, mut child: MemoryGenotype) -> MemoryGenotype {
    child.lineage = parent.lineage.clone();
    child.lineage.push(parent.name.clone());
    let root = parent.root_name().split('~').next().unwrap_or("g").to_string();
    child.name = format!("{root}~{}", &child.architecture_hash()[..8]);
    child
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{preset, preset_names, validate};

    #[test]
    fn deterministic() {
        let g = preset("dilu").unwrap();
        assert_eq!(mutate(&g, 7, 0), mutate(&g, 7, 0));
    }

    #[test]
    fn appends_lineage_and_renames() {
        let g = preset("dilu").unwrap();
        let c = mutate(&g, 7, 0);
        assert_eq!(c.lineage, vec!["dilu".to_string()]);
        assert!(c.name.starts_with("dilu~"));
        let gc = mutate(&c, 7, 1);
        assert_eq!(gc.lineage, vec!["dilu".to_string(), c.name.clone()]);
        assert!(gc.name.starts_with("dilu~"));
    }

    #[test]
    fn every_site_on_every_preset_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for name in preset_names() {
            let g = preset(name).unwrap();
            for site in MutationSite::ALL {
                let c = mutate_site(&g, site, &mut rng);
                assert!(validate(&c).is_empty(), "{name} {site:?}: {:?}", validate(&c));
                assert!(!c.same_architecture(&g), "{name} {site:?} did not change");
            }
        }
    }
}
