//! Manage stage: deduplication, utility pruning, and consolidation.

use crate::embed::{cosine, StoreBackend};

use super::MemoryItem;

/// Smoothed success rate of an item when it is provided.
///
/// `(success_assoc + 1) / (hit_count + 2)`: fresh items start at 0.5, items
/// that keep being provided to failing episodes sink toward 0.
pub fn utility(item: &MemoryItem) -> f64 {
    (item.success_assoc as f64 + 1.0) / (item.hit_count as f64 + 2.0)
}

fn embeddings(store: &StoreBackend) -> Vec<(String, crate::embed::EmbeddingVector)> {
    store.items().map(|i| (i.id.clone(), store.embedding_of(&i.id).expect("id comes from the store"))).collect()
}

/// Remove every item whose similarity to an earlier surviving item exceeds
/// `threshold`. Earlier items win. Returns the number removed.
pub(crate) fn dedup(store: &mut StoreBackend, threshold: f64) -> usize {
    let mut kept: Vec<crate::embed::EmbeddingVector> = Vec::new();
    let mut doomed = Vec::new();
    for (id, v) in embeddings(store) {
        if kept.iter().any(|k| cosine(k, &v).unwrap_or(0.0) > threshold) {
            doomed.push(id);
        } else {
            kept.push(v);
        }
    }
    for id in &doomed {
        store.remove(id);
    }
    doomed.len()
}

/// Evict lowest-utility items until at most `capacity` remain. Ties evict
/// older items first, then smaller ids.
pub(crate) fn prune(store: &mut StoreBackend, capacity: usize) -> usize {
    if store.len() <= capacity {
        return 0;
    }
    let mut ranked: Vec<&MemoryItem> = store.items().collect();
    ranked.sort_by(|a, b| {
        utility(a).total_cmp(&utility(b)).then(a.created_at_step.cmp(&b.created_at_step)).then_with(|| a.id.cmp(&b.id))
    });
    let doomed: Vec<String> = ranked[..store.len() - capacity].iter().map(|i| i.id.clone()).collect();
    for id in &doomed {
        store.remove(id);
    }
    doomed.len()
}

/// Merge clusters of similar items into single items that record their
/// parents. Clusters are grown greedily in insertion order around a seed
/// item: every later unclaimed item with similarity at least `threshold`
/// joins. Returns the number of source items consumed.
pub(crate) fn consolidate(store: &mut StoreBackend, threshold: f64, mut mint_id: impl FnMut() -> String) -> usize {
    let vectors = embeddings(store);
    let mut claimed = vec![false; vectors.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..vectors.len() {
        if claimed[i] {
            continue;
        }
        claimed[i] = true;
        let mut cluster = vec![i];
        for j in i + 1..vectors.len() {
            if !claimed[j] && cosine(&vectors[i].1, &vectors[j].1).unwrap_or(0.0) >= threshold {
                claimed[j] = true;
                cluster.push(j);
            }
        }
        if cluster.len() > 1 {
            clusters.push(cluster);
        }
    }
    let mut consumed = 0;
    for cluster in clusters {
        let members: Vec<MemoryItem> =
            cluster.iter().map(|&i| store.get(&vectors[i].0).cloned().expect("clustered ids are stored")).collect();
        let mut content: Vec<&str> = Vec::new();
        for m in &members {
            if !content.contains(&m.content.as_str()) {
                content.push(&m.content);
            }
        }
        let first = &members[0];
        let merged = MemoryItem {
            id: mint_id(),
            kind: first.kind,
            content: content.join("\n"),
            source_task_id: first.source_task_id.clone(),
            created_at_step: members.iter().map(|m| m.created_at_step).max().unwrap_or(0),
            confidence: members.iter().map(|m| m.confidence).sum::<f64>() / members.len() as f64,
            hit_count: members.iter().map(|m| m.hit_count).sum(),
            success_assoc: members.iter().map(|m| m.success_assoc).sum(),
            source_success: members.iter().any(|m| m.source_success),
            key: first.key.clone(),
            parents: members.iter().map(|m| m.id.clone()).collect(),
        };
        for m in &members {
            store.remove(&m.id);
        }
        store.upsert(merged).expect("members' keys were released before insertion");
        consumed += members.len();
    }
    consumed
}
