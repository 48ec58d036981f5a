use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{cosine, Embedder, EmbeddingVector};
use crate::memory::MemoryItem;

pub const VECTORS_FILE: &str = "vectors.bin";
pub const VECTOR_IDS_FILE: &str = "vectors.ids";
const VECTORS_MAGIC: &[u8; 4] = b"EVV1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    VectorIndex,
    AppendLog,
    KeyedLibrary,
}

impl StoreKind {
    pub const ALL: [StoreKind; 3] = [StoreKind::VectorIndex, StoreKind::AppendLog, StoreKind::KeyedLibrary];

    /// Whether items carry a stored embedding usable for semantic ranking.
    pub fn provides_embeddings(self) -> bool {
        matches!(self, StoreKind::VectorIndex | StoreKind::AppendLog)
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("library key {key:?} already held by item {existing}, cannot insert {incoming}")]
    KeyCollision { key: String, existing: String, incoming: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: corrupt vector file: {reason}")]
    CorruptVectors { path: PathBuf, reason: String },
}

#[derive(Debug, Clone)]
struct Entry {
    item: MemoryItem,
    embedding: Option<EmbeddingVector>,
}

/// One of the three storage media. Items keep insertion order.
#[derive(Debug, Clone)]
pub struct StoreBackend {
    kind: StoreKind,
    embedder: Embedder,
    entries: Vec<Entry>,
    keys: BTreeMap<String, String>,
}

impl StoreBackend {
    pub fn new(kind: StoreKind, embedder: Embedder) -> Self {
        StoreBackend { kind, embedder, entries: Vec::new(), keys: BTreeMap::new() }
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &MemoryItem> {
        self.entries.iter().map(|e| &e.item)
    }

    pub fn get(&self, id: &str) -> Option<&MemoryItem> {
        self.position(id).map(|i| &self.entries[i].item)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.position(id).is_some()
    }

    pub fn by_key(&self, key: &str) -> Option<&MemoryItem> {
        self.keys.get(key).and_then(|id| self.get(id))
    }

    /// Library key of an item: its explicit key, else its id.
    pub fn library_key(item: &MemoryItem) -> &str {
        item.key.as_deref().unwrap_or(&item.id)
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.item.id == id)
    }

    /// Insert or replace (same id) an item.
    pub fn upsert(&mut self, item: MemoryItem) -> Result<(), BackendError> {
        if self.kind == StoreKind::KeyedLibrary {
            let key = Self::library_key(&item);
            if let Some(existing) = self.keys.get(key) {
                if *existing != item.id {
                    return Err(BackendError::KeyCollision {
                        key: key.to_string(),
                        existing: existing.clone(),
                        incoming: item.id.clone(),
                    });
                }
            }
        }
        let embedding = self.kind.provides_embeddings().then(|| self.embedder.embed(&item.content));
        match self.position(&item.id) {
            Some(pos) => {
                if self.kind == StoreKind::KeyedLibrary {
                    let old_key = Self::library_key(&self.entries[pos].item).to_string();
                    self.keys.remove(&old_key);
                }
                self.index_key(&item);
                self.entries[pos] = Entry { item, embedding };
            }
            None => {
                self.index_key(&item);
                self.entries.push(Entry { item, embedding });
            }
        }
        Ok(())
    }

    fn index_key(&mut self, item: &MemoryItem) {
        if self.kind == StoreKind::KeyedLibrary {
            self.keys.insert(Self::library_key(item).to_string(), item.id.clone());
        }
    }

    pub fn remove(&mut self, id: &str) -> Option<MemoryItem> {
        let pos = self.position(id)?;
        let entry = self.entries.remove(pos);
        if self.kind == StoreKind::KeyedLibrary {
            self.keys.remove(Self::library_key(&entry.item));
        }
        Some(entry.item)
    }

    /// Mutate bookkeeping fields of a stored item. Content edits are not
    /// allowed through here since they would invalidate the embedding.
    pub fn update_counters(&mut self, id: &str, f: impl FnOnce(&mut u64, &mut u64)) -> bool {
        match self.position(id) {
            Some(pos) => {
                let item = &mut self.entries[pos].item;
                f(&mut item.hit_count, &mut item.success_assoc);
                true
            }
            None => false,
        }
    }

    /// Embedding of a stored item, computed on the fly for stores that keep none.
    pub fn embedding_of(&self, id: &str) -> Option<EmbeddingVector> {
        let entry = &self.entries[self.position(id)?];
        Some(entry.embedding.clone().unwrap_or_else(|| self.embedder.embed(&entry.item.content)))
    }

    /// Exact top-k by cosine similarity over every stored item.
    ///
    /// Ties fall back to smaller `created_at_step`, then lexicographic id, so
    /// the order is total and `top_k(k)` is always a prefix of `top_k(k + 1)`.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Vec<(&MemoryItem, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut scored = self.scored(query);
        sort_scored(&mut scored);
        scored.truncate(k);
        scored
    }

    /// Every item with its cosine score against `query`, in insertion order.
    pub fn scored(&self, query: &EmbeddingVector) -> Vec<(&MemoryItem, f64)> {
        self.entries
            .iter()
            .map(|e| {
                let score = match &e.embedding {
                    Some(v) => cosine(query, v),
                    None => cosine(query, &self.embedder.embed(&e.item.content)),
                };
                // Query vectors come from the same embedder; a mismatch means
                // a foreign vector was passed in, which scores as unrelated.
                (&e.item, score.unwrap_or(0.0))
            })
            .collect()
    }

    /// Persist stored embeddings as `vectors.bin` plus the id manifest.
    /// Stores without embeddings write nothing.
    pub fn write_vectors(&self, dir: &Path) -> Result<(), BackendError> {
        if !self.kind.provides_embeddings() {
            return Ok(());
        }
        let bin_path = dir.join(VECTORS_FILE);
        let mut bytes = Vec::with_capacity(16 + self.entries.len() * self.embedder.dim * 8);
        bytes.extend_from_slice(VECTORS_MAGIC);
        bytes.extend_from_slice(&(self.embedder.dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        let mut ids = String::new();
        for e in &self.entries {
            let v = e.embedding.as_ref().expect("embedding stores keep one vector per item");
            for x in v.values() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            ids.push_str(&e.item.id);
            ids.push('\n');
        }
        write_file(&bin_path, &bytes)?;
        write_file(&dir.join(VECTOR_IDS_FILE), ids.as_bytes())
    }

    /// Check persisted vectors against re-embedding the stored text.
    /// Returns the ids whose persisted vector differs bit-for-bit.
    pub fn verify_vectors(&self, dir: &Path) -> Result<Vec<String>, BackendError> {
        let persisted = read_vectors(dir)?;
        let mut mismatched = Vec::new();
        for (id, vector) in persisted {
            match self.get(&id) {
                Some(item) if self.embedder.embed(&item.content) == vector => {}
                _ => mismatched.push(id),
            }
        }
        Ok(mismatched)
    }
}

/// Sort descending by score with the deterministic tie-break.
pub(crate) fn sort_scored(scored: &mut [(&MemoryItem, f64)]) {
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1).then(a.0.created_at_step.cmp(&b.0.created_at_step)).then_with(|| a.0.id.cmp(&b.0.id))
    });
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), BackendError> {
    let io_err = |source| BackendError::Io { path: path.to_path_buf(), source };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)
}

/// Read `vectors.bin` and its manifest from `dir`.
pub fn read_vectors(dir: &Path) -> Result<Vec<(String, EmbeddingVector)>, BackendError> {
    let bin_path = dir.join(VECTORS_FILE);
    let ids_path = dir.join(VECTOR_IDS_FILE);
    let corrupt = |reason: &str| BackendError::CorruptVectors { path: bin_path.clone(), reason: reason.into() };
    let bytes = fs::read(&bin_path).map_err(|source| BackendError::Io { path: bin_path.clone(), source })?;
    let ids_text =
        fs::read_to_string(&ids_path).map_err(|source| BackendError::Io { path: ids_path.clone(), source })?;
    if bytes.len() < 16 || &bytes[..4] != VECTORS_MAGIC {
        return Err(corrupt("bad header"));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if dim == 0 || body.len() != dim * count * 8 {
        return Err(corrupt("length does not match header"));
    }
    let ids: Vec<&str> = ids_text.lines().collect();
    if ids.len() != count {
        return Err(corrupt("id manifest length does not match vector count"));
    }
    Ok(ids
        .into_iter()
        .zip(body.chunks_exact(dim * 8))
        .map(|(id, chunk)| {
            let values = chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            (id.to_string(), EmbeddingVector::from_raw(values))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::MemoryKind;

    fn item(id: &str, content: &str, step: u64) -> MemoryItem {
        MemoryItem {
            id: id.into(),
            kind: MemoryKind::Tip,
            content: content.into(),
            source_task_id: "t".into(),
            created_at_step: step,
            confidence: 1.0,
            hit_count: 0,
            success_assoc: 0,
            source_success: true,
            key: None,
            parents: vec![],
        }
    }

    #[test]
    fn empty_and_zero_budget() {
        let b = StoreBackend::new(StoreKind::VectorIndex, Embedder::default());
        let q = Embedder::default().embed("anything");
        assert!(b.top_k(&q, 5).is_empty());
        let mut b = b;
        b.upsert(item("a", "alpha", 1)).unwrap();
        assert!(b.top_k(&q, 0).is_empty());
        assert_eq!(b.top_k(&q, 10).len(), 1);
    }

    #[test]
    fn upsert_replaces_same_id() {
        let mut b = StoreBackend::new(StoreKind::VectorIndex, Embedder::default());
        b.upsert(item("a", "alpha", 1)).unwrap();
        b.upsert(item("b", "beta", 2)).unwrap();
        b.upsert(item("a", "gamma", 1)).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.get("a").unwrap().content, "gamma");
        assert_eq!(b.items().next().unwrap().id, "a");
        let e = b.embedding_of("a").unwrap();
        assert_eq!(e, Embedder::default().embed("gamma"));
    }

    #[test]
    fn keyed_library_rejects_key_collisions() {
        let mut b = StoreBackend::new(StoreKind::KeyedLibrary, Embedder::default());
        let mut x = item("x", "fn one", 1);
        x.key = Some("lookup".into());
        let mut y = item("y", "fn two", 2);
        y.key = Some("lookup".into());
        b.upsert(x.clone()).unwrap();
        assert!(matches!(b.upsert(y), Err(BackendError::KeyCollision { .. })));
        // Same id, same key is a replacement.
        x.content = "fn one v2".into();
        b.upsert(x).unwrap();
        assert_eq!(b.by_key("lookup").unwrap().content, "fn one v2");
        b.remove("x");
        assert!(b.by_key("lookup").is_none());
    }

    #[test]
    fn ties_break_by_step_then_id() {
        let mut b = StoreBackend::new(StoreKind::AppendLog, Embedder::default());
        b.upsert(item("c", "same text", 2)).unwrap();
        b.upsert(item("b", "same text", 1)).unwrap();
        b.upsert(item("a", "same text", 2)).unwrap();
        let q = Embedder::default().embed("same text");
        let ids: Vec<_> = b.top_k(&q, 3).iter().map(|(i, _)| i.id.clone()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
    }

    #[test]
    fn vectors_round_trip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = StoreBackend::new(StoreKind::VectorIndex, Embedder::default());
        b.upsert(item("a", "alpha beta", 1)).unwrap();
        b.upsert(item("b", "gamma delta", 2)).unwrap();
        b.write_vectors(dir.path()).unwrap();
        let back = read_vectors(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].0, "a");
        assert_eq!(back[0].1, Embedder::default().embed("alpha beta"));
        assert!(b.verify_vectors(dir.path()).unwrap().is_empty());

        fs::write(dir.path().join(VECTORS_FILE), b"junk").unwrap();
        assert!(matches!(read_vectors(dir.path()), Err(BackendError::CorruptVectors { .. })));
    }
}
