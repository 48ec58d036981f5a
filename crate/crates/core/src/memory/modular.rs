//! The genotype-driven provider.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::embed::{sort_scored, Embedder, StoreBackend, StoreKind};
use crate::gateway::Gateway;
use crate::genotype::{ManageStrategy, MemoryGenotype, RetrieveStrategy};
use crate::markers::topic_words;

use super::encode::{describe, encode};
use super::{
    manage, ManageReport, MemoryError, MemoryItem, MemoryProvider, MemoryRequest, MemoryResponse, TrajectoryData,
    DEFAULT_SUCCESS_THRESHOLD,
};

pub const MEMORY_FILE: &str = "memory.jsonl";
pub const MANAGE_LOG: &str = "manage.log";

/// Provider whose four stages run the strategies a genotype names.
#[derive(Debug, Clone)]
pub struct ModularProvider {
    genotype: MemoryGenotype,
    gateway: Gateway,
    seed: u64,
    store: StoreBackend,
    storage: Option<PathBuf>,
    initialized: bool,
    ingested: u64,
    minted: u64,
    /// Latest trajectory per (family, outcome), for contrastive encoding.
    recent: BTreeMap<(String, bool), TrajectoryData>,
}

impl ModularProvider {
    pub fn new(genotype: MemoryGenotype, gateway: Gateway, seed: u64) -> Self {
        let store = StoreBackend::new(genotype.store.strategy, Embedder::default());
        ModularProvider {
            genotype,
            gateway,
            seed,
            store,
            storage: None,
            initialized: false,
            ingested: 0,
            minted: 0,
            recent: BTreeMap::new(),
        }
    }

    /// Persist to and load from `dir`.
    pub fn with_storage(mut self, dir: impl Into<PathBuf>) -> Self {
        self.storage = Some(dir.into());
        self
    }

    pub fn genotype(&self) -> &MemoryGenotype {
        &self.genotype
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn store(&self) -> &StoreBackend {
        &self.store
    }

    pub fn storage(&self) -> Option<&Path> {
        self.storage.as_deref()
    }

    fn load(&mut self, dir: &Path) -> Result<(), MemoryError> {
        let path = dir.join(MEMORY_FILE);
        let init_err = |reason: String| MemoryError::Init { path: path.clone(), reason };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(init_err(e.to_string())),
        };
        let mut store = StoreBackend::new(self.genotype.store.strategy, Embedder::default());
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let item: MemoryItem = serde_json::from_str(line).map_err(|e| init_err(format!("line {}: {e}", n + 1)))?;
            item.check().map_err(|e| init_err(format!("line {}: {e}", n + 1)))?;
            if store.contains(&item.id) {
                return Err(init_err(format!("line {}: duplicate id {}", n + 1, item.id)));
            }
            store.upsert(item).map_err(|e| init_err(format!("line {}: {e}", n + 1)))?;
        }
        self.ingested = store.items().map(|i| i.created_at_step).max().unwrap_or(0);
        self.minted = store.len() as u64;
        self.store = store;
        Ok(())
    }

    fn mint_id(ingested: u64, minted: &mut u64, prefix: char) -> String {
        *minted += 1;
        format!("{prefix}{ingested:06}-{minted:04}")
    }

    fn ingest(&mut self, t: &TrajectoryData) -> Result<Vec<MemoryItem>, String> {
        t.validate(DEFAULT_SUCCESS_THRESHOLD).map_err(|e| e.to_string())?;
        let contrast = self.recent.get(&(t.family_id.clone(), !t.success));
        let drafts =
            encode(&self.genotype.encode, t, contrast, &self.gateway).map_err(|e| format!("encode failed: {e}"))?;

        // Stage on a copy so a failure leaves the live store untouched.
        let step = self.ingested + 1;
        let mut staged = self.store.clone();
        let mut minted = self.minted;
        let mut added = Vec::new();
        for d in drafts {
            // A keyed library refreshes an existing entry under the same key.
            let reuse = match (&d.key, staged.kind()) {
                (Some(k), StoreKind::KeyedLibrary) => staged.by_key(k).cloned(),
                _ => None,
            };
            let item = MemoryItem {
                id: match &reuse {
                    Some(old) => old.id.clone(),
                    None => Self::mint_id(step, &mut minted, 'm'),
                },
                kind: d.kind,
                content: d.content,
                source_task_id: t.task_id.clone(),
                created_at_step: step,
                confidence: d.confidence,
                hit_count: reuse.as_ref().map_or(0, |o| o.hit_count),
                success_assoc: reuse.as_ref().map_or(0, |o| o.success_assoc),
                source_success: t.success,
                key: d.key,
                parents: vec![],
            };
            item.check().map_err(|e| e.to_string())?;
            staged.upsert(item.clone()).map_err(|e| e.to_string())?;
            added.push(item);
        }
        if let Some(cap) = self.genotype.store.capacity {
            let cap = usize::try_from(cap).unwrap_or(usize::MAX);
            while staged.len() > cap {
                let oldest = staged
                    .items()
                    .min_by(|a, b| a.created_at_step.cmp(&b.created_at_step).then_with(|| a.id.cmp(&b.id)))
                    .map(|i| i.id.clone())
                    .expect("store is non-empty");
                staged.remove(&oldest);
            }
        }
        self.store = staged;
        self.minted = minted;
        self.ingested = step;
        self.recent.insert((t.family_id.clone(), t.success), t.clone());
        Ok(added)
    }

    fn rank(&self, request: &MemoryRequest, limit: usize) -> Vec<(String, f64)> {
        let r = &self.genotype.retrieve;
        let embedder = self.store.embedder();
        let owned = |v: Vec<(&MemoryItem, f64)>| v.into_iter().map(|(i, s)| (i.id.clone(), s)).collect::<Vec<_>>();
        match r.strategy {
            RetrieveStrategy::SemanticTopK => {
                let q = embedder.embed(&request.query);
                let mut hits = self.store.top_k(&q, limit);
                hits.retain(|(_, s)| *s >= r.min_score);
                owned(hits)
            }
            RetrieveStrategy::ReturnAll => {
                let q = embedder.embed(&request.query);
                owned(self.store.top_k(&q, limit))
            }
            RetrieveStrategy::ContrastivePair => {
                let q = embedder.embed(&request.query);
                let mut all = self.store.scored(&q);
                all.retain(|(_, s)| *s >= r.min_score);
                sort_scored(&mut all);
                let (good, bad): (Vec<_>, Vec<_>) = all.into_iter().partition(|(i, _)| i.source_success);
                // Balance the two sides, letting either fill the other's gap.
                let want_bad = (limit / 2).min(bad.len());
                let want_good = (limit - want_bad).min(good.len());
                let want_bad = (limit - want_good).min(bad.len());
                let mut picked: Vec<_> =
                    good.into_iter().take(want_good).chain(bad.into_iter().take(want_bad)).collect();
                sort_scored(&mut picked);
                owned(picked)
            }
            RetrieveStrategy::FunctionMatch => {
                let query: BTreeSet<String> = topic_words(&request.query).into_iter().collect();
                let mut scored: Vec<(&MemoryItem, f64)> = self
                    .store
                    .items()
                    .map(|i| {
                        let key = StoreBackend::library_key(i);
                        let words: BTreeSet<String> = key
                            .split(|c: char| !c.is_alphanumeric())
                            .filter(|w| !w.is_empty() && *w != "lookup")
                            .map(str::to_lowercase)
                            .collect();
                        let inter = query.intersection(&words).count();
                        let union = query.union(&words).count();
                        (i, if union == 0 { 0.0 } else { inter as f64 / union as f64 })
                    })
                    .filter(|(_, s)| *s > 0.0 && *s >= r.min_score)
                    .collect();
                sort_scored(&mut scored);
                scored.truncate(limit);
                owned(scored)
            }
        }
    }

    fn append_manage_log(&self, report: &ManageReport) -> Result<(), MemoryError> {
        let Some(dir) = &self.storage else { return Ok(()) };
        let path = dir.join(MANAGE_LOG);
        let io = |source| MemoryError::Io { path: path.clone(), source };
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        let line = serde_json::to_string(report).expect("report serializes");
        writeln!(f, "{line}").map_err(io)
    }
}

impl MemoryProvider for ModularProvider {
    fn initialize(&mut self) -> Result<bool, MemoryError> {
        if self.initialized {
            return Ok(true);
        }
        if let Some(dir) = self.storage.clone() {
            if dir.exists() && !dir.is_dir() {
                return Err(MemoryError::Init { path: dir, reason: "not a directory".into() });
            }
            fs::create_dir_all(&dir).map_err(|e| MemoryError::Init { path: dir.clone(), reason: e.to_string() })?;
            self.load(&dir)?;
        }
        self.initialized = true;
        Ok(true)
    }

    fn take_in_memory(&mut self, trajectory: &TrajectoryData) -> (bool, String) {
        if !self.initialized {
            return (false, MemoryError::NotInitialized.to_string());
        }
        match self.ingest(trajectory) {
            Ok(items) => (true, describe(items.iter().map(|i| i.kind))),
            Err(cause) => (false, cause),
        }
    }

    fn provide_memory(&mut self, request: &MemoryRequest) -> Result<MemoryResponse, MemoryError> {
        if !self.initialized {
            return Err(MemoryError::NotInitialized);
        }
        let max_items = request.validate()?;
        let r = &self.genotype.retrieve;
        let limit = max_items.min(usize::try_from(r.k).unwrap_or(0));
        if limit == 0 || self.store.is_empty() {
            return Ok(MemoryResponse::empty());
        }
        if let Some(stages) = &r.stage_filter {
            if !stages.contains(&request.stage) {
                return Ok(MemoryResponse::empty());
            }
        }
        let ranked = self.rank(request, limit);
        let mut response = MemoryResponse::empty();
        for (id, score) in ranked {
            self.store.update_counters(&id, |hits, _| *hits += 1);
            response.items.push(self.store.get(&id).cloned().expect("ranked ids are stored"));
            response.scores.push(score);
        }
        Ok(response)
    }

    fn manage(&mut self) -> ManageReport {
        let m = self.genotype.manage.clone();
        let mut report = ManageReport { ingest_counter: self.ingested, ..Default::default() };
        match m.strategy {
            ManageStrategy::None => {}
            ManageStrategy::Dedup => report.deduplicated = manage::dedup(&mut self.store, m.dedup_threshold),
            ManageStrategy::PruneByScore => {
                report.pruned = manage::prune(&mut self.store, usize::try_from(m.capacity).unwrap_or(usize::MAX))
            }
            ManageStrategy::Consolidate => {
                let (ingested, minted) = (self.ingested, &mut self.minted);
                report.merged =
                    manage::consolidate(&mut self.store, m.dedup_threshold, || Self::mint_id(ingested, minted, 'c'));
            }
        }
        // The log is an audit trail; a write failure must not disturb the run.
        let _ = self.append_manage_log(&report);
        report
    }

    fn record_outcome(&mut self, provided_ids: &[String], success: bool) {
        if !success {
            return;
        }
        for id in provided_ids {
            self.store.update_counters(id, |hits, succ| {
                if *succ < *hits {
                    *succ += 1;
                }
            });
        }
    }

    fn manage_due(&self) -> bool {
        let every = u64::try_from(self.genotype.manage.trigger_every).unwrap_or(1).max(1);
        self.genotype.manage.strategy != ManageStrategy::None
            && self.ingested > 0
            && self.ingested.is_multiple_of(every)
    }

    fn ingest_counter(&self) -> u64 {
        self.ingested
    }

    fn snapshot(&self) -> Vec<MemoryItem> {
        self.store.items().cloned().collect()
    }

    fn len(&self) -> usize {
        self.store.len()
    }

    fn persist(&self) -> Result<(), MemoryError> {
        let Some(dir) = &self.storage else { return Ok(()) };
        let path = dir.join(MEMORY_FILE);
        let mut text = String::new();
        for item in self.store.items() {
            text.push_str(&serde_json::to_string(item).expect("item serializes"));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|source| MemoryError::Io { path, source })?;
        self.store.write_vectors(dir)?;
        Ok(())
    }
}
