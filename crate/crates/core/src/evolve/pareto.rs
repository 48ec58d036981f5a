use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::genotype::MemoryGenotype;
use crate::inner::FeedbackSummary;

/// `(perf, -cost, -delay)`: higher is better in every component.
pub fn summary_vector(summary: &FeedbackSummary) -> [f64; 3] {
    [summary.perf_mean, -summary.cost_mean, -summary.delay_mean]
}

/// `a` dominates `b` when it is at least as good everywhere and strictly
/// better somewhere.
pub fn dominates(a: &[f64; 3], b: &[f64; 3]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Non-dominated sorting. Rank 0 is the Pareto front; rank `r` is the front
/// left after removing ranks below `r`.
pub fn pareto_rank(vectors: &[[f64; 3]]) -> Result<Vec<usize>, EvolveError> {
    if let Some(i) = vectors.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(EvolveError::NonFinite { index: i });
    }
    let n = vectors.len();
    // dominated_by[i]: how many vectors dominate i; beats[i]: whom i dominates
    let mut dominated_by = vec![0usize; n];
    let mut beats: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if dominates(&vectors[i], &vectors[j]) {
                beats[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&vectors[j], &vectors[i]) {
                beats[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut ranks = vec![0usize; n];
    let mut front: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    let mut rank = 0;
    while !front.is_empty() {
        let mut next = Vec::new();
        for &i in &front {
            ranks[i] = rank;
            for &j in &beats[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        front = next;
        rank += 1;
    }
    Ok(ranks)
}

/// One evaluated architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub genotype: MemoryGenotype,
    pub summary: FeedbackSummary,
    pub summary_vector: [f64; 3],
    pub pareto_rank: usize,
    pub iteration: usize,
    /// Hash of the parent genotype, absent for the initial candidate.
    #[serde(default)]
    pub parent_hash: Option<String>,
    /// How the genotype was produced.
    #[serde(default)]
    pub origin: String,
}

impl CandidateRecord {
    pub fn new(genotype: MemoryGenotype, summary: FeedbackSummary, iteration: usize) -> Self {
        let summary_vector = summary_vector(&summary);
        CandidateRecord {
            genotype,
            summary,
            summary_vector,
            pareto_rank: 0,
            iteration,
            parent_hash: None,
            origin: String::new(),
        }
    }
}

/// Recompute every candidate's rank within the given set.
pub fn assign_ranks(candidates: &mut [CandidateRecord]) -> Result<(), EvolveError> {
    let vectors: Vec<[f64; 3]> = candidates.iter().map(|c| c.summary_vector).collect();
    for (c, r) in candidates.iter_mut().zip(pareto_rank(&vectors)?) {
        c.pareto_rank = r;
    }
    Ok(())
}

fn selection_order(a: &CandidateRecord, b: &CandidateRecord) -> Ordering {
    a.pareto_rank
        .cmp(&b.pareto_rank)
        .then(b.summary.perf_mean.total_cmp(&a.summary.perf_mean))
        .then_with(|| a.genotype.name.cmp(&b.genotype.name))
        // identical names only arise from hand-built inputs; keep the order total
        .then_with(|| a.genotype.to_json().cmp(&b.genotype.to_json()))
}

/// The first `k` candidates by (rank ascending, perf descending, name ascending).
/// Uses the ranks stored on the records.
pub fn select_parents(candidates: &[CandidateRecord], k: usize) -> Vec<CandidateRecord> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(selection_order);
    sorted.truncate(k);
    sorted
}
