//! Independent reference implementations shared by the integration suites.
//!
//! Everything here is deliberately naive: brute force, full sorts, plain
//! loops. The library versions are checked against these.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::PathBuf;

use evolab::genotype::MemoryGenotype;
use evolab::memory::{MemoryItem, MemoryKind, TrajectoryData, TrajectoryStep};

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/stub.jsonl")
}

/// Strict stub gateway over the checked-in fixture file.
pub fn strict_gateway() -> evolab::gateway::Gateway {
    let table = evolab::gateway::FixtureTable::load(&fixture_path()).expect("fixture file loads");
    evolab::gateway::Gateway::stub_strict(table)
}

fn weakly_better(a: &[f64; 3], b: &[f64; 3]) -> bool {
    (0..3).all(|i| a[i] >= b[i])
}

fn oracle_dominates(a: &[f64; 3], b: &[f64; 3]) -> bool {
    weakly_better(a, b) && a != b
}

/// Peel fronts one at a time, scanning every pair on each pass.
pub fn brute_pareto_ranks(vs: &[[f64; 3]]) -> Vec<usize> {
    let mut rank = vec![usize::MAX; vs.len()];
    let mut level = 0;
    while rank.contains(&usize::MAX) {
        let front: Vec<usize> = (0..vs.len())
            .filter(|&i| rank[i] == usize::MAX)
            .filter(|&i| !(0..vs.len()).any(|j| rank[j] == usize::MAX && oracle_dominates(&vs[j], &vs[i])))
            .collect();
        for i in front {
            rank[i] = level;
        }
        level += 1;
    }
    rank
}

/// Full sort of (id, created_at_step, score) triples; returns ids best first.
pub fn full_sort_ids(mut scored: Vec<(String, u64, f64)>) -> Vec<String> {
    scored.sort_by(|a, b| match b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal) {
        Ordering::Equal => (a.1, &a.0).cmp(&(b.1, &b.0)),
        o => o,
    });
    scored.into_iter().map(|s| s.0).collect()
}

pub fn plain_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `matrix[task][attempt]`; count tasks with any success in the first k.
#[allow(clippy::needless_range_loop)]
pub fn brute_pass_at_k(matrix: &[Vec<bool>], k: usize) -> f64 {
    let mut solved = 0;
    for row in matrix {
        let mut hit = false;
        for a in 0..k {
            if row[a] {
                hit = true;
            }
        }
        if hit {
            solved += 1;
        }
    }
    solved as f64 / matrix.len() as f64
}

pub fn prefix_means(xs: &[bool]) -> Vec<f64> {
    let mut prefix = vec![0u64; xs.len() + 1];
    for (i, &x) in xs.iter().enumerate() {
        prefix[i + 1] = prefix[i] + x as u64;
    }
    (1..=xs.len()).map(|i| prefix[i] as f64 / i as f64).collect()
}

/// Mean by summing back to front, a different order from the library.
pub fn reverse_mean(xs: &[f64]) -> f64 {
    xs.iter().rev().fold(0.0, |acc, x| acc + x) / xs.len() as f64
}

pub fn item(id: &str, content: &str, step: u64) -> MemoryItem {
    MemoryItem {
        id: id.into(),
        kind: MemoryKind::Insight,
        content: content.into(),
        source_task_id: format!("task-{id}"),
        created_at_step: step,
        confidence: 1.0,
        hit_count: 0,
        success_assoc: 0,
        source_success: true,
        key: None,
        parents: vec![],
    }
}

pub fn step(i: usize, action: &str, observation: &str) -> TrajectoryStep {
    TrajectoryStep {
        index: i,
        agent_id: "agent-0".into(),
        state_summary: String::new(),
        action: action.into(),
        observation: observation.into(),
        tokens_in: 10,
        tokens_out: 2,
        memory_tokens: 0,
    }
}

/// A small lookup trajectory that succeeds or fails.
pub fn trajectory(task: &str, family: &str, query: &str, success: bool) -> TrajectoryData {
    let steps = vec![
        step(0, &format!("lookup {family}-k0"), "(empty)"),
        step(1, &format!("lookup {family}-k1"), if success { "rating-abc123" } else { "(empty)" }),
    ];
    let answer = if success { "rating-abc123" } else { "" };
    TrajectoryData::new(task, family, query, steps, if success { 1.0 } else { 0.0 }, 1.0, 2.0, vec![], answer)
}

fn leaves(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, serde_json::Value>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, v) in m {
                leaves(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

/// Dotted paths of the stage fields whose values differ.
pub fn stage_diff(a: &MemoryGenotype, b: &MemoryGenotype) -> Vec<String> {
    let flat = |g: &MemoryGenotype| {
        let mut out = BTreeMap::new();
        let v = serde_json::to_value(g).unwrap();
        for stage in ["encode", "store", "retrieve", "manage"] {
            leaves(stage, &v[stage], &mut out);
        }
        out
    };
    let (fa, fb) = (flat(a), flat(b));
    fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).cloned().collect()
}
