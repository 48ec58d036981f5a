//! Run reports, rebuilt from persisted candidate directories only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{cumulative_accuracy, pass_at_k, score_exact, score_judge, EpisodeOutcome, EvalError, Protocol};
use crate::evolve::pareto_rank;
use crate::gateway::Gateway;
use crate::genotype::MemoryGenotype;
use crate::inner::{read_records, EpisodeRecord, FeedbackSummary, GENOTYPE_FILE, SUMMARY_FILE, TRAJECTORIES_FILE};

/// One candidate directory, summarized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRow {
    /// Path relative to the run directory (`iter-1/cand-2`, or `.`).
    pub label: String,
    pub iteration: Option<usize>,
    pub name: String,
    pub parent: Option<String>,
    pub perf: f64,
    pub cost: f64,
    pub delay: f64,
    pub mean_steps: f64,
    pub episodes: usize,
    pub pareto_rank: usize,
    #[serde(skip)]
    pub records: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTables {
    pub rows: Vec<CandidateRow>,
}

fn file_err(path: &Path, reason: impl ToString) -> EvalError {
    EvalError::File { path: path.display().to_string(), reason: reason.to_string() }
}

fn parse_iteration(label: &str) -> Option<usize> {
    label.split('/').next()?.strip_prefix("iter-")?.parse().ok()
}

fn candidate_dirs(run: &Path) -> Result<Vec<PathBuf>, EvalError> {
    if run.join(TRAJECTORIES_FILE).exists() {
        return Ok(vec![run.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    let mut stack = vec![run.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(|e| file_err(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| file_err(&d, e))?.path();
            if path.is_dir() {
                if path.join(TRAJECTORIES_FILE).exists() {
                    dirs.push(path);
                } else {
                    stack.push(path);
                }
            }
        }
    }
    // Numeric-aware order so iter-10 sorts after iter-9.
    let key = |p: &PathBuf| {
        p.strip_prefix(run)
            .unwrap_or(p)
            .components()
            .map(|c| {
                let s = c.as_os_str().to_string_lossy().to_string();
                let digits: String = s.chars().filter(char::is_ascii_digit).collect();
                (s.trim_end_matches(|c: char| c.is_ascii_digit()).to_string(), digits.parse::<u64>().unwrap_or(0), s)
            })
            .collect::<Vec<_>>()
    };
    dirs.sort_by_key(key);
    Ok(dirs)
}

/// Read every candidate directory under `run`.
pub fn collect_run(run: &Path) -> Result<RunTables, EvalError> {
    let mut rows = Vec::new();
    for dir in candidate_dirs(run)? {
        let label = match dir.strip_prefix(run) {
            Ok(p) if p.as_os_str().is_empty() => ".".to_string(),
            Ok(p) => p.to_string_lossy().replace('\\', "/"),
            Err(_) => dir.display().to_string(),
        };
        let records = read_records(&dir.join(TRAJECTORIES_FILE)).map_err(|e| file_err(&dir, e))?;
        let summary_path = dir.join(SUMMARY_FILE);
        let summary: FeedbackSummary =
            serde_json::from_str(&fs::read_to_string(&summary_path).map_err(|e| file_err(&summary_path, e))?)
                .map_err(|e| file_err(&summary_path, e))?;
        let genotype = MemoryGenotype::load(&dir.join(GENOTYPE_FILE)).ok();
        let steps: usize = records.iter().map(|r| r.trajectory.steps.len()).sum();
        rows.push(CandidateRow {
            iteration: parse_iteration(&label),
            name: genotype.as_ref().map_or_else(|| label.clone(), |g| g.name.clone()),
            parent: genotype.as_ref().and_then(|g| g.lineage.last().cloned()),
            label,
            perf: summary.perf_mean,
            cost: summary.cost_mean,
            delay: summary.delay_mean,
            mean_steps: if records.is_empty() { 0.0 } else { steps as f64 / records.len() as f64 },
            episodes: records.len(),
            pareto_rank: 0,
            records,
        });
    }
    if rows.is_empty() {
        return Err(EvalError::NoTrajectories(run.display().to_string()));
    }
    // Ranks are relative to the candidate's own iteration.
    let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.iteration).or_default().push(i);
    }
    for idx in groups.values() {
        let vectors: Vec<[f64; 3]> = idx.iter().map(|&i| [rows[i].perf, -rows[i].cost, -rows[i].delay]).collect();
        let ranks = pareto_rank(&vectors).map_err(|e| file_err(run, e))?;
        for (&i, r) in idx.iter().zip(ranks) {
            rows[i].pareto_rank = r;
        }
    }
    Ok(RunTables { rows })
}

/// Outcomes of every episode under a scoring protocol.
pub fn rescore(records: &[EpisodeRecord], protocol: Protocol, gateway: &Gateway) -> (Vec<EpisodeOutcome>, usize) {
    let mut warnings = 0;
    let outcomes = records
        .iter()
        .map(|r| {
            let success = match protocol {
                Protocol::Exact => score_exact(&r.trajectory.answer, &r.gold_answer),
                Protocol::Judge => {
                    let v = score_judge(gateway, &r.trajectory.query, &r.trajectory.answer, &r.gold_answer);
                    warnings += usize::from(v.warning.is_some());
                    v.correct
                }
            };
            EpisodeOutcome { task_id: r.task_id.clone(), attempt: r.attempt, success, feedback: r.feedback }
        })
        .collect();
    (outcomes, warnings)
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    fs::write(path, text).map_err(|e| file_err(path, e))
}

/// Write `candidates.csv`, `pareto_front.csv`, `lineage.csv`,
/// `cumulative_accuracy.csv` and `report.md` into `out`.
pub fn write_report(run: &Path, out: &Path) -> Result<RunTables, EvalError> {
    let tables = collect_run(run)?;
    fs::create_dir_all(out).map_err(|e| file_err(out, e))?;

    let mut csv = String::from("label,iteration,name,parent,perf,cost,delay,mean_steps,episodes,pareto_rank\n");
    for r in &tables.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            r.label,
            r.iteration.map(|i| i.to_string()).unwrap_or_default(),
            r.name,
            r.parent.clone().unwrap_or_default(),
            r.perf,
            r.cost,
            r.delay,
            r.mean_steps,
            r.episodes,
            r.pareto_rank
        );
    }
    write(&out.join("candidates.csv"), &csv)?;

    let mut front = String::from("iteration,label,name,perf,cost,delay\n");
    for r in tables.rows.iter().filter(|r| r.pareto_rank == 0) {
        let it = r.iteration.map(|i| i.to_string()).unwrap_or_default();
        let _ = writeln!(front, "{it},{},{},{},{},{}", r.label, r.name, r.perf, r.cost, r.delay);
    }
    write(&out.join("pareto_front.csv"), &front)?;

    let mut lineage = String::from("child,parent\n");
    let mut edges = std::collections::BTreeSet::new();
    for r in &tables.rows {
        if let Some(p) = &r.parent {
            edges.insert((r.name.clone(), p.clone()));
        }
    }
    for (c, p) in &edges {
        let _ = writeln!(lineage, "{c},{p}");
    }
    write(&out.join("lineage.csv"), &lineage)?;

    let mut curve = String::from("label,i,accuracy\n");
    for r in &tables.rows {
        let first: Vec<bool> = r.records.iter().filter(|e| e.attempt == 1).map(|e| e.trajectory.success).collect();
        if let Ok(c) = cumulative_accuracy(&first) {
            for (i, v) in c.iter().enumerate() {
                let _ = writeln!(curve, "{},{},{}", r.label, i + 1, v);
            }
        }
    }
    write(&out.join("cumulative_accuracy.csv"), &curve)?;

    let mut md = String::from("# Run report\n\n");
    let _ = writeln!(md, "Run directory: `{}`\n", run.display());
    md.push_str(
        "Repeated attempts share one online memory and run the whole task list in order, \
         attempt by attempt. Values are shown to two decimals; the CSV files keep full precision.\n\n",
    );
    md.push_str(
        "## Candidates\n\n| candidate | name | perf | cost | delay | steps | rank |\n|---|---|---|---|---|---|---|\n",
    );
    for r in &tables.rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.label,
            r.name,
            fmt2(r.perf),
            fmt2(r.cost),
            fmt2(r.delay),
            fmt2(r.mean_steps),
            r.pareto_rank
        );
    }
    md.push_str("\n## Pareto fronts\n\n");
    let mut by_iter: BTreeMap<Option<usize>, Vec<&CandidateRow>> = BTreeMap::new();
    for r in tables.rows.iter().filter(|r| r.pareto_rank == 0) {
        by_iter.entry(r.iteration).or_default().push(r);
    }
    for (it, rows) in &by_iter {
        let names: Vec<String> = rows.iter().map(|r| format!("`{}`", r.name)).collect();
        let _ = writeln!(md, "- {}: {}", it.map_or("run".to_string(), |i| format!("iteration {i}")), names.join(", "));
    }
    md.push_str("\n## Lineage\n\n");
    let children: BTreeMap<&str, Vec<&str>> = edges.iter().fold(BTreeMap::new(), |mut m, (c, p)| {
        m.entry(p.as_str()).or_insert_with(Vec::new).push(c.as_str());
        m
    });
    let roots: Vec<&str> = tables
        .rows
        .iter()
        .filter(|r| r.parent.is_none())
        .map(|r| r.name.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    fn tree(md: &mut String, node: &str, depth: usize, children: &BTreeMap<&str, Vec<&str>>) {
        let _ = writeln!(md, "{}- `{node}`", "  ".repeat(depth));
        if depth < 64 {
            for c in children.get(node).into_iter().flatten() {
                tree(md, c, depth + 1, children);
            }
        }
    }
    for root in roots {
        tree(&mut md, root, 0, &children);
    }
    md.push_str("\nCumulative accuracy series: `cumulative_accuracy.csv`.\n");
    write(&out.join("report.md"), &md)?;
    Ok(tables)
}

/// Pass@1..k of one candidate under a protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub label: String,
    pub name: String,
    pub protocol: Protocol,
    /// Entry `i` is pass@(i+1).
    pub pass_at: Vec<f64>,
    pub warnings: usize,
}

/// Score every candidate of a run and compute pass@1..=k.
pub fn evaluate_run(run: &Path, protocol: Protocol, k: usize, gateway: &Gateway) -> Result<Vec<EvalRow>, EvalError> {
    let tables = collect_run(run)?;
    let mut rows = Vec::new();
    for r in &tables.rows {
        let (outcomes, warnings) = rescore(&r.records, protocol, gateway);
        let pass_at = (1..=k).map(|i| pass_at_k(&outcomes, i)).collect::<Result<Vec<_>, _>>()?;
        rows.push(EvalRow { label: r.label.clone(), name: r.name.clone(), protocol, pass_at, warnings });
    }
    Ok(rows)
}
