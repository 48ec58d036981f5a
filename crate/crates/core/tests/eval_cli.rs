mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::{brute_pass_at_k, fixture_path, prefix_means, strict_gateway};
use evolab::eval::*;
use evolab::gateway::{FixtureTable, Gateway};
use evolab::genotype::preset;
use evolab::inner::*;
use proptest::prelude::*;

#[test]
fn exact_match_normalizes_case_space_and_quotes() {
    assert!(score_exact("  Paris ", "paris"));
    assert!(score_exact("New\t  York", "new york"));
    assert!(score_exact("\"quota-312ddf\"", "QUOTA-312DDF"));
    assert!(!score_exact("paris.", "paris"));
    assert!(!score_exact("", "paris"));
    assert_eq!(normalize_answer("  'A  b' "), "a b");
    assert_eq!(normalize_answer("\""), "\"");
}

#[test]
fn verdicts_prefer_incorrect() {
    assert_eq!(parse_verdict("CORRECT"), Some(true));
    assert_eq!(parse_verdict("the answer is correct."), Some(true));
    assert_eq!(parse_verdict("Incorrect, not CORRECT"), Some(false));
    assert_eq!(parse_verdict("uncorrected"), None);
    assert_eq!(parse_verdict(""), None);
}

#[test]
fn judge_reads_fixtures_and_warns_on_garbage() {
    let out = score_judge(&strict_gateway(), "q", "a", "a");
    assert_eq!(out, JudgeOutcome { correct: true, warning: None });
    let mut fx = FixtureTable::default();
    fx.insert_wildcard("judge", "no idea");
    let out = score_judge(&Gateway::stub_strict(fx), "q", "a", "a");
    assert!(!out.correct);
    assert!(out.warning.unwrap().contains("no idea"));
}

fn outcomes(matrix: &[Vec<bool>]) -> Vec<EpisodeOutcome> {
    let mut out = Vec::new();
    // attempt-major, the order runs produce
    for a in 0..matrix.first().map_or(0, Vec::len) {
        for (t, row) in matrix.iter().enumerate() {
            out.push(EpisodeOutcome {
                task_id: format!("t{t}"),
                attempt: a + 1,
                success: row[a],
                feedback: FeedbackVector::default(),
            });
        }
    }
    out
}

#[test]
fn pass_at_k_errors() {
    let m = vec![vec![false, true], vec![false, false]];
    let o = outcomes(&m);
    assert_eq!(pass_at_k(&o, 1).unwrap(), 0.0);
    assert_eq!(pass_at_k(&o, 2).unwrap(), 0.5);
    assert!(matches!(pass_at_k(&o, 0), Err(EvalError::ZeroK)));
    assert!(matches!(pass_at_k(&o, 3), Err(EvalError::TooFewAttempts { attempts: 2, k: 3, .. })));
    assert!(matches!(pass_at_k(&[], 1), Err(EvalError::Empty)));
    let gap: Vec<EpisodeOutcome> = o.into_iter().filter(|x| x.attempt != 1 || x.task_id != "t1").collect();
    assert!(matches!(pass_at_k(&gap, 1), Err(EvalError::NonContiguous { ref task_id }) if task_id == "t1"));
}

proptest! {
    #[test]
    fn pass_at_k_matches_enumeration(
        (m, k) in (1usize..6).prop_flat_map(|a| (prop::collection::vec(prop::collection::vec(any::<bool>(), a), 1..20), 1..=a))
    ) {
        let o = outcomes(&m);
        prop_assert_eq!(pass_at_k(&o, k).unwrap(), brute_pass_at_k(&m, k));
        // more attempts never hurt
        if k > 1 {
            prop_assert!(pass_at_k(&o, k).unwrap() >= pass_at_k(&o, k - 1).unwrap());
        }
    }

    #[test]
    fn cumulative_accuracy_is_prefix_means(xs in prop::collection::vec(any::<bool>(), 1..200)) {
        let got = cumulative_accuracy(&xs).unwrap();
        let want = prefix_means(&xs);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-12);
        }
    }
}

fn write_run(dir: &Path) {
    let pool = synth_pool(&PoolConfig { families: 3, tasks_per_family: 4, seed: 2, ..Default::default() });
    let batch = TaskBatch { iteration: 0, new_tasks: pool, reused_tasks: vec![] };
    let config = RunConfig { attempts: 2, ..Default::default() };
    run_batch(&preset("dilu").unwrap(), &batch, &SimAgent::new(0), &strict_gateway(), &config, None, Some(dir))
        .unwrap();
}

#[test]
fn evaluation_of_a_persisted_run() {
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path());
    let exact = evaluate_run(dir.path(), Protocol::Exact, 2, &Gateway::stub()).unwrap();
    assert_eq!(exact.len(), 1);
    assert_eq!(exact[0].pass_at.len(), 2);
    assert!(exact[0].pass_at[1] >= exact[0].pass_at[0]);
    assert_eq!(exact[0].warnings, 0);
    // the fixture judge calls every answer correct
    let judged = evaluate_run(dir.path(), Protocol::Judge, 1, &strict_gateway()).unwrap();
    assert_eq!(judged[0].pass_at, [1.0]);
    // without a fixture each judge call warns and scores as wrong
    let failed = evaluate_run(dir.path(), Protocol::Judge, 1, &Gateway::stub_strict(FixtureTable::default())).unwrap();
    assert_eq!((failed[0].pass_at[0], failed[0].warnings), (0.0, 24));
    assert!(matches!(
        evaluate_run(dir.path(), Protocol::Exact, 3, &Gateway::stub()),
        Err(EvalError::TooFewAttempts { .. })
    ));
}

#[test]
fn reports_regenerate_byte_for_byte() {
    let run = tempfile::tempdir().unwrap();
    write_run(run.path());
    let out = tempfile::tempdir().unwrap();
    let tables = write_report(run.path(), out.path()).unwrap();
    assert_eq!(tables.rows.len(), 1);
    let files = ["candidates.csv", "pareto_front.csv", "lineage.csv", "cumulative_accuracy.csv", "report.md"];
    let first: Vec<Vec<u8>> = files.iter().map(|f| fs::read(out.path().join(f)).unwrap()).collect();
    fs::remove_dir_all(out.path()).unwrap();
    write_report(run.path(), out.path()).unwrap();
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(&fs::read(out.path().join(f)).unwrap(), bytes, "{f} changed");
    }
    // one accuracy point per first-attempt episode, plus the header
    let curve = String::from_utf8(first[3].clone()).unwrap();
    assert_eq!(curve.lines().count(), 1 + 12);

    let empty = tempfile::tempdir().unwrap();
    assert!(write_report(empty.path(), out.path()).is_err());
}

fn evolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evolab"))
        .args(args)
        .env("EVOLAB_LLM_MODE", "stub-strict")
        .env("EVOLAB_LLM_FIXTURES", fixture_path())
        .env_remove("EVOLAB_LLM_PRICE_IN")
        .env_remove("EVOLAB_LLM_PRICE_OUT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn cli_presets_and_genotypes() {
    let list = evolab(&["presets", "list"]);
    assert!(list.status.success());
    assert_eq!(stdout(&list).lines().count(), 12);
    let show = evolab(&["presets", "show", "expel"]);
    assert_eq!(stdout(&show), preset("expel").unwrap().to_json());

    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(&good, stdout(&show)).unwrap();
    let ok = evolab(&["genotype", "validate", good.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert_eq!(stdout(&ok).trim(), "ok expel");

    let bad = dir.path().join("bad.json");
    let mut g = preset("expel").unwrap();
    g.retrieve.k = -1;
    fs::write(&bad, g.to_json()).unwrap();
    let rejected = evolab(&["genotype", "validate", bad.to_str().unwrap()]);
    assert_eq!(rejected.status.code(), Some(2));
    assert!(stderr(&rejected).contains("retrieve.k"), "{}", stderr(&rejected));
}

#[test]
fn cli_exit_codes() {
    assert_eq!(evolab(&["--help"]).status.code(), Some(0));
    assert_eq!(evolab(&["--version"]).status.code(), Some(0));
    assert_eq!(evolab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(evolab(&["presets", "show"]).status.code(), Some(1));
    let missing = evolab(&["genotype", "validate", "/nonexistent/g.json"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("/nonexistent/g.json"), "{}", stderr(&missing));
    assert_eq!(evolab(&["presets", "show", "memgpt"]).status.code(), Some(2));
    assert_eq!(evolab(&["eval", "--run", ".", "--passk", "0"]).status.code(), Some(2));
}

#[test]
fn cli_run_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let synth = evolab(&["tasks", "synth", "--out", &p("tasks.jsonl"), "--families", "3", "--per-family", "4"]);
    assert!(synth.status.success(), "{}", stderr(&synth));
    assert!(stdout(&synth).starts_with("12 tasks"));

    let run =
        evolab(&["run", "--genotype", "dilu", "--tasks", &p("tasks.jsonl"), "--out", &p("run"), "--attempts", "2"]);
    assert!(run.status.success(), "{}", stderr(&run));
    assert!(stdout(&run).contains("over 24 episodes"), "{}", stdout(&run));
    for f in [TRAJECTORIES_FILE, SUMMARY_FILE, GENOTYPE_FILE] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }

    let eval = evolab(&["eval", "--run", &p("run"), "--protocol", "judge", "--passk", "2"]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    let out = stdout(&eval);
    assert!(out.starts_with("candidate\tname\tpass@1\tpass@2\twarnings"), "{out}");
    assert!(out.contains("1.00\t1.00\t0"), "{out}");
    assert!(dir.path().join("run/eval-judge.json").exists());

    let report = evolab(&["report", "--run", &p("run"), "--out", &p("report")]);
    assert!(report.status.success(), "{}", stderr(&report));
    let md = fs::read_to_string(dir.path().join("report/report.md")).unwrap();
    assert!(md.contains("| . | dilu |"), "{md}");

    let unknown = evolab(&["run", "--genotype", "nope", "--tasks", &p("tasks.jsonl"), "--out", &p("x")]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("neither a genotype file nor a preset"));
}
