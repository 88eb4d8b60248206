//! Metrics against a hand-checked example, a golden text rendering, and a
//! recomputation that reads nothing but the serialized trajectory JSON.

use std::collections::BTreeMap;

use closedloop::judge::JudgeDecision;
use closedloop::metrics::{compute_metrics, embedded_tasks, MetricsOptions, MetricsReport};
use closedloop::report::{emit_report, parse_json_report, ReportFormat, CSV_HEADER};
use closedloop::task::{Annotation, Category};
use closedloop::trajectory::{CallCounts, Termination, TrajectoryEntry, TRAJECTORY_SCHEMA_VERSION};
use closedloop::types::{ErrorSignal, SeverityComponents};
use closedloop::{normalize_answer, BenchTask, ErrorType, Hyperparameters, Method, ReasoningChain, Trajectory};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn entry(i: usize, raw: (&str, f64), accepted: (&str, f64), calls: u32) -> TrajectoryEntry {
    TrajectoryEntry {
        iteration: i,
        version: ReasoningChain::new("t", [format!("Answer: {}", raw.0)], None).unwrap(),
        raw_severity: raw.1,
        accepted_severity: accepted.1,
        accepted_answer: normalize_answer(accepted.0),
        accepted_from: i,
        error_signal: ErrorSignal::clean(raw.1, SeverityComponents::default()),
        control_input: None,
        decision: JudgeDecision::Continue,
        calls,
        sensing_failures: vec![],
    }
}

fn trajectory(task: BenchTask, method: Method, entries: Vec<TrajectoryEntry>, termination: Termination) -> Trajectory {
    let final_answer = entries.last().unwrap().accepted_answer.clone();
    let method_calls = entries.iter().map(|e| u64::from(e.calls)).sum();
    Trajectory {
        schema_version: TRAJECTORY_SCHEMA_VERSION,
        task,
        method,
        run_label: None,
        seed: 0,
        params: Hyperparameters::default(),
        final_version: entries.len() - 1,
        entries,
        termination,
        final_answer,
        calls: CallCounts { method: method_calls, logging: 0 },
        config: None,
        started_at: None,
        finished_at: None,
    }
}

fn task(id: &str, category: Category, gold: &str, error: Option<(ErrorType, usize)>) -> BenchTask {
    BenchTask {
        category,
        annotation: error.map(|(error_type, location)| Annotation { error_type, location }),
        ..BenchTask::inline(id, "q", gold)
    }
}

/// Four runs: converged and correct, overshoot rolled back and still wrong,
/// an A-B-A oscillation resolved to the right answer, and a clean first
/// pass.
fn example() -> Vec<Trajectory> {
    let t1 = trajectory(
        task("t1", Category::MathReasoning, "42", Some((ErrorType::Arithmetic, 2))),
        Method::Cybercorrect,
        vec![
            entry(0, ("40", 0.6), ("40", 0.6), 8),
            entry(1, ("41", 0.3), ("41", 0.3), 9),
            entry(2, ("42", 0.28), ("42", 0.28), 9),
        ],
        Termination::Converged,
    );
    let t2 = trajectory(
        task("t2", Category::MathReasoning, "7", Some((ErrorType::Premise, 1))),
        Method::Cybercorrect,
        vec![entry(0, ("5", 0.5), ("5", 0.5), 8), entry(1, ("9", 0.65), ("5", 0.5), 9)],
        Termination::MaxIterations,
    );
    let t3 = trajectory(
        task("t3", Category::LogicalReasoning, "A", Some((ErrorType::LogicGap, 3))),
        Method::Cybercorrect,
        vec![
            entry(0, ("C", 0.7), ("C", 0.7), 8),
            entry(1, ("A", 0.5), ("A", 0.5), 9),
            entry(2, ("B", 0.55), ("B", 0.55), 9),
            entry(3, ("A", 0.45), ("A", 0.45), 9),
        ],
        Termination::Oscillation,
    );
    let t4 = trajectory(
        task("t4", Category::Commonsense, "yes", None),
        Method::Cybercorrect,
        vec![entry(0, ("yes", 0.05), ("yes", 0.05), 8)],
        Termination::Clean,
    );
    vec![t1, t2, t3, t4]
}

fn example_report() -> MetricsReport {
    let ts = example();
    compute_metrics(&ts, &embedded_tasks(&ts), MetricsOptions::default()).unwrap()
}

#[test]
fn four_trajectory_example() {
    let r = example_report();
    let o = &r.overall;
    assert_eq!(o.n, 4);
    assert_eq!(o.accuracy, 3.0 / 4.0);
    assert_eq!(o.cr, 2.0 / 4.0);
    assert_eq!(o.or_rate, 1.0 / 4.0);
    assert_eq!(o.oscr, 1.0 / 4.0);
    assert_eq!(o.csr, Some(2.0 / 3.0));
    assert_eq!(o.calls_per_task, (26.0 + 17.0 + 35.0 + 8.0) / 4.0);

    let mr = &r.by_category["MR"];
    assert_eq!((mr.n, mr.accuracy, mr.or_rate, mr.csr), (2, 0.5, 0.5, Some(0.5)));
    assert_eq!(r.by_category["Comm"].csr, None);
    assert_eq!(r.by_error_type["logic_gap"].oscr, 1.0);
    assert_eq!(r.by_error_type["none"].cr, 1.0);
}

#[test]
fn example_text_report_matches_golden() {
    let text = emit_report(&[example_report()], ReportFormat::Text);
    let golden = include_str!("golden/metrics_example.txt");
    assert_eq!(text, golden, "\n{text}");
}

#[test]
fn json_report_round_trips() {
    let reports = vec![example_report()];
    let json = emit_report(&reports, ReportFormat::Json);
    assert_eq!(parse_json_report(&json).unwrap(), reports);
}

#[test]
fn csv_report_has_header_and_one_row_per_method() {
    let csv = emit_report(&[example_report()], ReportFormat::Csv);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines[1], "cybercorrect,4,0.75,0.6666666666666666,0.5,0.25,0.25,21.5");
    assert_eq!(lines.len(), 2);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let mut ts = example();
    let tasks = embedded_tasks(&ts);
    ts[1].method = Method::NaiveRetry;
    assert!(compute_metrics(&ts, &tasks, MetricsOptions::default()).is_err());
    let dup = vec![ts[0].clone(), ts[0].clone()];
    assert!(compute_metrics(&dup, &tasks[..1], MetricsOptions::default()).is_err());
}

/// A random set of trajectories for one method. Severities sit on a coarse
/// grid so that equalities and epsilon/delta boundaries come up often.
pub fn random_set(seed: u64) -> (Vec<Trajectory>, Vec<BenchTask>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let answers = ["1", "2", "3", "yes"];
    let terminations = [
        Termination::Clean,
        Termination::Converged,
        Termination::Oscillation,
        Termination::MaxIterations,
        Termination::SinglePass,
        Termination::Unchanged,
    ];
    let method = *Method::ALL.choose(&mut rng).unwrap();
    let n = rng.random_range(1..=12);
    let mut ts = vec![];
    for i in 0..n {
        let gold = *answers.choose(&mut rng).unwrap();
        let category = *Category::ALL.choose(&mut rng).unwrap();
        let error = match rng.random_range(0..4) {
            0 => None,
            1 => Some((ErrorType::Arithmetic, 1)),
            2 => Some((ErrorType::LogicGap, 2)),
            _ => Some((ErrorType::Premise, 1)),
        };
        let len = rng.random_range(1..=6);
        let entries = (0..len)
            .map(|j| {
                let raw = (*answers.choose(&mut rng).unwrap(), f64::from(rng.random_range(0..=20u8)) * 0.05);
                let accepted = if rng.random_bool(0.7) {
                    raw
                } else {
                    (*answers.choose(&mut rng).unwrap(), f64::from(rng.random_range(0..=20u8)) * 0.05)
                };
                entry(j, raw, accepted, rng.random_range(1..=12))
            })
            .collect();
        let mut t = trajectory(
            task(&format!("r{i}"), category, gold, error),
            method,
            entries,
            *terminations.choose(&mut rng).unwrap(),
        );
        t.params.epsilon = [0.0, 0.05, 0.1][rng.random_range(0..3)];
        t.params.delta = [0.0, 0.1, 0.15][rng.random_range(0..3)];
        ts.push(t);
    }
    let tasks = embedded_tasks(&ts);
    (ts, tasks)
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    n: u64,
    correct: u64,
    wrong_first: u64,
    fixed: u64,
    converged: u64,
    overshoot: u64,
    oscillated: u64,
}

/// Five metrics for one serialized trajectory, from raw JSON fields only.
fn tally_one(t: &Value) -> Tally {
    let gold = t["task"]["gold_answer"].as_str().unwrap();
    let entries = t["entries"].as_array().unwrap();
    let eps = t["params"]["epsilon"].as_f64().unwrap();
    let delta = t["params"]["delta"].as_f64().unwrap();
    let raw_s: Vec<f64> = entries.iter().map(|e| e["raw_severity"].as_f64().unwrap()).collect();
    let acc_s: Vec<f64> = entries.iter().map(|e| e["accepted_severity"].as_f64().unwrap()).collect();
    let raw_a: Vec<&str> = entries.iter().map(|e| e["version"]["final_answer"].as_str().unwrap()).collect();
    let acc_a: Vec<&str> = entries.iter().map(|e| e["accepted_answer"].as_str().unwrap()).collect();
    let n = entries.len();

    let correct = t["final_answer"].as_str().unwrap() == gold;
    let wrong_first = raw_a[0] != gold;
    let mut converged = t["termination"] == "clean";
    if n >= 2 && (raw_s[n - 1] - acc_s[n - 2]).abs() < eps {
        converged = true;
    }
    let mut overshoot = false;
    for i in 1..n {
        if raw_s[i] > raw_s[i - 1] + delta {
            overshoot = true;
        }
    }
    let mut oscillated = false;
    for i in 2..n {
        if raw_a[i] == acc_a[i - 2] && raw_a[i] != acc_a[i - 1] {
            oscillated = true;
        }
    }
    Tally {
        n: 1,
        correct: correct as u64,
        wrong_first: wrong_first as u64,
        fixed: (correct && wrong_first) as u64,
        converged: converged as u64,
        overshoot: overshoot as u64,
        oscillated: oscillated as u64,
    }
}

fn add(a: &mut Tally, b: Tally) {
    a.n += b.n;
    a.correct += b.correct;
    a.wrong_first += b.wrong_first;
    a.fixed += b.fixed;
    a.converged += b.converged;
    a.overshoot += b.overshoot;
    a.oscillated += b.oscillated;
}

fn compare(label: &str, got: &closedloop::metrics::Rates, want: Tally, bad: &mut Vec<String>) {
    let n = want.n as f64;
    let csr = (want.wrong_first > 0).then(|| want.fixed as f64 / want.wrong_first as f64);
    let pairs = [
        ("acc", Some(got.accuracy), Some(want.correct as f64 / n)),
        ("csr", got.csr, csr),
        ("cr", Some(got.cr), Some(want.converged as f64 / n)),
        ("or", Some(got.or_rate), Some(want.overshoot as f64 / n)),
        ("oscr", Some(got.oscr), Some(want.oscillated as f64 / n)),
    ];
    for (name, g, w) in pairs {
        if g.map(f64::to_bits) != w.map(f64::to_bits) {
            bad.push(format!("{label} {name}: got {g:?}, want {w:?}"));
        }
    }
}

/// Differences between `compute_metrics` and the JSON recomputation for one
/// random set, overall and per breakdown key.
pub fn oracle_mismatches(seed: u64) -> Vec<String> {
    let (ts, tasks) = random_set(seed);
    let report = compute_metrics(&ts, &tasks, MetricsOptions::default()).unwrap();
    let mut bad = vec![];
    let mut overall = Tally::default();
    let mut by_cat: BTreeMap<String, Tally> = BTreeMap::new();
    let mut by_type: BTreeMap<String, Tally> = BTreeMap::new();
    for t in &ts {
        let v: Value = serde_json::from_str(&t.to_json_line()).unwrap();
        let one = tally_one(&v);
        add(&mut overall, one);
        add(by_cat.entry(v["task"]["category"].as_str().unwrap().into()).or_default(), one);
        let ty = v["task"]["annotation"]["error_type"].as_str().unwrap_or("none");
        add(by_type.entry(ty.into()).or_default(), one);
    }
    compare(&format!("seed {seed} overall"), &report.overall, overall, &mut bad);
    if report.by_category.len() != by_cat.len() || report.by_error_type.len() != by_type.len() {
        bad.push(format!("seed {seed}: breakdown keys differ"));
        return bad;
    }
    for (k, want) in by_cat {
        compare(&format!("seed {seed} category {k}"), &report.by_category[&k], want, &mut bad);
    }
    for (k, want) in by_type {
        compare(&format!("seed {seed} type {k}"), &report.by_error_type[&k], want, &mut bad);
    }
    bad
}

#[test]
fn metrics_equal_json_recomputation() {
    let bad: Vec<String> = (0..1000).flat_map(oracle_mismatches).collect();
    assert!(bad.is_empty(), "{bad:#?}");
}
