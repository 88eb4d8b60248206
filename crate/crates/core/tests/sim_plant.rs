use std::collections::HashMap;
use std::sync::Mutex;

use closedloop::controller::{render_baseline, BaselineStrategy, ControlInput};
use closedloop::detector::{detect, sc_severity, ModalityObservations, ModalitySet};
use closedloop::judge::check_oscillation;
use closedloop::metrics::{compute_metrics, embedded_tasks, MetricsOptions};
use closedloop::plant::{Metered, Plant, PlantError};
use closedloop::runner::{run, RunConfig};
use closedloop::sim::{synthetic_tasks, ErrorDistribution, LengthRange, ObservationNoise, SimPlant, SimPlantConfig};
use closedloop::trajectory::Termination;
use closedloop::{BenchTask, ErrorType, Hyperparameters, Method, ReasoningChain, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noiseless(error: ErrorType, len: usize, seed: u64) -> SimPlantConfig {
    SimPlantConfig {
        seed,
        initial_error_distribution: ErrorDistribution::only(error),
        chain_length: LengthRange { min: len, max: len },
        ..SimPlantConfig::default()
    }
    .noiseless()
}

/// Every (type, location) mismatch over all error types and lengths 2..=6,
/// plus the number of tasks checked.
pub fn zero_noise_mismatches(per_cell: usize) -> (usize, Vec<String>) {
    let params = Hyperparameters::default();
    let mut checked = 0;
    let mut bad = vec![];
    for error in [ErrorType::Arithmetic, ErrorType::LogicGap, ErrorType::Premise, ErrorType::None] {
        for len in 2..=6 {
            let cfg = noiseless(error, len, 11);
            let plant = SimPlant::new(cfg.clone()).unwrap();
            for task in synthetic_tasks(&cfg, per_cell) {
                let chain = plant.generate(&task).unwrap().value;
                let hidden = plant.hidden_state(&task.id).unwrap().true_error;
                let obs = plant.observe(&task, &chain, params.k, ModalitySet::ALL).unwrap().value;
                let sig = detect(&obs, &params).unwrap();
                let got = sig.location.map(|l| (sig.error_type, l));
                let want = hidden.map(|h| (h.error_type, h.location));
                if chain.len() != len || got != want {
                    bad.push(format!("{} {error} len {len}: got {got:?}, want {want:?}", task.id));
                }
                checked += 1;
            }
        }
    }
    (checked, bad)
}

#[test]
fn zero_noise_detection_recovers_the_hidden_error() {
    let (checked, bad) = zero_noise_mismatches(60);
    assert_eq!(checked, 4 * 5 * 60);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn arithmetic_at_step_two_with_two_of_five_disagreeing() {
    let cfg = noiseless(ErrorType::Arithmetic, 4, 5);
    let plant = SimPlant::new(cfg.clone()).unwrap();
    let params = Hyperparameters::default();
    let mut seen = false;
    for task in synthetic_tasks(&cfg, 40) {
        if task.annotation.unwrap().location != 2 {
            continue;
        }
        seen = true;
        let chain = plant.generate(&task).unwrap().value;
        let obs = plant.observe(&task, &chain, 5, ModalitySet::ALL).unwrap().value;
        let samples = obs.samples.as_ref().unwrap();
        assert_eq!(samples.iter().filter(|s| **s == task.gold_answer).count(), 2);
        let sig = detect(&obs, &params).unwrap();
        assert_eq!((sig.error_type, sig.location), (ErrorType::Arithmetic, Some(2)));
    }
    assert!(seen);
}

fn type_accuracy(level: f64) -> f64 {
    let params = Hyperparameters::default();
    let mut cfg = SimPlantConfig {
        seed: 21,
        initial_error_distribution: ErrorDistribution {
            arithmetic: 1.0 / 3.0,
            logic_gap: 1.0 / 3.0,
            premise: 1.0 / 3.0,
            none: 0.0,
        },
        ..SimPlantConfig::default()
    };
    cfg.observation_noise = ObservationNoise {
        confidence_jitter: 12.0 * level,
        disagreement_rate: 0.4,
        stochastic_disagreement: level > 0.0,
        spurious_rate: 0.12 * level,
    };
    let plant = SimPlant::new(cfg.clone()).unwrap();
    let tasks = synthetic_tasks(&cfg, 1000);
    let hits = tasks
        .iter()
        .filter(|t| {
            let chain = plant.generate(t).unwrap().value;
            let obs = plant.observe(t, &chain, params.k, ModalitySet::ALL).unwrap().value;
            detect(&obs, &params).unwrap().error_type == t.error_label()
        })
        .count();
    hits as f64 / tasks.len() as f64
}

#[test]
fn type_accuracy_degrades_with_noise() {
    let acc: Vec<f64> = [0.0, 0.5, 1.0, 1.5, 2.0].into_iter().map(type_accuracy).collect();
    assert_eq!(acc[0], 1.0);
    assert!(acc.windows(2).all(|w| w[1] <= w[0]), "{acc:?}");
    assert!(acc[4] < acc[0] - 0.1, "{acc:?}");
}

fn run_all(method: Method, cfg: &SimPlantConfig, tasks: &[BenchTask]) -> Vec<Trajectory> {
    let rc = RunConfig::new(method, Hyperparameters::default(), cfg.seed);
    tasks.iter().map(|t| run(t, &SimPlant::new(cfg.clone()).unwrap(), &rc).unwrap()).collect()
}

fn accuracy(ts: &[Trajectory]) -> f64 {
    compute_metrics(ts, &embedded_tasks(ts), MetricsOptions::default()).unwrap().overall.accuracy
}

#[test]
fn accuracy_is_nondecreasing_in_matched_fix_probability() {
    let base = SimPlantConfig { seed: 3, ..SimPlantConfig::default() };
    let tasks = synthetic_tasks(&base, 500);
    let acc: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .into_iter()
        .map(|p| {
            let cfg = SimPlantConfig { fix_probability_matched: p, ..base.clone() };
            accuracy(&run_all(Method::Cybercorrect, &cfg, &tasks))
        })
        .collect();
    assert!(acc.windows(2).all(|w| w[1] >= w[0]), "{acc:?}");
    assert!(acc[4] > acc[0]);
}

#[test]
fn forced_oscillation_shows_up_as_aba_or_is_cut_by_rollback() {
    let cfg = SimPlantConfig {
        seed: 8,
        initial_error_distribution: ErrorDistribution::only(ErrorType::Arithmetic),
        fix_probability_matched: 0.0,
        fix_probability_generic: 0.0,
        overshoot_probability: 1.0,
        oscillation_bias: 1.0,
        ..SimPlantConfig::default()
    }
    .noiseless();
    let tasks = synthetic_tasks(&cfg, 100);
    let mut oscillations = 0;
    for t in run_all(Method::Cybercorrect, &cfg, &tasks) {
        if t.entries[1].decision == closedloop::judge::JudgeDecision::OvershootRollback {
            continue;
        }
        let answers: Vec<&str> = t.entries.iter().map(|e| e.raw_answer()).collect();
        // a same-type overshoot keeps the severity, so the loop may stop at t=1
        if answers[1] == answers[0] || t.termination == Termination::Converged {
            continue;
        }
        assert_eq!(t.termination, Termination::Oscillation, "{answers:?}");
        assert_eq!(t.entries.len(), 3);
        assert!(check_oscillation(&[answers[2], answers[1], answers[0]]).unwrap());
        oscillations += 1;
    }
    assert!(oscillations > 10);

    // the plain plant-level trace with a generic instruction
    let plant = SimPlant::new(cfg.clone()).unwrap();
    let generic = render_baseline(BaselineStrategy::NaiveRetry);
    let task = &tasks[0];
    let y0 = plant.generate(task).unwrap().value;
    let y1 = plant.correct(task, &y0, &generic).unwrap().value;
    let y2 = plant.correct(task, &y1, &generic).unwrap().value;
    let a = [&y2.final_answer, &y1.final_answer, &y0.final_answer];
    assert!(check_oscillation(&a).unwrap(), "{a:?}");
}

#[test]
fn runs_are_reproducible_and_schedule_independent() {
    let cfg = SimPlantConfig { seed: 99, ..SimPlantConfig::default() };
    let tasks = synthetic_tasks(&cfg, 120);
    let rc = RunConfig::new(Method::Cybercorrect, Hyperparameters::default(), 99);
    let sequential = run_all(Method::Cybercorrect, &cfg, &tasks);
    assert_eq!(sequential, run_all(Method::Cybercorrect, &cfg, &tasks));

    // one shared plant, tasks spread over threads in reverse order
    let shared = SimPlant::new(cfg.clone()).unwrap();
    let results = Mutex::new(HashMap::new());
    std::thread::scope(|s| {
        for chunk in tasks.rchunks(17) {
            let (shared, results, rc) = (&shared, &results, &rc);
            s.spawn(move || {
                for t in chunk.iter().rev() {
                    let out = run(t, shared, rc).unwrap();
                    results.lock().unwrap().insert(t.id.clone(), out);
                }
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    for t in &sequential {
        let other = results.remove(t.task_id()).unwrap();
        assert_eq!(t.to_json_line(), other.to_json_line());
    }
}

/// Keeps every observation the inner plant returned, keyed by chain.
struct Recording<P> {
    inner: P,
    seen: Mutex<Vec<(ReasoningChain, ModalityObservations)>>,
}

impl<P: Plant> Plant for Recording<P> {
    fn generate(&self, task: &BenchTask) -> Result<Metered<ReasoningChain>, PlantError> {
        self.inner.generate(task)
    }

    fn observe(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        k: usize,
        needs: ModalitySet,
    ) -> Result<Metered<ModalityObservations>, PlantError> {
        let out = self.inner.observe(task, chain, k, needs)?;
        self.seen.lock().unwrap().push((chain.clone(), out.value.clone()));
        Ok(out)
    }

    fn correct(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        input: &ControlInput,
    ) -> Result<Metered<ReasoningChain>, PlantError> {
        self.inner.correct(task, chain, input)
    }
}

/// Entries whose Lite severity differs from `sc_severity` of the samples the
/// plant returned, plus the number of entries checked.
pub fn lite_mismatches(tasks: usize) -> (usize, Vec<String>) {
    let cfg = SimPlantConfig { seed: 4, ..SimPlantConfig::default() };
    let rc = RunConfig::new(Method::CybercorrectLite, Hyperparameters::default(), 4);
    let mut entries = 0;
    let mut bad = vec![];
    for task in synthetic_tasks(&cfg, tasks) {
        let plant = Recording { inner: SimPlant::new(cfg.clone()).unwrap(), seen: Mutex::new(vec![]) };
        let t = run(&task, &plant, &rc).unwrap();
        let seen = plant.seen.into_inner().unwrap();
        if seen.len() != t.entries.len() {
            bad.push(format!("{}: {} observations for {} entries", task.id, seen.len(), t.entries.len()));
            continue;
        }
        for (e, (chain, obs)) in t.entries.iter().zip(&seen) {
            let sc = obs.samples.as_deref().and_then(|s| sc_severity(s).ok());
            let extra = obs.step_confidences.is_some() || obs.entailment.is_some();
            if &e.version != chain || extra || sc != Some(e.raw_severity) {
                bad.push(format!("{} t={}: severity {} vs sc {sc:?}", task.id, e.iteration, e.raw_severity));
            }
            entries += 1;
        }
    }
    (entries, bad)
}

#[test]
fn lite_severity_is_exactly_self_consistency() {
    let (entries, bad) = lite_mismatches(300);
    assert!(entries > 300);
    assert!(bad.is_empty(), "{bad:#?}");
}

/// Runs `runs` fuzzed loops over random plant and judge settings and reports
/// every accepted-severity rise larger than delta.
pub fn rollback_violations(runs: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut bad = vec![];
    let mut done = 0;
    while done < runs {
        let a: f64 = rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(0.0..1.0 - a);
        let c: f64 = rng.random_range(0.0..1.0 - a - b);
        let cfg = SimPlantConfig {
            seed: rng.random(),
            initial_error_distribution: ErrorDistribution {
                arithmetic: a,
                logic_gap: b,
                premise: c,
                none: 1.0 - a - b - c,
            },
            chain_length: LengthRange { min: 2, max: rng.random_range(2..=8) },
            fix_probability_matched: rng.random_range(0.0..=1.0),
            fix_probability_generic: rng.random_range(0.0..=1.0),
            overshoot_probability: rng.random_range(0.0..=1.0),
            oscillation_bias: rng.random_range(0.0..=1.0),
            observation_noise: ObservationNoise {
                confidence_jitter: rng.random_range(0.0..25.0),
                disagreement_rate: rng.random_range(0.0..=1.0),
                stochastic_disagreement: rng.random(),
                spurious_rate: rng.random_range(0.0..0.3),
            },
            ..SimPlantConfig::default()
        };
        let delta = rng.random_range(0.0..0.3);
        let params = Hyperparameters {
            sigma: rng.random_range(0.0..0.5),
            delta,
            epsilon: rng.random_range(0.0..=delta),
            t_max: rng.random_range(1..=6),
            ..Hyperparameters::default()
        };
        let method = if rng.random_bool(0.8) { Method::Cybercorrect } else { Method::CybercorrectLite };
        let rc = RunConfig::new(method, params, cfg.seed);
        let plant = SimPlant::new(cfg.clone()).unwrap();
        for task in synthetic_tasks(&cfg, 10.min(runs - done)) {
            let t = run(&task, &plant, &rc).unwrap();
            let s = t.accepted_severities();
            if s.windows(2).any(|w| w[1] > w[0] + t.params.delta) {
                bad.push(format!("seed {} {}: {s:?} delta {}", cfg.seed, task.id, t.params.delta));
            }
            done += 1;
        }
    }
    bad
}

#[test]
fn accepted_severity_never_rises_by_more_than_delta() {
    let bad = rollback_violations(2000);
    assert!(bad.is_empty(), "{bad:#?}");
}

#[test]
fn sample_tasks_run_on_the_sim_plant() {
    let cfg = SimPlantConfig::default();
    let tasks = closedloop::task::sample_tasks();
    for m in Method::ALL {
        let ts = run_all(m, &cfg, &tasks);
        assert_eq!(ts.len(), 24);
    }
}
