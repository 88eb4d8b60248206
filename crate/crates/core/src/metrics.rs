//! The five evaluation metrics over a set of trajectories, with per-category
//! and per-error-type breakdowns.
//!
//! Per-trajectory predicates:
//!
//! * correct: final answer equals gold.
//! * initially wrong: the first output's answer differs from gold.
//! * converged: the run stopped at the clean gate, or its last two entries
//!   satisfy |raw s_T - accepted s_(T-1)| < epsilon.
//! * overshoot: some raw severity exceeds its predecessor by more than
//!   delta. Raw severities are pre-rollback, so a rolled-back overshoot still
//!   counts. The accepted-severity variant is available on request.
//! * oscillation: for some t >= 2 the raw answer at t equals the accepted
//!   answer at t-2 and differs from the accepted answer at t-1.
//!
//! Epsilon and delta are taken from each trajectory's own parameters.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::answers_equal;
use crate::runner::Method;
use crate::task::BenchTask;
use crate::trajectory::{Termination, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no trajectories to aggregate")]
    Empty,
    #[error("no trajectory for task {0:?}")]
    MissingTrajectory(String),
    #[error("more than one trajectory for task {0:?}")]
    DuplicateTrajectory(String),
    #[error("trajectory for task {task_id:?} does not match the task set: {reason}")]
    TaskMismatch { task_id: String, reason: String },
    #[error("trajectories mix methods {0} and {1}")]
    MixedMethods(Method, Method),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricsOptions {
    /// Also report OR over accepted (post-rollback) severities.
    pub accepted_overshoot: bool,
}

/// Raw counts; merging counts of disjoint partitions and then deriving
/// rates gives the same report as counting everything at once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n: u64,
    pub correct: u64,
    pub initially_wrong: u64,
    pub corrected: u64,
    pub converged: u64,
    pub overshoot: u64,
    pub overshoot_accepted: u64,
    pub oscillation: u64,
    pub method_calls: u64,
}

impl Counts {
    pub fn merge(&mut self, other: &Counts) {
        self.n += other.n;
        self.correct += other.correct;
        self.initially_wrong += other.initially_wrong;
        self.corrected += other.corrected;
        self.converged += other.converged;
        self.overshoot += other.overshoot;
        self.overshoot_accepted += other.overshoot_accepted;
        self.oscillation += other.oscillation;
        self.method_calls += other.method_calls;
    }

    fn add(&mut self, t: &Trajectory, gold: &str) {
        let correct = answers_equal(&t.final_answer, gold);
        let initially_wrong = !answers_equal(t.initial_answer(), gold);
        self.n += 1;
        self.correct += u64::from(correct);
        self.initially_wrong += u64::from(initially_wrong);
        self.corrected += u64::from(initially_wrong && correct);
        self.converged += u64::from(converged(t));
        self.overshoot += u64::from(overshoot_raw(t));
        self.overshoot_accepted += u64::from(overshoot_accepted(t));
        self.oscillation += u64::from(oscillated(t));
        self.method_calls += t.calls.method;
    }

    pub fn rates(&self, options: MetricsOptions) -> Rates {
        let n = self.n as f64;
        Rates {
            n: self.n,
            accuracy: self.correct as f64 / n,
            csr: (self.initially_wrong > 0).then(|| self.corrected as f64 / self.initially_wrong as f64),
            cr: self.converged as f64 / n,
            or_rate: self.overshoot as f64 / n,
            oscr: self.oscillation as f64 / n,
            or_rate_accepted: options.accepted_overshoot.then(|| self.overshoot_accepted as f64 / n),
            calls_per_task: self.method_calls as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub n: u64,
    pub accuracy: f64,
    /// Absent when no task started out wrong.
    pub csr: Option<f64>,
    pub cr: f64,
    pub or_rate: f64,
    pub oscr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub or_rate_accepted: Option<f64>,
    pub calls_per_task: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: Method,
    pub overall: Rates,
    pub by_category: BTreeMap<String, Rates>,
    pub by_error_type: BTreeMap<String, Rates>,
    pub counts: Counts,
}

pub fn converged(t: &Trajectory) -> bool {
    if t.termination == Termination::Clean {
        return true;
    }
    match t.entries.as_slice() {
        [.., prev, last] => (last.raw_severity - prev.accepted_severity).abs() < t.params.epsilon,
        _ => false,
    }
}

pub fn overshoot_raw(t: &Trajectory) -> bool {
    t.entries.windows(2).any(|w| w[1].raw_severity > w[0].raw_severity + t.params.delta)
}

pub fn overshoot_accepted(t: &Trajectory) -> bool {
    t.entries.windows(2).any(|w| w[1].accepted_severity > w[0].accepted_severity + t.params.delta)
}

pub fn oscillated(t: &Trajectory) -> bool {
    t.entries.windows(3).any(|w| {
        let a = w[2].raw_answer();
        a == w[0].accepted_answer && a != w[1].accepted_answer
    })
}

/// Metrics for one method's trajectories against `tasks`; every task needs
/// exactly one trajectory.
pub fn compute_metrics<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    tasks: &[BenchTask],
    options: MetricsOptions,
) -> Result<MetricsReport, MetricsError> {
    let mut by_id: HashMap<&str, &Trajectory> = HashMap::new();
    let mut method = None;
    for t in trajectories {
        match method {
            None => method = Some(t.method),
            Some(m) if m != t.method => return Err(MetricsError::MixedMethods(m, t.method)),
            Some(_) => {}
        }
        if by_id.insert(t.task_id(), t).is_some() {
            return Err(MetricsError::DuplicateTrajectory(t.task_id().to_string()));
        }
    }
    let method = method.ok_or(MetricsError::Empty)?;
    if tasks.is_empty() {
        return Err(MetricsError::Empty);
    }
    if by_id.len() > tasks.len() {
        let known: std::collections::HashSet<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
        let stray = by_id.keys().find(|id| !known.contains(*id)).expect("more ids than tasks");
        return Err(MetricsError::TaskMismatch {
            task_id: stray.to_string(),
            reason: "task is not in the task set".into(),
        });
    }

    let mut total = Counts::default();
    let mut by_category: BTreeMap<String, Counts> = BTreeMap::new();
    let mut by_error_type: BTreeMap<String, Counts> = BTreeMap::new();
    for task in tasks {
        let t = by_id.get(task.id.as_str()).ok_or_else(|| MetricsError::MissingTrajectory(task.id.clone()))?;
        if !answers_equal(&t.task.gold_answer, &task.gold_answer) {
            return Err(MetricsError::TaskMismatch {
                task_id: task.id.clone(),
                reason: format!("gold {:?} in trajectory, {:?} in task set", t.task.gold_answer, task.gold_answer),
            });
        }
        let mut one = Counts::default();
        one.add(t, &task.gold_answer);
        total.merge(&one);
        by_category.entry(task.category.code().to_string()).or_default().merge(&one);
        by_error_type.entry(task.error_label().as_str().to_string()).or_default().merge(&one);
    }

    Ok(MetricsReport {
        method,
        overall: total.rates(options),
        by_category: by_category.into_iter().map(|(k, c)| (k, c.rates(options))).collect(),
        by_error_type: by_error_type.into_iter().map(|(k, c)| (k, c.rates(options))).collect(),
        counts: total,
    })
}

/// Splits trajectories by method, keeping first-seen task order.
pub fn group_by_method(trajectories: &[Trajectory]) -> BTreeMap<Method, Vec<&Trajectory>> {
    let mut out: BTreeMap<Method, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        out.entry(t.method).or_default().push(t);
    }
    out
}

/// Tasks embedded in the trajectories, deduplicated by id in first-seen
/// order.
pub fn embedded_tasks<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Vec<BenchTask> {
    let mut seen = std::collections::HashSet::new();
    trajectories.into_iter().filter(|t| seen.insert(t.task.id.clone())).map(|t| t.task.clone()).collect()
}

/// One report per method present, each against the tasks embedded in that
/// method's trajectories.
pub fn compute_all(trajectories: &[Trajectory], options: MetricsOptions) -> Result<Vec<MetricsReport>, MetricsError> {
    if trajectories.is_empty() {
        return Err(MetricsError::Empty);
    }
    group_by_method(trajectories)
        .into_values()
        .map(|group| {
            let tasks = embedded_tasks(group.iter().copied());
            compute_metrics(group, &tasks, options)
        })
        .collect()
}

/// Answer a trajectory holds after `iteration` correction rounds; finished
/// runs carry their final answer forward.
pub fn answer_at(t: &Trajectory, iteration: usize) -> &str {
    if iteration + 1 >= t.entries.len() {
        &t.final_answer
    } else {
        &t.entries[iteration].accepted_answer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationAccuracy {
    pub method: Method,
    pub iteration: usize,
    pub n: u64,
    pub accuracy: f64,
}

/// Accuracy after each iteration 0..=t_max, per method.
pub fn accuracy_by_iteration(trajectories: &[Trajectory]) -> Vec<IterationAccuracy> {
    let mut rows = Vec::new();
    for (method, group) in group_by_method(trajectories) {
        let t_max = group.iter().map(|t| t.params.t_max).max().unwrap_or(0);
        for iteration in 0..=t_max {
            let correct = group.iter().filter(|t| answers_equal(answer_at(t, iteration), &t.task.gold_answer)).count();
            rows.push(IterationAccuracy {
                method,
                iteration,
                n: group.len() as u64,
                accuracy: correct as f64 / group.len() as f64,
            });
        }
    }
    rows
}
