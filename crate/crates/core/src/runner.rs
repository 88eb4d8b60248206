//! The correction loop and the baseline strategies, all producing
//! [`Trajectory`] records with the same layout.
//!
//! One iteration of the loop: render a control input from the accepted
//! version's signal, let the plant revise that version, sense the revision,
//! then let the judge decide. Rollback replaces the revision with the
//! previously accepted version; the buffer records one accepted version per
//! iteration either way.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{control_law_with, render_baseline, BaselineStrategy, ControlInput, TemplateSet};
use crate::detector::{detect, majority_answer, DetectorError, ModalityObservations, ModalitySet};
use crate::judge::{judge, BufferEntry, JudgeDecision, JudgeState, VersionBuffer};
use crate::params::{ConfigError, Hyperparameters};
use crate::plant::{Plant, PlantError};
use crate::task::BenchTask;
use crate::trajectory::{CallCounts, Termination, Trajectory, TrajectoryEntry, TRAJECTORY_SCHEMA_VERSION};
use crate::types::{ErrorSignal, ReasoningChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NoCorrection,
    NaiveRetry,
    SelfConsistency,
    SelfRefineGeneric,
    Cybercorrect,
    CybercorrectLite,
}

impl Method {
    /// Comparison-table order.
    pub const ALL: [Method; 6] = [
        Method::NoCorrection,
        Method::NaiveRetry,
        Method::SelfConsistency,
        Method::SelfRefineGeneric,
        Method::Cybercorrect,
        Method::CybercorrectLite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NoCorrection => "no_correction",
            Method::NaiveRetry => "naive_retry",
            Method::SelfConsistency => "self_consistency",
            Method::SelfRefineGeneric => "self_refine_generic",
            Method::Cybercorrect => "cybercorrect",
            Method::CybercorrectLite => "cybercorrect_lite",
        }
    }

    pub fn is_baseline(self) -> bool {
        !matches!(self, Method::Cybercorrect | Method::CybercorrectLite)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().replace('-', "_").to_ascii_lowercase();
        Method::ALL.into_iter().find(|m| m.as_str() == wanted).ok_or_else(|| {
            let names: Vec<_> = Method::ALL.iter().map(|m| m.as_str()).collect();
            format!("unknown method {s:?}; expected one of {}", names.join(", "))
        })
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("plant failure: {source}")]
    Plant { source: PlantError, partial: Box<Trajectory> },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0} cannot be run by this entry point")]
    WrongMethod(Method),
}

impl RunError {
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            RunError::Plant { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Everything a single run needs besides the task and the plant.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    /// Effective hyperparameters; presets are already applied.
    pub params: Hyperparameters,
    pub seed: u64,
    pub modalities: ModalitySet,
    pub templates: TemplateSet,
}

impl RunConfig {
    /// Applies method presets: the Lite variant senses with self-consistency
    /// only under weights (1, 0, 0) and a two-iteration budget; the
    /// self-consistency baseline only needs samples.
    pub fn new(method: Method, params: Hyperparameters, seed: u64) -> Self {
        let (params, modalities) = match method {
            Method::CybercorrectLite => (params.into_lite(), ModalitySet::SELF_CONSISTENCY_ONLY),
            Method::SelfConsistency => (params, ModalitySet::SELF_CONSISTENCY_ONLY),
            _ => (params, ModalitySet::ALL),
        };
        RunConfig { method, params, seed, modalities, templates: TemplateSet::default() }
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        if self.method == Method::CybercorrectLite
            && (self.params.weights != crate::params::Weights::SELF_CONSISTENCY_ONLY
                || self.params.t_max != 2
                || self.modalities != ModalitySet::SELF_CONSISTENCY_ONLY)
        {
            return Err(ConfigError::Invalid(
                "cybercorrect_lite requires weights (1, 0, 0), t_max 2 and self-consistency sensing".into(),
            ));
        }
        Ok(())
    }
}

struct Sensed {
    signal: ErrorSignal,
    observations: ModalityObservations,
    calls: u32,
}

fn sense<P: Plant + ?Sized>(
    plant: &P,
    task: &BenchTask,
    chain: &ReasoningChain,
    config: &RunConfig,
) -> Result<Sensed, PlantError> {
    let metered = plant.observe(task, chain, config.params.k, config.modalities)?;
    let observations = metered.value;
    if observations.step_count() != chain.len() {
        return Err(PlantError::InvalidOutput(format!(
            "observations cover {} steps, chain has {}",
            observations.step_count(),
            chain.len()
        )));
    }
    if observations.validate(Some(config.params.k)).is_err() {
        return Err(PlantError::InvalidOutput(observations.validate(Some(config.params.k)).unwrap_err().to_string()));
    }
    let signal = detect(&observations, &config.params).map_err(|e| match e {
        DetectorError::NoUsableModality => PlantError::AllModalitiesFailed(
            observations
                .failures
                .iter()
                .map(|f| format!("{:?}: {}", f.modality, f.message))
                .collect::<Vec<_>>()
                .join("; "),
        ),
        other => PlantError::InvalidOutput(other.to_string()),
    })?;
    Ok(Sensed { signal, observations, calls: metered.calls })
}

fn checked(chain: ReasoningChain) -> Result<ReasoningChain, PlantError> {
    chain.validate().map_err(|e| PlantError::InvalidOutput(e.to_string()))?;
    Ok(chain)
}

struct Recorder<'a> {
    task: &'a BenchTask,
    config: &'a RunConfig,
    entries: Vec<TrajectoryEntry>,
    calls: CallCounts,
}

impl<'a> Recorder<'a> {
    fn new(task: &'a BenchTask, config: &'a RunConfig) -> Self {
        Recorder { task, config, entries: Vec::new(), calls: CallCounts::default() }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        version: ReasoningChain,
        sensed: &Sensed,
        accepted: (f64, String, usize),
        control_input: Option<ControlInput>,
        decision: JudgeDecision,
        calls: u32,
    ) {
        let (accepted_severity, accepted_answer, accepted_from) = accepted;
        self.entries.push(TrajectoryEntry {
            iteration: self.entries.len(),
            version,
            raw_severity: sensed.signal.severity,
            accepted_severity,
            accepted_answer,
            accepted_from,
            error_signal: sensed.signal.clone(),
            control_input,
            decision,
            calls,
            sensing_failures: sensed.observations.failures.clone(),
        });
    }

    fn push_self_accepted(
        &mut self,
        version: ReasoningChain,
        sensed: &Sensed,
        control_input: Option<ControlInput>,
        decision: JudgeDecision,
        calls: u32,
    ) {
        let idx = self.entries.len();
        let accepted = (sensed.signal.severity, version.final_answer.clone(), idx);
        self.push(version, sensed, accepted, control_input, decision, calls);
    }

    fn set_last_decision(&mut self, decision: JudgeDecision) {
        if let Some(last) = self.entries.last_mut() {
            last.decision = decision;
        }
    }

    fn finish(self, termination: Termination, final_version: usize, final_answer: Option<String>) -> Trajectory {
        let final_answer = final_answer.unwrap_or_else(|| self.entries[final_version].version.final_answer.clone());
        Trajectory {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            task: self.task.clone(),
            method: self.config.method,
            run_label: None,
            seed: self.config.seed,
            params: self.config.params.clone(),
            entries: self.entries,
            termination,
            final_version,
            final_answer,
            calls: self.calls,
            config: None,
            started_at: None,
            finished_at: None,
        }
    }

    fn abort(self, source: PlantError) -> RunError {
        let final_version = self.entries.len().saturating_sub(1);
        let final_answer = self.entries.last().map(|e| e.version.final_answer.clone()).unwrap_or_default();
        let partial = Trajectory {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            task: self.task.clone(),
            method: self.config.method,
            run_label: None,
            seed: self.config.seed,
            params: self.config.params.clone(),
            entries: self.entries,
            termination: Termination::Aborted,
            final_version,
            final_answer,
            calls: self.calls,
            config: None,
            started_at: None,
            finished_at: None,
        };
        RunError::Plant { source, partial: Box::new(partial) }
    }
}

macro_rules! attempt {
    ($rec:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => return Err($rec.abort(err)),
        }
    };
}

/// Runs either loop variant or baseline according to `config.method`.
pub fn run<P: Plant + ?Sized>(task: &BenchTask, plant: &P, config: &RunConfig) -> Result<Trajectory, RunError> {
    if config.method.is_baseline() {
        run_baseline(task, plant, config)
    } else {
        run_correction(task, plant, config)
    }
}

/// Closed-loop correction with typed control, convergence judging and
/// rollback.
pub fn run_correction<P: Plant + ?Sized>(
    task: &BenchTask,
    plant: &P,
    config: &RunConfig,
) -> Result<Trajectory, RunError> {
    if config.method.is_baseline() {
        return Err(RunError::WrongMethod(config.method));
    }
    config.validate()?;
    let params = &config.params;
    let mut rec = Recorder::new(task, config);

    let generated = attempt!(rec, plant.generate(task));
    let y0 = attempt!(rec, checked(generated.value));
    let sensed = attempt!(rec, sense(plant, task, &y0, config));
    let calls0 = generated.calls + sensed.calls;
    rec.calls.method += u64::from(calls0);

    let initial_clean = sensed.signal.is_clean();
    let decision = if initial_clean {
        JudgeDecision::Clean
    } else if params.t_max == 0 {
        JudgeDecision::MaxIterations
    } else {
        JudgeDecision::Continue
    };
    rec.push_self_accepted(y0.clone(), &sensed, None, decision, calls0);
    if initial_clean {
        return Ok(rec.finish(Termination::Clean, 0, None));
    }
    if params.t_max == 0 {
        return Ok(rec.finish(Termination::MaxIterations, 0, None));
    }

    let mut buffer = VersionBuffer::new(y0, sensed.signal, params.t_max);
    // buffer index -> entry index holding that version's raw output
    let mut origins = vec![0usize];

    for t in 1..=params.t_max {
        let current = buffer.last().clone();
        let input = control_law_with(&current.signal, &config.templates)
            .expect("accepted version carries an actionable signal");
        let corrected = attempt!(rec, plant.correct(task, &current.version, &input));
        let y = attempt!(rec, checked(corrected.value));
        let sensed = attempt!(rec, sense(plant, task, &y, config));
        let calls = corrected.calls + sensed.calls;
        rec.calls.method += u64::from(calls);

        let decision = judge(
            &JudgeState { t, severity: sensed.signal.severity, answer: &y.final_answer, buffer: &buffer },
            params,
        );

        match decision {
            JudgeDecision::Converged => {
                rec.push_self_accepted(y, &sensed, Some(input), decision, calls);
                return Ok(rec.finish(Termination::Converged, t, None));
            }
            JudgeDecision::Oscillation { best_index } => {
                let best = buffer.get(best_index).expect("judge returns a buffered index");
                let origin = origins[best_index];
                let accepted = (best.severity, best.version.final_answer.clone(), origin);
                rec.push(y, &sensed, accepted, Some(input), decision, calls);
                return Ok(rec.finish(Termination::Oscillation, origin, None));
            }
            JudgeDecision::OvershootRollback => {
                let origin = *origins.last().expect("origins track the buffer");
                let accepted = (current.severity, current.version.final_answer.clone(), origin);
                rec.push(y, &sensed, accepted, Some(input), decision, calls);
                buffer.push(BufferEntry { iteration: t, ..current }).expect("buffer sized for t_max + 1 entries");
                origins.push(origin);
            }
            JudgeDecision::Continue | JudgeDecision::MaxIterations | JudgeDecision::Clean => {
                let clean = sensed.signal.is_clean();
                rec.push_self_accepted(y.clone(), &sensed, Some(input), decision, calls);
                buffer
                    .push(BufferEntry {
                        severity: sensed.signal.severity,
                        version: y,
                        iteration: t,
                        signal: sensed.signal.clone(),
                    })
                    .expect("buffer sized for t_max + 1 entries");
                origins.push(t);
                if clean {
                    rec.set_last_decision(JudgeDecision::Clean);
                    return Ok(rec.finish(Termination::Clean, t, None));
                }
            }
        }
    }
    let origin = *origins.last().expect("origins track the buffer");
    Ok(rec.finish(Termination::MaxIterations, origin, None))
}

/// Baselines: a single pass, majority voting, or a fixed number of generic
/// correction rounds. Severity is sensed every round for scoring only.
pub fn run_baseline<P: Plant + ?Sized>(
    task: &BenchTask,
    plant: &P,
    config: &RunConfig,
) -> Result<Trajectory, RunError> {
    if !config.method.is_baseline() {
        return Err(RunError::WrongMethod(config.method));
    }
    config.validate()?;
    let params = &config.params;
    let mut rec = Recorder::new(task, config);

    let generated = attempt!(rec, plant.generate(task));
    let y0 = attempt!(rec, checked(generated.value));
    let sensed = attempt!(rec, sense(plant, task, &y0, config));
    rec.calls.method += u64::from(generated.calls);

    let strategy = match config.method {
        Method::NoCorrection => {
            rec.calls.logging += u64::from(sensed.calls);
            rec.push_self_accepted(y0, &sensed, None, JudgeDecision::MaxIterations, generated.calls + sensed.calls);
            return Ok(rec.finish(Termination::SinglePass, 0, None));
        }
        Method::SelfConsistency => {
            rec.calls.method += u64::from(sensed.calls);
            let samples = sensed.observations.samples.clone().unwrap_or_default();
            let majority =
                majority_answer(&samples).map(|(a, _)| a.to_string()).unwrap_or_else(|| y0.final_answer.clone());
            rec.push_self_accepted(y0, &sensed, None, JudgeDecision::MaxIterations, generated.calls + sensed.calls);
            return Ok(rec.finish(Termination::SinglePass, 0, Some(majority)));
        }
        Method::NaiveRetry => BaselineStrategy::NaiveRetry,
        Method::SelfRefineGeneric => BaselineStrategy::SelfRefineGeneric,
        other => return Err(RunError::WrongMethod(other)),
    };

    rec.calls.logging += u64::from(sensed.calls);
    let first_decision = if params.t_max == 0 { JudgeDecision::MaxIterations } else { JudgeDecision::Continue };
    rec.push_self_accepted(y0.clone(), &sensed, None, first_decision, generated.calls + sensed.calls);

    let input = render_baseline(strategy);
    let mut previous = y0;
    for t in 1..=params.t_max {
        let corrected = attempt!(rec, plant.correct(task, &previous, &input));
        let y = attempt!(rec, checked(corrected.value));
        let sensed = attempt!(rec, sense(plant, task, &y, config));
        rec.calls.method += u64::from(corrected.calls);
        rec.calls.logging += u64::from(sensed.calls);
        let calls = corrected.calls + sensed.calls;

        if strategy == BaselineStrategy::SelfRefineGeneric && y == previous {
            rec.push_self_accepted(y, &sensed, Some(input), JudgeDecision::Converged, calls);
            return Ok(rec.finish(Termination::Unchanged, t, None));
        }
        let decision = if t == params.t_max { JudgeDecision::MaxIterations } else { JudgeDecision::Continue };
        rec.push_self_accepted(y.clone(), &sensed, Some(input.clone()), decision, calls);
        previous = y;
    }
    let last = rec.entries.len() - 1;
    Ok(rec.finish(Termination::MaxIterations, last, None))
}
