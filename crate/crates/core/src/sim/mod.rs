//! Seeded simulated plant with a hidden ground-truth error per chain.
//!
//! Chains are running computations (see [`chain`]) whose one optional error
//! is known to the plant. Observations are emitted consistently with that
//! hidden error, and corrections remove it with a probability that depends on
//! whether the instruction names the right error type.
//!
//! Every random draw comes from a stream keyed by the config seed and the
//! task id, so a run is a pure function of (task, config, control inputs),
//! independent of thread scheduling. Observation draws are further keyed by
//! the chain's content, so the same chain always yields the same
//! observations.

mod chain;
pub mod rng;

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::controller::{ControlInput, CorrectionMode};
use crate::detector::{ModalityObservations, ModalitySet};
use crate::params::ConfigError;
use crate::plant::{sensing_calls, Metered, Plant, PlantError};
use crate::task::{Annotation, BenchTask, Category, SeededChain, TASK_SCHEMA_VERSION};
use crate::types::{ErrorType, ReasoningChain, StepFlags};

use chain::{ErrorSpec, Gold, Skeleton};

/// Confidence reported for an error-free step.
pub const CLEAN_CONFIDENCE: f64 = 92.0;
/// Confidence reported at an arithmetic or premise error.
pub const LOW_CONFIDENCE: f64 = 25.0;
/// Confidence at a logic gap: the step itself reads fine.
pub const LOGIC_GAP_CONFIDENCE: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorDistribution {
    pub arithmetic: f64,
    pub logic_gap: f64,
    pub premise: f64,
    pub none: f64,
}

impl Default for ErrorDistribution {
    fn default() -> Self {
        ErrorDistribution { arithmetic: 0.2, logic_gap: 0.2, premise: 0.15, none: 0.45 }
    }
}

impl ErrorDistribution {
    pub fn only(error_type: ErrorType) -> Self {
        let mut d = ErrorDistribution { arithmetic: 0.0, logic_gap: 0.0, premise: 0.0, none: 0.0 };
        match error_type {
            ErrorType::Arithmetic => d.arithmetic = 1.0,
            ErrorType::LogicGap => d.logic_gap = 1.0,
            ErrorType::Premise => d.premise = 1.0,
            ErrorType::None => d.none = 1.0,
        }
        d
    }

    fn sample(&self, u: f64) -> ErrorType {
        let mut acc = 0.0;
        for (p, ty) in [
            (self.arithmetic, ErrorType::Arithmetic),
            (self.logic_gap, ErrorType::LogicGap),
            (self.premise, ErrorType::Premise),
        ] {
            acc += p;
            if u < acc {
                return ty;
            }
        }
        ErrorType::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationNoise {
    /// Standard deviation of the Gaussian added to step confidences.
    pub confidence_jitter: f64,
    /// Fraction of the K samples that reach the gold answer when the chain
    /// is wrong.
    pub disagreement_rate: f64,
    /// Draw the disagreeing count from a binomial instead of rounding.
    pub stochastic_disagreement: bool,
    /// Chance that a clean chain's sample is wrong, and that any entailment
    /// verdict is flipped.
    pub spurious_rate: f64,
}

impl ObservationNoise {
    pub const NONE: ObservationNoise = ObservationNoise {
        confidence_jitter: 0.0,
        disagreement_rate: 0.4,
        stochastic_disagreement: false,
        spurious_rate: 0.0,
    };
}

impl Default for ObservationNoise {
    fn default() -> Self {
        ObservationNoise {
            confidence_jitter: 8.0,
            disagreement_rate: 0.4,
            stochastic_disagreement: true,
            spurious_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimPlantConfig {
    pub seed: u64,
    pub initial_error_distribution: ErrorDistribution,
    pub chain_length: LengthRange,
    pub fix_probability_matched: f64,
    pub fix_probability_generic: f64,
    pub overshoot_probability: f64,
    pub oscillation_bias: f64,
    /// Multiplier on the fix probability for regenerate-from instructions.
    pub regenerate_bonus: f64,
    /// Chance an arithmetic error also breaks entailment into its step.
    pub arithmetic_entailment_rate: f64,
    pub observation_noise: ObservationNoise,
}

impl Default for SimPlantConfig {
    fn default() -> Self {
        SimPlantConfig {
            seed: 0,
            initial_error_distribution: ErrorDistribution::default(),
            chain_length: LengthRange { min: 2, max: 6 },
            fix_probability_matched: 0.75,
            fix_probability_generic: 0.35,
            overshoot_probability: 0.1,
            oscillation_bias: 0.1,
            regenerate_bonus: 1.2,
            arithmetic_entailment_rate: 0.5,
            observation_noise: ObservationNoise::default(),
        }
    }
}

impl SimPlantConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.initial_error_distribution;
        let n = &self.observation_noise;
        let probabilities = [
            ("initial_error_distribution.arithmetic", d.arithmetic),
            ("initial_error_distribution.logic_gap", d.logic_gap),
            ("initial_error_distribution.premise", d.premise),
            ("initial_error_distribution.none", d.none),
            ("fix_probability_matched", self.fix_probability_matched),
            ("fix_probability_generic", self.fix_probability_generic),
            ("overshoot_probability", self.overshoot_probability),
            ("oscillation_bias", self.oscillation_bias),
            ("arithmetic_entailment_rate", self.arithmetic_entailment_rate),
            ("observation_noise.disagreement_rate", n.disagreement_rate),
            ("observation_noise.spurious_rate", n.spurious_rate),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::Invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        let total = d.arithmetic + d.logic_gap + d.premise + d.none;
        if (total - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!("initial_error_distribution must sum to 1, got {total}")));
        }
        if self.chain_length.min < 2 || self.chain_length.min > self.chain_length.max {
            return Err(ConfigError::Invalid(format!(
                "chain_length needs 2 <= min <= max, got {}..={}",
                self.chain_length.min, self.chain_length.max
            )));
        }
        if !(self.regenerate_bonus.is_finite() && self.regenerate_bonus >= 0.0) {
            return Err(ConfigError::Invalid("regenerate_bonus must be finite and >= 0".into()));
        }
        if !(n.confidence_jitter.is_finite() && n.confidence_jitter >= 0.0) {
            return Err(ConfigError::Invalid("observation_noise.confidence_jitter must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Zero observation noise with deterministic disagreement.
    pub fn noiseless(mut self) -> Self {
        self.observation_noise = ObservationNoise::NONE;
        self
    }
}

/// Ground truth about a chain: its error type and 1-based step, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenError {
    pub error_type: ErrorType,
    pub location: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    /// Error carried by the most recently emitted chain.
    pub true_error: Option<HiddenError>,
    /// Final answers of every chain emitted so far, in order.
    pub answer_history: Vec<String>,
}

#[derive(Debug, Clone)]
struct VersionRecord {
    chain: ReasoningChain,
    error: Option<ErrorSpec>,
}

#[derive(Debug)]
struct TaskState {
    skeleton: Skeleton,
    versions: Vec<VersionRecord>,
    corrections: u64,
}

/// Simulated plant. Safe to share between threads; state is kept per task
/// id, so one plant should serve one run per task at a time.
#[derive(Debug)]
pub struct SimPlant {
    config: SimPlantConfig,
    tasks: Mutex<HashMap<String, TaskState>>,
}

fn hidden(spec: Option<ErrorSpec>) -> Option<HiddenError> {
    spec.map(|e| HiddenError { error_type: e.error_type, location: e.location })
}

impl SimPlant {
    pub fn new(config: SimPlantConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(SimPlant { config, tasks: Mutex::new(HashMap::new()) })
    }

    pub fn config(&self) -> &SimPlantConfig {
        &self.config
    }

    /// Test-harness inspection of the hidden state of `task_id`.
    pub fn hidden_state(&self, task_id: &str) -> Option<HiddenState> {
        let tasks = self.tasks.lock().expect("sim state lock");
        let state = tasks.get(task_id)?;
        Some(HiddenState {
            true_error: hidden(state.versions.last().and_then(|v| v.error)),
            answer_history: state.versions.iter().map(|v| v.chain.final_answer.clone()).collect(),
        })
    }

    /// Hidden error of a chain this plant emitted for `task_id`; `None` when
    /// the chain is unknown.
    pub fn hidden_error_of(&self, task_id: &str, chain: &ReasoningChain) -> Option<Option<HiddenError>> {
        let tasks = self.tasks.lock().expect("sim state lock");
        let state = tasks.get(task_id)?;
        state.versions.iter().rev().find(|v| &v.chain == chain).map(|v| hidden(v.error))
    }

    /// Initial chain for `task`. Tasks with a seeded chain fix the length and
    /// the annotated error; others draw both from the config.
    fn initial(&self, task: &BenchTask) -> (Skeleton, Option<ErrorSpec>) {
        let c = &self.config;
        let mut rng = rng::stream(c.seed, &task.id, "generate", 0);
        let drawn_len = rng.random_range(c.chain_length.min..=c.chain_length.max);
        let drawn_type = c.initial_error_distribution.sample(rng.random());
        let (len, error_type, location) = match &task.seeded_chain {
            Some(seeded) => (seeded.steps.len().max(2), task.error_label(), task.annotation.map(|a| a.location)),
            None => (drawn_len, drawn_type, None),
        };
        let skeleton = Skeleton::build(&task.gold_answer, len, &mut rng);
        let error = error_type.is_actionable().then(|| {
            let mut spec = skeleton.draw_error(error_type, &mut rng);
            if let Some(loc) = location {
                let loc = skeleton.clamp_location(error_type, loc);
                if loc != spec.location {
                    // a positive shift never drives a value below zero
                    spec.location = loc;
                    spec.offset = spec.offset.abs();
                }
            }
            spec
        });
        (skeleton, error)
    }

    fn lookup(&self, task_id: &str, chain: &ReasoningChain) -> Result<(Gold, Option<ErrorSpec>), PlantError> {
        let tasks = self.tasks.lock().expect("sim state lock");
        let state = tasks
            .get(task_id)
            .ok_or_else(|| PlantError::InvalidOutput(format!("task {task_id:?} was never generated")))?;
        let record = state
            .versions
            .iter()
            .rev()
            .find(|v| &v.chain == chain)
            .ok_or_else(|| PlantError::InvalidOutput("chain was not produced by this plant".into()))?;
        Ok((state.skeleton.gold().clone(), record.error))
    }
}

/// Builds `count` tasks whose seeded chains and annotations are exactly what
/// [`SimPlant`] generates for them under `config`.
pub fn synthetic_tasks(config: &SimPlantConfig, count: usize) -> Vec<BenchTask> {
    let plant = SimPlant { config: config.clone(), tasks: Mutex::new(HashMap::new()) };
    (0..count)
        .map(|i| {
            let id = format!("sim-{i:05}");
            let category = Category::ALL[i % Category::ALL.len()];
            let mut rng = rng::stream(config.seed, &id, "task", 0);
            let gold = match category {
                Category::MathReasoning => rng.random_range(10..=500).to_string(),
                Category::LogicalReasoning | Category::Commonsense => {
                    if rng.random_bool(0.5) { "yes" } else { "no" }.to_string()
                }
                Category::MultiStep => {
                    if rng.random_bool(0.5) {
                        format!("{}%", rng.random_range(5..=95))
                    } else {
                        format!("{}.{}", rng.random_range(1..=99), rng.random_range(1..=9))
                    }
                }
            };
            let mut task = BenchTask {
                schema_version: TASK_SCHEMA_VERSION,
                id: id.clone(),
                category,
                question: format!("Synthetic {category} task {i}: work out the running total."),
                seeded_chain: None,
                annotation: None,
                gold_answer: gold,
                ideal_correction: None,
            };
            let (skeleton, error) = plant.initial(&task);
            let chain = skeleton.render(&id, error, None);
            task.seeded_chain =
                Some(SeededChain { steps: chain.steps.into_iter().map(|s| s.text).collect(), answer: None });
            task.annotation = error.map(|e| Annotation { error_type: e.error_type, location: e.location });
            task
        })
        .collect()
}

impl Plant for SimPlant {
    fn generate(&self, task: &BenchTask) -> Result<Metered<ReasoningChain>, PlantError> {
        if task.question.trim().is_empty() {
            return Err(PlantError::InvalidTask("empty question".into()));
        }
        let (skeleton, error) = self.initial(task);
        let chain = skeleton.render(&task.id, error, None);
        let state =
            TaskState { skeleton, versions: vec![VersionRecord { chain: chain.clone(), error }], corrections: 0 };
        self.tasks.lock().expect("sim state lock").insert(task.id.clone(), state);
        Ok(Metered::new(chain, 1))
    }

    fn observe(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        k: usize,
        needs: ModalitySet,
    ) -> Result<Metered<ModalityObservations>, PlantError> {
        let (gold, error) = self.lookup(&task.id, chain)?;
        let noise = &self.config.observation_noise;
        let key = rng::content_hash(chain.steps.iter().map(|s| s.text.as_str()));
        let mut rng = rng::stream(self.config.seed, &task.id, "observe", key);

        let correct = gold.answer();
        let mut samples = match error {
            Some(_) => {
                let disagree = if noise.stochastic_disagreement {
                    Binomial::new(k as u64, noise.disagreement_rate).expect("rate validated").sample(&mut rng) as usize
                } else {
                    (noise.disagreement_rate * k as f64).round() as usize
                };
                let mut s = vec![chain.final_answer.clone(); k];
                for slot in s.iter_mut().take(disagree.min(k)) {
                    slot.clone_from(&correct);
                }
                s
            }
            None => {
                let offset = rng.random_range(1..=9);
                let wrong = gold.wrong(offset);
                (0..k)
                    .map(
                        |_| {
                            if rng.random_bool(noise.spurious_rate) {
                                wrong.clone()
                            } else {
                                chain.final_answer.clone()
                            }
                        },
                    )
                    .collect()
            }
        };
        samples.shuffle(&mut rng);

        let jitter = Normal::new(0.0, noise.confidence_jitter).expect("jitter validated");
        let confidences = (1..=chain.len())
            .map(|j| {
                let base = match error {
                    Some(e) if e.location == j && e.error_type == ErrorType::LogicGap => LOGIC_GAP_CONFIDENCE,
                    Some(e) if e.location == j => LOW_CONFIDENCE,
                    _ => CLEAN_CONFIDENCE,
                };
                (base + jitter.sample(&mut rng)).round().clamp(0.0, 100.0)
            })
            .collect();

        let entailment = (2..=chain.len())
            .map(|j| {
                let broken_by_arithmetic = rng.random_bool(self.config.arithmetic_entailment_rate);
                let flip = rng.random_bool(noise.spurious_rate);
                let violated = match error {
                    Some(e) if e.location == j => match e.error_type {
                        ErrorType::LogicGap => true,
                        ErrorType::Arithmetic => broken_by_arithmetic,
                        _ => false,
                    },
                    _ => false,
                };
                violated == flip
            })
            .collect();

        let obs = ModalityObservations {
            samples: needs.self_consistency.then_some(samples),
            step_confidences: needs.confidence.then_some(confidences),
            entailment: needs.logic_chain.then_some(entailment),
            step_flags: StepFlags::for_chain(chain),
            failures: Vec::new(),
        };
        Ok(Metered::new(obs, sensing_calls(needs, k, chain.len())))
    }

    fn correct(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        input: &ControlInput,
    ) -> Result<Metered<ReasoningChain>, PlantError> {
        let c = &self.config;
        let calls = if input.feedback_request.is_some() { 2 } else { 1 };
        let mut tasks = self.tasks.lock().expect("sim state lock");
        let state = tasks
            .get_mut(&task.id)
            .ok_or_else(|| PlantError::InvalidOutput(format!("task {:?} was never generated", task.id)))?;
        let input_index = state
            .versions
            .iter()
            .rposition(|v| &v.chain == chain)
            .ok_or_else(|| PlantError::InvalidOutput("chain was not produced by this plant".into()))?;
        let current = state.versions[input_index].clone();
        state.corrections += 1;
        let round = state.corrections;

        let mut rng = rng::stream(c.seed, &task.id, "correct", round);
        let u_osc: f64 = rng.random();
        let u_fix: f64 = rng.random();
        let u_over: f64 = rng.random();
        let new_type = ErrorType::ACTIONABLE[rng.random_range(0..ErrorType::ACTIONABLE.len())];
        let injected = state.skeleton.draw_error(new_type, &mut rng);

        let revert = (u_osc < c.oscillation_bias)
            .then(|| {
                state.versions[..input_index]
                    .iter()
                    .rev()
                    .find(|v| v.error.is_some() && v.chain.final_answer != current.chain.final_answer)
                    .cloned()
            })
            .flatten();

        let record = match revert {
            Some(prior) => prior,
            None => {
                let mut error = current.error;
                if let Some(e) = current.error {
                    let base = if input.error_type == Some(e.error_type) {
                        c.fix_probability_matched
                    } else {
                        c.fix_probability_generic
                    };
                    let p = match input.mode {
                        CorrectionMode::RegenerateFrom => (base * c.regenerate_bonus).min(1.0),
                        CorrectionMode::TargetedEdit => base,
                    };
                    if u_fix < p {
                        error = None;
                    }
                }
                let overshoot = u_over < c.overshoot_probability;
                if overshoot {
                    error = Some(injected);
                }
                match error {
                    None if current.error.is_none() => current.clone(),
                    None => VersionRecord { chain: state.skeleton.render(&task.id, None, None), error: None },
                    Some(e) => {
                        VersionRecord { chain: state.skeleton.render(&task.id, Some(e), Some(round)), error: Some(e) }
                    }
                }
            }
        };
        state.versions.push(record.clone());
        Ok(Metered::new(record.chain, calls))
    }
}
