//! The plant contract: whatever produces and revises reasoning chains.

use std::sync::Mutex;

use thiserror::Error;

use crate::controller::ControlInput;
use crate::detector::{ModalityObservations, ModalitySet};
use crate::task::BenchTask;
use crate::types::ReasoningChain;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unparseable plant output: {0}")]
    Parse(String),
    #[error("plant produced an invalid output: {0}")]
    InvalidOutput(String),
    #[error("every requested modality failed: {0}")]
    AllModalitiesFailed(String),
}

/// A plant result together with the number of backend calls it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Metered<T> {
    pub value: T,
    pub calls: u32,
}

impl<T> Metered<T> {
    pub fn new(value: T, calls: u32) -> Self {
        Metered { value, calls }
    }
}

/// Generator under control.
///
/// `observe` must not alter any state that later calls depend on in a way
/// visible through the chain, and `correct` always returns a fresh chain.
/// Implementations state whether they tolerate concurrent calls; both
/// shipped plants do.
pub trait Plant {
    fn generate(&self, task: &BenchTask) -> Result<Metered<ReasoningChain>, PlantError>;

    /// Elicits the requested modalities for `chain`. A modality that fails is
    /// left as `None` with its failure recorded; only when every requested
    /// modality fails is an error returned.
    fn observe(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        k: usize,
        needs: ModalitySet,
    ) -> Result<Metered<ModalityObservations>, PlantError>;

    fn correct(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        input: &ControlInput,
    ) -> Result<Metered<ReasoningChain>, PlantError>;
}

impl<P: Plant + ?Sized> Plant for &P {
    fn generate(&self, task: &BenchTask) -> Result<Metered<ReasoningChain>, PlantError> {
        (**self).generate(task)
    }

    fn observe(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        k: usize,
        needs: ModalitySet,
    ) -> Result<Metered<ModalityObservations>, PlantError> {
        (**self).observe(task, chain, k, needs)
    }

    fn correct(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        input: &ControlInput,
    ) -> Result<Metered<ReasoningChain>, PlantError> {
        (**self).correct(task, chain, input)
    }
}

/// One scripted output and the observations the plant reports for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptStep {
    pub chain: ReasoningChain,
    pub observations: ModalityObservations,
}

/// Plays back a fixed sequence of outputs: `generate` returns the first,
/// each `correct` the next. Observations are looked up by chain equality.
/// Useful for hand-traced loop tests.
#[derive(Debug)]
pub struct ScriptedPlant {
    script: Vec<ScriptStep>,
    state: Mutex<ScriptState>,
}

#[derive(Debug, Default)]
struct ScriptState {
    next: usize,
    inputs: Vec<ControlInput>,
}

impl ScriptedPlant {
    pub fn new(script: Vec<ScriptStep>) -> Self {
        ScriptedPlant { script, state: Mutex::new(ScriptState::default()) }
    }

    /// Control inputs received so far, in order.
    pub fn received_inputs(&self) -> Vec<ControlInput> {
        self.state.lock().expect("script lock").inputs.clone()
    }

    fn take_next(&self) -> Result<ReasoningChain, PlantError> {
        let mut state = self.state.lock().expect("script lock");
        let step = self
            .script
            .get(state.next)
            .ok_or_else(|| PlantError::InvalidOutput(format!("script exhausted at {}", state.next)))?;
        state.next += 1;
        Ok(step.chain.clone())
    }
}

impl Plant for ScriptedPlant {
    fn generate(&self, task: &BenchTask) -> Result<Metered<ReasoningChain>, PlantError> {
        if task.question.trim().is_empty() {
            return Err(PlantError::InvalidTask("empty question".into()));
        }
        self.take_next().map(|c| Metered::new(c, 1))
    }

    fn observe(
        &self,
        _task: &BenchTask,
        chain: &ReasoningChain,
        k: usize,
        needs: ModalitySet,
    ) -> Result<Metered<ModalityObservations>, PlantError> {
        let step = self
            .script
            .iter()
            .find(|s| &s.chain == chain)
            .ok_or_else(|| PlantError::InvalidOutput("chain not in script".into()))?;
        let mut obs = step.observations.clone();
        if !needs.self_consistency {
            obs.samples = None;
        }
        if !needs.confidence {
            obs.step_confidences = None;
        }
        if !needs.logic_chain {
            obs.entailment = None;
        }
        let calls = sensing_calls(needs, k, chain.len());
        Ok(Metered::new(obs, calls))
    }

    fn correct(
        &self,
        _task: &BenchTask,
        _chain: &ReasoningChain,
        input: &ControlInput,
    ) -> Result<Metered<ReasoningChain>, PlantError> {
        self.state.lock().expect("script lock").inputs.push(input.clone());
        let calls = if input.feedback_request.is_some() { 2 } else { 1 };
        self.take_next().map(|c| Metered::new(c, calls))
    }
}

/// Backend calls one sensing pass costs: K samples, one confidence request
/// and one entailment request per consecutive step pair.
pub fn sensing_calls(needs: ModalitySet, k: usize, steps: usize) -> u32 {
    let mut calls = 0;
    if needs.self_consistency {
        calls += k;
    }
    if needs.confidence {
        calls += 1;
    }
    if needs.logic_chain {
        calls += steps.saturating_sub(1);
    }
    calls as u32
}
