//! The sensor: turns raw modality observations into a typed [`ErrorSignal`].
//!
//! Severity fuses three modalities,
//! `s = w_sc * s_sc + w_vc * max_j s_vc(j) + w_lc * (1 - min_j v_j)`,
//! where `s_sc = 1 - |majority| / K` over the sampled answers,
//! `s_vc(j) = 1 - conf(j) / 100` per step, and `v_j` is the entailment
//! verdict for the step pair `(j, j + 1)`.
//!
//! A modality that is absent from the observations (not requested, or its
//! elicitation failed) drops out and the remaining weights are rescaled to
//! sum to one.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{Hyperparameters, Weights};
use crate::types::{ErrorSignal, ErrorType, SeverityComponents, StepFlags};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("self-consistency needs at least one sample")]
    EmptySamples,
    #[error("confidence {value} for step {step} is outside [0, 100]")]
    OutOfRange { step: usize, value: f64 },
    #[error("observation shape mismatch: {0}")]
    Shape(String),
    #[error("no modality with positive weight is available")]
    NoUsableModality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    SelfConsistency,
    Confidence,
    LogicChain,
}

/// Which modalities a run asks the plant to elicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySet {
    pub self_consistency: bool,
    pub confidence: bool,
    pub logic_chain: bool,
}

impl ModalitySet {
    pub const ALL: ModalitySet = ModalitySet { self_consistency: true, confidence: true, logic_chain: true };
    pub const SELF_CONSISTENCY_ONLY: ModalitySet =
        ModalitySet { self_consistency: true, confidence: false, logic_chain: false };

    pub fn contains(&self, m: Modality) -> bool {
        match m {
            Modality::SelfConsistency => self.self_consistency,
            Modality::Confidence => self.confidence,
            Modality::LogicChain => self.logic_chain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityFailure {
    pub modality: Modality,
    pub message: String,
}

/// Raw sensor data for one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityObservations {
    /// K normalized answers drawn independently.
    pub samples: Option<Vec<String>>,
    /// One verbalized confidence per step, 0..=100.
    pub step_confidences: Option<Vec<f64>>,
    /// One verdict per consecutive step pair; `true` means step j+1 follows
    /// from step j.
    pub entailment: Option<Vec<bool>>,
    pub step_flags: Vec<StepFlags>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<ModalityFailure>,
}

impl ModalityObservations {
    pub fn step_count(&self) -> usize {
        self.step_flags.len()
    }

    pub fn has(&self, m: Modality) -> bool {
        match m {
            Modality::SelfConsistency => self.samples.is_some(),
            Modality::Confidence => self.step_confidences.is_some(),
            Modality::LogicChain => self.entailment.is_some(),
        }
    }

    /// Checks vector lengths against the step count and, when given, K.
    pub fn validate(&self, k: Option<usize>) -> Result<(), DetectorError> {
        let steps = self.step_count();
        if steps == 0 {
            return Err(DetectorError::Shape("observations cover zero steps".into()));
        }
        if let Some(samples) = &self.samples {
            if samples.is_empty() {
                return Err(DetectorError::EmptySamples);
            }
            if let Some(k) = k {
                if samples.len() != k {
                    return Err(DetectorError::Shape(format!("expected {k} samples, got {}", samples.len())));
                }
            }
        }
        if let Some(conf) = &self.step_confidences {
            if conf.len() != steps {
                return Err(DetectorError::Shape(format!("expected {steps} confidences, got {}", conf.len())));
            }
        }
        if let Some(ent) = &self.entailment {
            if ent.len() != steps - 1 {
                return Err(DetectorError::Shape(format!(
                    "expected {} entailment verdicts, got {}",
                    steps - 1,
                    ent.len()
                )));
            }
        }
        Ok(())
    }

    /// Whether the verdict leading into `step` (1-based) is a violation.
    fn violation_into(&self, step: usize) -> bool {
        match &self.entailment {
            Some(ent) if step >= 2 => !ent[step - 2],
            _ => false,
        }
    }
}

/// Answer that occurs most often; ties go to the one seen first.
pub fn majority_answer(samples: &[String]) -> Option<(&str, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in samples {
        *counts.entry(s.as_str()).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for s in samples {
        let c = counts[s.as_str()];
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((s.as_str(), c));
        }
    }
    best
}

/// Self-consistency severity `1 - |majority| / K`.
pub fn sc_severity(samples: &[String]) -> Result<f64, DetectorError> {
    let (_, count) = majority_answer(samples).ok_or(DetectorError::EmptySamples)?;
    Ok(1.0 - count as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VcSeverity {
    pub per_step: Vec<f64>,
    pub max: f64,
    /// 1-based steps whose confidence is strictly below `phi`.
    pub flagged: Vec<usize>,
}

pub fn vc_severity(confidences: &[f64], phi: f64) -> Result<VcSeverity, DetectorError> {
    let mut per_step = Vec::with_capacity(confidences.len());
    let mut flagged = Vec::new();
    for (i, &c) in confidences.iter().enumerate() {
        if !(0.0..=100.0).contains(&c) {
            return Err(DetectorError::OutOfRange { step: i + 1, value: c });
        }
        per_step.push(1.0 - c / 100.0);
        if c < phi {
            flagged.push(i + 1);
        }
    }
    let max = per_step.iter().copied().fold(0.0, f64::max);
    Ok(VcSeverity { per_step, max, flagged })
}

/// `1 - min_j v_j`; zero for an empty verdict list (single-step chain).
pub fn lc_term(entailment: &[bool]) -> f64 {
    if entailment.iter().all(|v| *v) {
        0.0
    } else {
        1.0
    }
}

pub fn fuse_severity(s_sc: f64, max_s_vc: f64, lc: f64, weights: &Weights) -> f64 {
    let s = weights.sc() * s_sc + weights.vc() * max_s_vc + weights.lc() * lc;
    s.clamp(0.0, 1.0)
}

/// Weights restricted to the modalities present in `obs`, rescaled to sum
/// to one. Returned unchanged when every modality is present.
pub fn effective_weights(obs: &ModalityObservations, weights: &Weights) -> Result<Weights, DetectorError> {
    let present = [obs.has(Modality::SelfConsistency), obs.has(Modality::Confidence), obs.has(Modality::LogicChain)];
    if present.iter().all(|p| *p) {
        return Ok(*weights);
    }
    let mut w = weights.0;
    for (wi, p) in w.iter_mut().zip(present) {
        if !p {
            *wi = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(DetectorError::NoUsableModality);
    }
    if total != 1.0 {
        for wi in &mut w {
            *wi /= total;
        }
    }
    Ok(Weights(w))
}

/// Picks the error type and step once `s` is known.
///
/// The location is the step with the largest composite
/// `w_vc * s_vc(j) + w_lc * [pair (j-1, j) violated]`, earliest on ties.
/// The type then follows a fixed rule table evaluated at that step.
pub fn classify_and_locate(
    obs: &ModalityObservations,
    per_step_vc: Option<&[f64]>,
    s: f64,
    params: &Hyperparameters,
) -> ErrorSignal {
    classify_with_weights(obs, per_step_vc, s, params, &params.weights, SeverityComponents::default())
}

fn classify_with_weights(
    obs: &ModalityObservations,
    per_step_vc: Option<&[f64]>,
    s: f64,
    params: &Hyperparameters,
    weights: &Weights,
    components: SeverityComponents,
) -> ErrorSignal {
    if s <= params.sigma {
        return ErrorSignal::clean(s, components);
    }
    let steps = obs.step_count();
    let mut location = 1;
    let mut best = f64::NEG_INFINITY;
    for step in 1..=steps {
        let vc = per_step_vc.map_or(0.0, |v| v[step - 1]);
        let lc = if obs.violation_into(step) { 1.0 } else { 0.0 };
        let composite = weights.vc() * vc + weights.lc() * lc;
        if composite > best {
            best = composite;
            location = step;
        }
    }

    let flags = obs.step_flags[location - 1];
    let low_confidence = obs.step_confidences.as_ref().is_some_and(|c| c[location - 1] < params.phi);
    let violated = obs.violation_into(location);

    let error_type = if flags.has_numeric_computation && (low_confidence || violated) {
        ErrorType::Arithmetic
    } else if violated {
        ErrorType::LogicGap
    } else if flags.is_premise_assertion || location == 1 {
        ErrorType::Premise
    } else {
        ErrorType::LogicGap
    };

    ErrorSignal { error_type, severity: s, location: Some(location), components }
}

/// Full sensor pass over one set of observations.
pub fn detect(obs: &ModalityObservations, params: &Hyperparameters) -> Result<ErrorSignal, DetectorError> {
    obs.validate(None)?;
    let weights = effective_weights(obs, &params.weights)?;

    let sc = obs.samples.as_deref().map(sc_severity).transpose()?;
    let vc = obs.step_confidences.as_deref().map(|c| vc_severity(c, params.phi)).transpose()?;
    let lc = obs.entailment.as_deref().map(lc_term);

    let s = fuse_severity(sc.unwrap_or(0.0), vc.as_ref().map_or(0.0, |v| v.max), lc.unwrap_or(0.0), &weights);
    let components = SeverityComponents {
        sc,
        vc_max: vc.as_ref().map(|v| v.max),
        min_entailment: lc.map(|l| if l > 0.0 { 0 } else { 1 }),
    };
    Ok(classify_with_weights(obs, vc.as_ref().map(|v| v.per_step.as_slice()), s, params, &weights, components))
}
