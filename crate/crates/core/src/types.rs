//! Value types shared across the sensor, controller, judge and runner.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("reasoning chain has no steps")]
    Empty,
    #[error("step indices must be contiguous from 1; found {found} at position {position}")]
    NonContiguous { position: usize, found: usize },
    #[error("final answer {stored:?} does not match the extracted answer {expected:?}")]
    AnswerMismatch { stored: String, expected: String },
}

/// One numbered step of a reasoning chain. Indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: usize,
    pub text: String,
}

/// An answer attempt: ordered steps plus the normalized final answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub task_id: String,
    pub steps: Vec<Step>,
    /// Explicit answer line, when the producer supplied one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_field: Option<String>,
    pub final_answer: String,
}

impl ReasoningChain {
    /// Builds a chain from raw step texts, numbering them from 1 and deriving
    /// the final answer.
    pub fn new<I, S>(task_id: impl Into<String>, steps: I, answer_field: Option<String>) -> Result<Self, ChainError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let steps: Vec<Step> =
            steps.into_iter().enumerate().map(|(i, text)| Step { index: i + 1, text: text.into() }).collect();
        if steps.is_empty() {
            return Err(ChainError::Empty);
        }
        let mut chain = ReasoningChain { task_id: task_id.into(), steps, answer_field, final_answer: String::new() };
        chain.final_answer = answer::answer_or_fallback(&chain);
        Ok(chain)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Step by 1-based index.
    pub fn step(&self, index: usize) -> Option<&Step> {
        index.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    /// Checks the structural invariants; used on chains that arrive from
    /// deserialization or from a plant.
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.steps.is_empty() {
            return Err(ChainError::Empty);
        }
        for (position, step) in self.steps.iter().enumerate() {
            if step.index != position + 1 {
                return Err(ChainError::NonContiguous { position, found: step.index });
            }
        }
        let expected = answer::answer_or_fallback(self);
        if expected != self.final_answer {
            return Err(ChainError::AnswerMismatch { stored: self.final_answer.clone(), expected });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    Arithmetic,
    LogicGap,
    Premise,
    None,
}

impl ErrorType {
    pub const ACTIONABLE: [ErrorType; 3] = [ErrorType::Arithmetic, ErrorType::LogicGap, ErrorType::Premise];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::Arithmetic => "arithmetic",
            ErrorType::LogicGap => "logic_gap",
            ErrorType::Premise => "premise",
            ErrorType::None => "none",
        }
    }

    pub fn is_actionable(self) -> bool {
        self != ErrorType::None
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw modality readings kept on the signal for auditing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeverityComponents {
    /// Self-consistency severity.
    pub sc: Option<f64>,
    /// Largest per-step verbalized-confidence severity.
    pub vc_max: Option<f64>,
    /// Minimum entailment verdict over consecutive pairs (1 when vacuous).
    pub min_entailment: Option<u8>,
}

/// Typed diagnosis of one output: error type, fused severity and location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSignal {
    pub error_type: ErrorType,
    pub severity: f64,
    pub location: Option<usize>,
    pub components: SeverityComponents,
}

impl ErrorSignal {
    pub fn clean(severity: f64, components: SeverityComponents) -> Self {
        ErrorSignal { error_type: ErrorType::None, severity, location: None, components }
    }

    pub fn is_clean(&self) -> bool {
        self.error_type == ErrorType::None
    }
}

/// Lexical content flags of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFlags {
    pub has_numeric_computation: bool,
    pub is_premise_assertion: bool,
}

static NUMERIC_COMPUTATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d\s*%?\s*[-+*/×x÷·=]\s*\(?\s*[$]?\d").expect("numeric computation pattern"));

static PREMISE_ASSERTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^\s*(since|assume|assuming|suppose|given that|we know|it is known|recall that)\b|\b(always|never|every|all)\b",
    )
    .expect("premise pattern")
});

impl StepFlags {
    /// Derives flags from step text: an operator between digits marks a
    /// computation; assumption openers or universal quantifiers mark a premise.
    pub fn from_text(text: &str) -> Self {
        StepFlags {
            has_numeric_computation: NUMERIC_COMPUTATION.is_match(text),
            is_premise_assertion: PREMISE_ASSERTION.is_match(text),
        }
    }

    pub fn for_chain(chain: &ReasoningChain) -> Vec<StepFlags> {
        chain.steps.iter().map(|s| StepFlags::from_text(&s.text)).collect()
    }
}
