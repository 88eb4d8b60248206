//! Control law: error signal in, correction instruction out.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ErrorSignal, ErrorType};

/// Severity above which the controller asks for regeneration instead of a
/// minimal edit. Severity exactly at the threshold still gets an edit.
pub const REGENERATE_ABOVE: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("signal carries no actionable error")]
    NoActionableError,
    #[error("signal has an error type but no location")]
    MissingLocation,
    #[error("template file line {line}: {message}")]
    TemplateSyntax { line: usize, message: String },
    #[error("template for {0} must contain the {{location}} placeholder")]
    TemplateMissingLocation(ErrorType),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    TargetedEdit,
    RegenerateFrom,
}

/// A correction instruction handed to the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub mode: CorrectionMode,
    /// `None` for the generic baseline prompts.
    pub error_type: Option<ErrorType>,
    pub location: Option<usize>,
    pub instruction_text: String,
    /// First-phase request of a feedback-then-refine pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_request: Option<String>,
}

impl ControlInput {
    pub fn is_typed(&self) -> bool {
        self.error_type.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineStrategy {
    NaiveRetry,
    SelfRefineGeneric,
}

pub const NAIVE_RETRY_PROMPT: &str = "Please reconsider your answer.";
pub const SELF_REFINE_FEEDBACK_PROMPT: &str =
    "Review your solution above and give feedback on any problems you find in it.";
pub const SELF_REFINE_REFINE_PROMPT: &str = "Using your feedback, refine the solution and give an improved answer.";

/// Type-keyed instruction templates with a `{location}` placeholder; the
/// logic-gap template also accepts `{next}` for `location + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<ErrorType, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(
            ErrorType::Arithmetic,
            "Recompute the calculation in step {location}. Show each arithmetic operation explicitly.".to_string(),
        );
        templates.insert(
            ErrorType::LogicGap,
            "The reasoning jumps from step {location} to step {next} without justification. Insert the missing intermediate reasoning."
                .to_string(),
        );
        templates.insert(
            ErrorType::Premise,
            "The assumption in step {location} may be incorrect. Re-examine the factual basis and provide an alternative if needed."
                .to_string(),
        );
        TemplateSet { templates }
    }
}

impl TemplateSet {
    /// Parses a template file: `[arithmetic]`, `[logic_gap]` or `[premise]`
    /// section headers, each followed by the template text. Lines starting
    /// with `#` are comments. Types not present keep their default text.
    pub fn parse(text: &str) -> Result<Self, ControlError> {
        let mut set = TemplateSet::default();
        let mut current: Option<(ErrorType, Vec<&str>)> = None;
        let finish = |set: &mut TemplateSet, cur: Option<(ErrorType, Vec<&str>)>| {
            if let Some((ty, lines)) = cur {
                let body = lines.join("\n").trim().to_string();
                if !body.contains("{location}") {
                    return Err(ControlError::TemplateMissingLocation(ty));
                }
                set.templates.insert(ty, body);
            }
            Ok(())
        };
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.starts_with('#') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let ty = match name.trim() {
                    "arithmetic" => ErrorType::Arithmetic,
                    "logic_gap" => ErrorType::LogicGap,
                    "premise" => ErrorType::Premise,
                    other => {
                        return Err(ControlError::TemplateSyntax {
                            line: i + 1,
                            message: format!("unknown error type section {other:?}"),
                        })
                    }
                };
                finish(&mut set, current.take())?;
                current = Some((ty, Vec::new()));
            } else if let Some((_, lines)) = current.as_mut() {
                lines.push(line);
            } else if !trimmed.is_empty() {
                return Err(ControlError::TemplateSyntax {
                    line: i + 1,
                    message: "text before the first section header".into(),
                });
            }
        }
        finish(&mut set, current.take())?;
        Ok(set)
    }

    pub fn render(&self, error_type: ErrorType, location: usize) -> Option<String> {
        self.templates
            .get(&error_type)
            .map(|t| t.replace("{location}", &location.to_string()).replace("{next}", &(location + 1).to_string()))
    }
}

/// Control law with the shipped templates.
pub fn control_law(signal: &ErrorSignal) -> Result<ControlInput, ControlError> {
    control_law_with(signal, &TemplateSet::default())
}

pub fn control_law_with(signal: &ErrorSignal, templates: &TemplateSet) -> Result<ControlInput, ControlError> {
    if !signal.error_type.is_actionable() {
        return Err(ControlError::NoActionableError);
    }
    let location = signal.location.ok_or(ControlError::MissingLocation)?;
    let mode =
        if signal.severity > REGENERATE_ABOVE { CorrectionMode::RegenerateFrom } else { CorrectionMode::TargetedEdit };
    let instruction_text = templates.render(signal.error_type, location).ok_or(ControlError::NoActionableError)?;
    Ok(ControlInput {
        mode,
        error_type: Some(signal.error_type),
        location: Some(location),
        instruction_text,
        feedback_request: None,
    })
}

/// Generic, untyped prompts used by the baseline methods.
pub fn render_baseline(strategy: BaselineStrategy) -> ControlInput {
    match strategy {
        BaselineStrategy::NaiveRetry => ControlInput {
            mode: CorrectionMode::TargetedEdit,
            error_type: None,
            location: None,
            instruction_text: NAIVE_RETRY_PROMPT.to_string(),
            feedback_request: None,
        },
        BaselineStrategy::SelfRefineGeneric => ControlInput {
            mode: CorrectionMode::TargetedEdit,
            error_type: None,
            location: None,
            instruction_text: SELF_REFINE_REFINE_PROMPT.to_string(),
            feedback_request: Some(SELF_REFINE_FEEDBACK_PROMPT.to_string()),
        },
    }
}
