//! Benchmark task schema and JSONL loader.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::normalize_answer;
use crate::types::{ErrorType, ReasoningChain};

pub const TASK_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: duplicate task id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "MR")]
    MathReasoning,
    #[serde(rename = "LR")]
    LogicalReasoning,
    #[serde(rename = "Comm")]
    Commonsense,
    #[serde(rename = "MS")]
    MultiStep,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::MathReasoning, Category::LogicalReasoning, Category::Commonsense, Category::MultiStep];

    pub fn code(self) -> &'static str {
        match self {
            Category::MathReasoning => "MR",
            Category::LogicalReasoning => "LR",
            Category::Commonsense => "Comm",
            Category::MultiStep => "MS",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// A reasoning chain as written in a task file: plain step texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededChain {
    pub steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub error_type: ErrorType,
    pub location: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchTask {
    pub schema_version: u32,
    pub id: String,
    pub category: Category,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeded_chain: Option<SeededChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<Annotation>,
    pub gold_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal_correction: Option<String>,
}

impl BenchTask {
    /// Minimal task around an inline question.
    pub fn inline(id: impl Into<String>, question: impl Into<String>, gold: &str) -> Self {
        BenchTask {
            schema_version: TASK_SCHEMA_VERSION,
            id: id.into(),
            category: Category::MultiStep,
            question: question.into(),
            seeded_chain: None,
            annotation: None,
            gold_answer: normalize_answer(gold),
            ideal_correction: None,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.annotation.is_none()
    }

    /// Error type label used for breakdowns; `none` for clean tasks.
    pub fn error_label(&self) -> ErrorType {
        self.annotation.map_or(ErrorType::None, |a| a.error_type)
    }

    pub fn seeded_reasoning_chain(&self) -> Option<ReasoningChain> {
        let seeded = self.seeded_chain.as_ref()?;
        ReasoningChain::new(self.id.clone(), seeded.steps.clone(), seeded.answer.clone()).ok()
    }

    /// Checks the schema invariants and normalizes the gold answer in place.
    pub fn validate_and_normalize(&mut self) -> Result<(), String> {
        if self.schema_version != TASK_SCHEMA_VERSION {
            return Err(format!("unsupported schema_version {} (expected {TASK_SCHEMA_VERSION})", self.schema_version));
        }
        if self.id.trim().is_empty() {
            return Err("id must be non-empty".into());
        }
        if self.question.trim().is_empty() {
            return Err("question must be non-empty".into());
        }
        self.gold_answer = normalize_answer(&self.gold_answer);
        if self.gold_answer.is_empty() {
            return Err("gold_answer must be non-empty".into());
        }
        let seeded = match &self.seeded_chain {
            Some(s) => {
                if s.steps.is_empty() {
                    return Err("seeded_chain must have at least one step".into());
                }
                Some(self.seeded_reasoning_chain().ok_or("seeded_chain is malformed")?)
            }
            None => None,
        };
        match (&self.annotation, &seeded) {
            (Some(a), _) if !a.error_type.is_actionable() => {
                Err("annotation error_type must not be none; omit the annotation for clean tasks".into())
            }
            (Some(a), _) if a.location == 0 => Err("annotation location is 1-based; 0 is invalid".into()),
            (Some(_), None) => Err("annotation requires a seeded_chain".into()),
            (Some(a), Some(chain)) if a.location > chain.len() => {
                Err(format!("annotation location {} exceeds the {} seeded steps", a.location, chain.len()))
            }
            (None, Some(chain)) if chain.final_answer != self.gold_answer => Err(format!(
                "clean task's seeded chain answers {:?} but gold is {:?}",
                chain.final_answer, self.gold_answer
            )),
            _ => Ok(()),
        }
    }
}

/// Parses JSONL task text; blank lines are skipped.
pub fn parse_tasks(reader: impl BufRead) -> Result<Vec<BenchTask>, TaskError> {
    let mut tasks = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut task: BenchTask =
            serde_json::from_str(&line).map_err(|e| TaskError::Schema { line: line_no, message: e.to_string() })?;
        task.validate_and_normalize().map_err(|message| TaskError::Schema { line: line_no, message })?;
        if !seen.insert(task.id.clone()) {
            return Err(TaskError::DuplicateId { line: line_no, id: task.id });
        }
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<Vec<BenchTask>, TaskError> {
    let file = File::open(path)?;
    parse_tasks(BufReader::new(file))
}

/// The sample task set shipped with the crate.
pub const SAMPLE_TASKS: &str = include_str!("../data/sample_tasks.jsonl");

pub fn sample_tasks() -> Vec<BenchTask> {
    parse_tasks(SAMPLE_TASKS.as_bytes()).expect("shipped sample tasks are valid")
}
