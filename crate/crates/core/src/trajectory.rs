//! Per-run log record, serialized one JSON object per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::ControlInput;
use crate::detector::ModalityFailure;
use crate::judge::JudgeDecision;
use crate::params::Hyperparameters;
use crate::runner::Method;
use crate::task::BenchTask;
use crate::types::{ErrorSignal, ReasoningChain};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("{path}:{line}: {message}")]
    Schema { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Accepted output had no actionable error.
    Clean,
    /// Consecutive severities within epsilon.
    Converged,
    Oscillation,
    MaxIterations,
    /// Methods that never correct.
    SinglePass,
    /// Refinement returned its input verbatim.
    Unchanged,
    /// The plant failed; the trajectory is partial.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub iteration: usize,
    /// Output produced at this iteration, before any rollback.
    pub version: ReasoningChain,
    pub raw_severity: f64,
    pub accepted_severity: f64,
    pub accepted_answer: String,
    /// Entry index whose `version` is the accepted one at this iteration.
    pub accepted_from: usize,
    pub error_signal: ErrorSignal,
    /// Instruction that produced `version`; absent for the initial output.
    pub control_input: Option<ControlInput>,
    pub decision: JudgeDecision,
    /// Plant calls spent producing and sensing this entry.
    pub calls: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensing_failures: Vec<ModalityFailure>,
}

impl TrajectoryEntry {
    pub fn raw_answer(&self) -> &str {
        &self.version.final_answer
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallCounts {
    /// Calls the method itself needs.
    pub method: u64,
    /// Sensing calls made only so baselines can be scored on the same
    /// severity scale; not part of the method's cost.
    pub logging: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub task: BenchTask,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_label: Option<String>,
    pub seed: u64,
    pub params: Hyperparameters,
    pub entries: Vec<TrajectoryEntry>,
    pub termination: Termination,
    /// Entry index whose `version` is the returned output.
    pub final_version: usize,
    pub final_answer: String,
    pub calls: CallCounts,
    /// Effective configuration the run was launched with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
}

impl Trajectory {
    pub fn task_id(&self) -> &str {
        &self.task.id
    }

    pub fn final_chain(&self) -> &ReasoningChain {
        &self.entries[self.final_version].version
    }

    pub fn initial_answer(&self) -> &str {
        self.entries.first().map_or("", |e| e.version.final_answer.as_str())
    }

    /// Number of correction rounds (entries after the initial output).
    pub fn iterations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn raw_severities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.raw_severity).collect()
    }

    pub fn accepted_severities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.accepted_severity).collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }
}

pub fn write_jsonl<'a>(
    mut out: impl Write,
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> std::io::Result<()> {
    for t in trajectories {
        writeln!(out, "{}", t.to_json_line())?;
    }
    Ok(())
}

pub fn parse_jsonl(reader: impl BufRead, source: &str) -> Result<Vec<Trajectory>, TrajectoryError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| TrajectoryError::Schema {
            path: source.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if t.schema_version != TRAJECTORY_SCHEMA_VERSION {
            return Err(TrajectoryError::Schema {
                path: source.to_string(),
                line: i + 1,
                message: format!("unsupported schema_version {}", t.schema_version),
            });
        }
        if t.entries.is_empty() || t.final_version >= t.entries.len() {
            return Err(TrajectoryError::Schema {
                path: source.to_string(),
                line: i + 1,
                message: "trajectory has no entries or a dangling final_version".into(),
            });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Trajectory>, TrajectoryError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_jsonl(BufReader::new(file), &path.display().to_string())
}
