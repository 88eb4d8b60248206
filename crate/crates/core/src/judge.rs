//! Convergence judge: stagnation, oscillation and overshoot tests over a
//! version buffer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::Hyperparameters;
use crate::types::{ErrorSignal, ReasoningChain};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum JudgeError {
    #[error("oscillation check needs three versions, got {0}")]
    InsufficientHistory(usize),
    #[error("version buffer is empty")]
    EmptyBuffer,
    #[error("buffer iteration {got} does not follow {last}")]
    NonIncreasingIteration { last: usize, got: usize },
    #[error("buffer is full ({0} entries)")]
    Full(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub version: ReasoningChain,
    pub severity: f64,
    pub iteration: usize,
    pub signal: ErrorSignal,
}

/// Accepted versions, one per iteration, starting with the initial output.
#[derive(Debug, Clone, PartialEq)]
pub struct VersionBuffer {
    entries: Vec<BufferEntry>,
    capacity: usize,
}

impl VersionBuffer {
    pub fn new(initial: ReasoningChain, signal: ErrorSignal, t_max: usize) -> Self {
        VersionBuffer {
            entries: vec![BufferEntry { severity: signal.severity, version: initial, iteration: 0, signal }],
            capacity: t_max + 1,
        }
    }

    /// Builds a buffer from explicit entries (mostly for tests and replay).
    pub fn from_entries(entries: Vec<BufferEntry>, t_max: usize) -> Result<Self, JudgeError> {
        let mut iter = entries.into_iter();
        let first = iter.next().ok_or(JudgeError::EmptyBuffer)?;
        let mut buf = VersionBuffer { entries: vec![first], capacity: t_max + 1 };
        for e in iter {
            buf.push(e)?;
        }
        Ok(buf)
    }

    pub fn push(&mut self, entry: BufferEntry) -> Result<(), JudgeError> {
        if self.entries.len() >= self.capacity {
            return Err(JudgeError::Full(self.entries.len()));
        }
        let last = self.entries.last().map_or(0, |e| e.iteration);
        if entry.iteration <= last {
            return Err(JudgeError::NonIncreasingIteration { last, got: entry.iteration });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&BufferEntry> {
        self.entries.get(index)
    }

    pub fn last(&self) -> &BufferEntry {
        self.entries.last().expect("buffer always holds the initial version")
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }
}

/// One judge verdict per iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JudgeDecision {
    Continue,
    Converged,
    /// Carries the buffer index of the lowest-severity version.
    Oscillation {
        best_index: usize,
    },
    #[serde(rename = "rollback")]
    OvershootRollback,
    #[serde(rename = "max_iter")]
    MaxIterations,
    /// The accepted output carries no actionable error; the runner stops
    /// before calling the controller. Never returned by [`judge`].
    Clean,
}

pub fn check_convergence(s_t: f64, s_prev: f64, epsilon: f64) -> bool {
    (s_t - s_prev).abs() < epsilon
}

/// `answers` is `[a_t, a_{t-1}, a_{t-2}]`, newest first, already normalized.
pub fn check_oscillation<S: AsRef<str>>(answers: &[S]) -> Result<bool, JudgeError> {
    match answers {
        [now, prev, before, ..] => {
            let (now, prev, before) = (now.as_ref(), prev.as_ref(), before.as_ref());
            Ok(now == before && now != prev)
        }
        _ => Err(JudgeError::InsufficientHistory(answers.len())),
    }
}

pub fn check_overshoot(s_t: f64, s_prev: f64, delta: f64) -> bool {
    s_t > s_prev + delta
}

/// Lowest-severity entry; the earliest wins a tie.
pub fn select_best(buffer: &VersionBuffer) -> Result<(&BufferEntry, usize), JudgeError> {
    let mut best: Option<(&BufferEntry, usize)> = None;
    for (i, e) in buffer.entries().iter().enumerate() {
        if best.is_none_or(|(b, _)| e.severity < b.severity) {
            best = Some((e, i));
        }
    }
    best.ok_or(JudgeError::EmptyBuffer)
}

/// Everything the judge looks at for iteration `t`: the fresh output's
/// severity and answer, plus the buffer of accepted versions `0..t`.
#[derive(Debug, Clone, Copy)]
pub struct JudgeState<'a> {
    pub t: usize,
    pub severity: f64,
    pub answer: &'a str,
    pub buffer: &'a VersionBuffer,
}

/// Applies the tests in order: convergence, oscillation (from `t >= 2`),
/// overshoot, then the iteration bound.
pub fn judge(state: &JudgeState<'_>, params: &Hyperparameters) -> JudgeDecision {
    let buffer = state.buffer;
    let prev = buffer.last();
    if check_convergence(state.severity, prev.severity, params.epsilon) {
        return JudgeDecision::Converged;
    }
    if state.t >= 2 && buffer.len() >= 2 {
        let before = &buffer.entries()[buffer.len() - 2];
        let oscillating = check_oscillation(&[
            state.answer,
            prev.version.final_answer.as_str(),
            before.version.final_answer.as_str(),
        ])
        .unwrap_or(false);
        if oscillating {
            let (_, best_index) = select_best(buffer).expect("non-empty buffer");
            return JudgeDecision::Oscillation { best_index };
        }
    }
    if check_overshoot(state.severity, prev.severity, params.delta) {
        return JudgeDecision::OvershootRollback;
    }
    if state.t >= params.t_max {
        return JudgeDecision::MaxIterations;
    }
    JudgeDecision::Continue
}
