//! Parsers for the fixed reply formats the prompts ask for. They are strict
//! about structure and lenient about decoration (bold markers, spacing,
//! case), and never panic on arbitrary text.

use std::sync::LazyLock;

use closedloop::answer::extract_from_text;
use closedloop::types::{ChainError, Step};
use closedloop::ReasoningChain;
use regex::Regex;
use thiserror::Error;

static STEP_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*[*#_]*\s*step\s*(\d+)\s*[*_]*\s*[:.)\-]?\s*[*_]*\s*(.*)$").unwrap());
static ANSWER_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*[*#_]*\s*(?:final\s+)?answer\s*[*_]*\s*:\s*[*_]*\s*(.*?)[\s*_]*$").unwrap());
static CONFIDENCE_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*[*_]*\s*step\s*(\d+)\s*[*_]*\s*[:=\-]?\s*[*_]*\s*(-?\d+(?:\.\d+)?)\s*(?:%|/\s*100)?").unwrap()
});
static BARE_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(-?\d+(?:\.\d+)?)\s*(?:%|/\s*100)?\s*$").unwrap());

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("no \"Step N:\" lines found")]
    NoSteps,
    #[error("steps out of order: expected step {expected}, found step {found}")]
    Numbering { expected: usize, found: usize },
    #[error("step {0} is empty")]
    EmptyStep(usize),
    #[error("no \"Answer:\" line found")]
    NoAnswer,
    #[error("continuation must start at step 1 or step {expected}, found step {found}")]
    Continuation { expected: usize, found: usize },
    #[error("expected {expected} confidences, got {got}")]
    ConfidenceCount { expected: usize, got: usize },
    #[error("confidence for step {0} given twice")]
    DuplicateConfidence(usize),
    #[error("confidence for step {0}, but the chain has {1} steps")]
    ConfidenceOutOfRange(usize, usize),
    #[error("expected yes or no, got {0:?}")]
    NotAVerdict(String),
    #[error("could not find an answer in {0:?}")]
    NoSampleAnswer(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Numbered steps and the answer line, as they appear in a reply.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSolution {
    pub first_step: usize,
    pub steps: Vec<String>,
    pub answer: Option<String>,
}

/// Splits a reply into numbered steps. Lines before the first step are
/// ignored, unlabeled lines continue the current step, and anything after
/// the answer line is dropped. Numbers must be consecutive.
pub fn split_solution(reply: &str) -> Result<RawSolution, ParseError> {
    let mut first_step = None;
    let mut steps: Vec<String> = vec![];
    let mut answer = None;
    for line in reply.lines() {
        if let Some(c) = ANSWER_LINE.captures(line) {
            answer = Some(c[1].trim().to_string()).filter(|a| !a.is_empty());
            break;
        }
        if let Some(c) = STEP_LINE.captures(line) {
            let n: usize = c[1].parse().unwrap_or(usize::MAX);
            let expected = match first_step {
                None => n,
                Some(f) => f + steps.len(),
            };
            if n != expected {
                return Err(ParseError::Numbering { expected, found: n });
            }
            first_step.get_or_insert(n);
            steps.push(c[2].trim().to_string());
        } else if let Some(last) = steps.last_mut() {
            let extra = line.trim();
            if !extra.is_empty() {
                if !last.is_empty() {
                    last.push(' ');
                }
                last.push_str(extra);
            }
        }
    }
    let first_step = first_step.ok_or(ParseError::NoSteps)?;
    if let Some(i) = steps.iter().position(|s| s.is_empty()) {
        return Err(ParseError::EmptyStep(first_step + i));
    }
    Ok(RawSolution { first_step, steps, answer })
}

/// A complete solution: steps from 1 and an answer line.
pub fn parse_chain(reply: &str, task_id: &str) -> Result<ReasoningChain, ParseError> {
    let raw = split_solution(reply)?;
    if raw.first_step != 1 {
        return Err(ParseError::Numbering { expected: 1, found: raw.first_step });
    }
    let answer = raw.answer.ok_or(ParseError::NoAnswer)?;
    Ok(ReasoningChain::new(task_id, raw.steps, Some(answer))?)
}

/// A solution that either restarts at step 1 or continues at `from`, in
/// which case `kept` (steps 1..from) is prepended.
pub fn parse_continuation(
    reply: &str,
    task_id: &str,
    kept: &[Step],
    from: usize,
) -> Result<ReasoningChain, ParseError> {
    let raw = split_solution(reply)?;
    let answer = raw.answer.ok_or(ParseError::NoAnswer)?;
    let steps: Vec<String> = if raw.first_step == 1 {
        raw.steps
    } else if raw.first_step == from {
        kept.iter().map(|s| s.text.clone()).chain(raw.steps).collect()
    } else {
        return Err(ParseError::Continuation { expected: from, found: raw.first_step });
    };
    Ok(ReasoningChain::new(task_id, steps, Some(answer))?)
}

/// Final answer of a sampled solution: the answer line when present, else
/// whatever answer phrase the text contains.
pub fn parse_sample_answer(reply: &str) -> Result<String, ParseError> {
    if let Ok(RawSolution { answer: Some(a), .. }) = split_solution(reply) {
        let a = closedloop::normalize_answer(&a);
        if !a.is_empty() {
            return Ok(a);
        }
    }
    extract_from_text(reply).map_err(|_| ParseError::NoSampleAnswer(reply.chars().take(200).collect()))
}

/// One confidence per step, as `Step N: value` lines or, failing that,
/// exactly `steps` bare numbers in order. Values outside 0..=100 are clamped
/// with a warning.
pub fn parse_confidences(reply: &str, steps: usize) -> Result<Vec<f64>, ParseError> {
    let mut slots: Vec<Option<f64>> = vec![None; steps];
    let mut labeled = 0;
    for line in reply.lines() {
        let Some(c) = CONFIDENCE_LINE.captures(line) else { continue };
        let j: usize = c[1].parse().unwrap_or(usize::MAX);
        let v: f64 = c[2].parse().unwrap_or(f64::NAN);
        if j == 0 || j > steps {
            return Err(ParseError::ConfidenceOutOfRange(j, steps));
        }
        if slots[j - 1].replace(v).is_some() {
            return Err(ParseError::DuplicateConfidence(j));
        }
        labeled += 1;
    }
    if labeled == 0 {
        let bare: Vec<f64> =
            reply.lines().filter_map(|l| BARE_NUMBER.captures(l)).filter_map(|c| c[1].parse().ok()).collect();
        if bare.len() != steps {
            return Err(ParseError::ConfidenceCount { expected: steps, got: bare.len() });
        }
        slots = bare.into_iter().map(Some).collect();
    }
    let got = slots.iter().flatten().count();
    if got != steps {
        return Err(ParseError::ConfidenceCount { expected: steps, got });
    }
    Ok(slots
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let v = v.unwrap_or_default();
            let clamped = v.clamp(0.0, 100.0);
            if clamped != v {
                log::warn!("confidence {v} for step {} clamped to {clamped}", i + 1);
            }
            clamped
        })
        .collect())
}

/// `yes`/`no` (or `true`/`false`) as the first word of the reply.
pub fn parse_verdict(reply: &str) -> Result<bool, ParseError> {
    let word: String = reply
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" | "true" => Ok(true),
        "no" | "false" => Ok(false),
        _ => Err(ParseError::NotAVerdict(reply.chars().take(80).collect())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_solution() {
        let reply =
            "Step 1: 20% off leaves 0.80.\nStep 2: 15% off leaves 0.85.\nStep 3: 0.80 × 0.85 = 0.68\nAnswer: 32%";
        let c = parse_chain(reply, "t").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.steps[2].text, "0.80 × 0.85 = 0.68");
        assert_eq!(c.final_answer, "32%");
    }

    #[test]
    fn decorated_solution_with_preamble_and_wrapped_lines() {
        let reply = "Sure! Here is my solution.\n\n**Step 1:** First part\n  continues here\n**Step 2.** Then 3 + 4 = 7\n\n**Final Answer:** 7\nHope this helps.";
        let c = parse_chain(reply, "t").unwrap();
        assert_eq!(c.steps[0].text, "First part continues here");
        assert_eq!(c.final_answer, "7");
    }

    #[test]
    fn structural_failures() {
        assert_eq!(parse_chain("The answer is 4.", "t"), Err(ParseError::NoSteps));
        assert_eq!(parse_chain("Step 1: a\nStep 2: b", "t"), Err(ParseError::NoAnswer));
        assert_eq!(
            parse_chain("Step 1: a\nStep 3: b\nAnswer: 1", "t"),
            Err(ParseError::Numbering { expected: 2, found: 3 })
        );
        assert_eq!(parse_chain("Step 2: a\nAnswer: 1", "t"), Err(ParseError::Numbering { expected: 1, found: 2 }));
        assert_eq!(parse_chain("Step 1:\nAnswer: 1", "t"), Err(ParseError::EmptyStep(1)));
        assert_eq!(parse_chain("Step 1: a\nAnswer:   ", "t"), Err(ParseError::NoAnswer));
    }

    #[test]
    fn continuation_splices_kept_steps() {
        let kept = ReasoningChain::new("t", ["a", "b", "c"], None).unwrap();
        let c = parse_continuation("Step 3: c2\nStep 4: d\nAnswer: 9", "t", &kept.steps[..2], 3).unwrap();
        let texts: Vec<&str> = c.steps.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["a", "b", "c2", "d"]);
        let c = parse_continuation("Step 1: x\nAnswer: 9", "t", &kept.steps[..2], 3).unwrap();
        assert_eq!(c.len(), 1);
        assert!(matches!(
            parse_continuation("Step 2: x\nAnswer: 9", "t", &kept.steps[..2], 3),
            Err(ParseError::Continuation { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn sample_answers() {
        assert_eq!(parse_sample_answer("Step 1: 6 × 6 = 36\nAnswer: 36").unwrap(), "36");
        assert_eq!(parse_sample_answer("so the answer is 48.").unwrap(), "48");
        assert!(parse_sample_answer("I am not sure.").is_err());
    }

    #[test]
    fn confidences() {
        assert_eq!(parse_confidences("Step 1: 90\nstep 2: 35\nStep 3: 88", 3).unwrap(), [90.0, 35.0, 88.0]);
        assert_eq!(parse_confidences("Step 2: 35/100\nStep 1: 90%", 2).unwrap(), [90.0, 35.0]);
        assert_eq!(parse_confidences("80\n70", 2).unwrap(), [80.0, 70.0]);
        assert_eq!(parse_confidences("Step 1: 140\nStep 2: -5", 2).unwrap(), [100.0, 0.0]);
        assert_eq!(parse_confidences("Step 1: 90", 2), Err(ParseError::ConfidenceCount { expected: 2, got: 1 }));
        assert_eq!(parse_confidences("Step 1: 9\nStep 1: 8", 2), Err(ParseError::DuplicateConfidence(1)));
        assert_eq!(parse_confidences("Step 3: 9", 2), Err(ParseError::ConfidenceOutOfRange(3, 2)));
    }

    #[test]
    fn verdicts() {
        assert!(parse_verdict("Yes.").unwrap());
        assert!(parse_verdict("**yes** it follows").unwrap());
        assert!(!parse_verdict("No, step 3 skips a case").unwrap());
        assert!(!parse_verdict("false").unwrap());
        assert!(parse_verdict("Maybe").is_err());
        assert!(parse_verdict("").is_err());
    }
}
