//! Answer normalization and extraction.
//!
//! Two answers are equal throughout the engine iff their normalized strings
//! are equal. Normalization lowercases, peels answer-announcing phrases,
//! wrapping quotes/emphasis and trailing punctuation until nothing changes,
//! then canonicalizes plain numbers (`"48.0"` → `"48"`, `"32.0 %"` → `"32%"`,
//! `"1,200"` → `"1200"`, `"$36"` → `"36"`).

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::types::ReasoningChain;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("chain has no steps")]
    EmptyChain,
    #[error("no answer pattern matched {0:?}")]
    ExtractionFailed(String),
}

static ANSWER_PREFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:(?:so|thus|therefore|hence)\s*,?\s*)?(?:the\s+)?(?:final\s+)?answer(?:\s+is\b|\s*[:=])\s*")
        .expect("answer prefix pattern")
});

static ANSWER_PHRASE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\banswer(?:\s+is\b|\s*[:=])\s*(.+)$").expect("answer phrase pattern"));

static TRAILING_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([-+]?\$?\d[\d,]*(?:\.\d+)?\s*%?)[\s.!;:,)]*$").expect("trailing number pattern"));

static PLAIN_NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([-+])?\$?\s*(\d{1,3}(?:,\d{3})+|\d*)(?:\.(\d+))?\s*(%)?$").expect("plain number pattern")
});

const TRAILING_PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?'];
const WRAPPERS: &[char] = &['"', '\'', '`', '*'];

/// Canonical form used for every answer comparison.
pub fn normalize_answer(raw: &str) -> String {
    let mut current = raw.to_lowercase();
    loop {
        let next = peel_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    canonical_number(&current).unwrap_or(current)
}

fn peel_once(s: &str) -> String {
    let s = s.trim();
    let s = ANSWER_PREFIX.replace(s, "");
    let s = s.trim().trim_end_matches(TRAILING_PUNCTUATION).trim_end();
    let s = strip_wrappers(s);
    s.to_string()
}

fn strip_wrappers(s: &str) -> &str {
    for &w in WRAPPERS {
        if s.len() >= 2 && s.starts_with(w) && s.ends_with(w) {
            return s[w.len_utf8()..s.len() - w.len_utf8()].trim();
        }
    }
    s
}

fn canonical_number(s: &str) -> Option<String> {
    let caps = PLAIN_NUMBER.captures(s)?;
    let int_raw = caps.get(2).map_or("", |m| m.as_str());
    let frac_raw = caps.get(3).map_or("", |m| m.as_str());
    if int_raw.is_empty() && frac_raw.is_empty() {
        return None;
    }
    let int_digits: String = int_raw.chars().filter(|c| *c != ',').collect();
    let int_part = int_digits.trim_start_matches('0');
    let int_part = if int_part.is_empty() { "0" } else { int_part };
    let frac_part = frac_raw.trim_end_matches('0');

    let is_zero = int_part == "0" && frac_part.is_empty();
    let negative = caps.get(1).is_some_and(|m| m.as_str() == "-") && !is_zero;

    let mut out = String::with_capacity(s.len());
    if negative {
        out.push('-');
    }
    out.push_str(int_part);
    if !frac_part.is_empty() {
        out.push('.');
        out.push_str(frac_part);
    }
    if caps.get(4).is_some() {
        out.push('%');
    }
    Some(out)
}

/// Pulls the answer out of free text: an `answer is/:` phrase, else a
/// trailing numeric value, else whatever follows the last `=`.
pub fn extract_from_text(text: &str) -> Result<String, AnswerError> {
    if let Some(caps) = ANSWER_PHRASE.captures(text) {
        let candidate = normalize_answer(&caps[1]);
        if !candidate.is_empty() {
            return Ok(candidate);
        }
    }
    if let Some(caps) = TRAILING_NUMBER.captures(text) {
        let candidate = normalize_answer(&caps[1]);
        if !candidate.is_empty() {
            return Ok(candidate);
        }
    }
    if let Some((_, rhs)) = text.rsplit_once('=') {
        let candidate = normalize_answer(rhs);
        if !candidate.is_empty() {
            return Ok(candidate);
        }
    }
    Err(AnswerError::ExtractionFailed(text.to_string()))
}

/// Final answer of a chain: the explicit answer field when set, otherwise the
/// trailing value expression of the last step.
pub fn extract_answer(chain: &ReasoningChain) -> Result<String, AnswerError> {
    if let Some(explicit) = &chain.answer_field {
        return Ok(normalize_answer(explicit));
    }
    let last = chain.steps.last().ok_or(AnswerError::EmptyChain)?;
    extract_from_text(&last.text)
}

/// [`extract_answer`] with the documented fallback: the whole normalized last
/// step when no pattern matches.
pub fn answer_or_fallback(chain: &ReasoningChain) -> String {
    match extract_answer(chain) {
        Ok(answer) => answer,
        Err(_) => chain.steps.last().map(|s| normalize_answer(&s.text)).unwrap_or_default(),
    }
}

/// Answer equality used by the judge and the metrics.
pub fn answers_equal(a: &str, b: &str) -> bool {
    normalize_answer(a) == normalize_answer(b)
}
