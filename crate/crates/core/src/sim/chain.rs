//! Synthetic chain text. A chain is a running computation that ends at the
//! gold answer; an error at step `l` shifts every value from `l` on by a
//! fixed offset, so the final answer is wrong exactly when an error exists.

use std::ops::RangeInclusive;
use std::sync::LazyLock;

use rand::Rng;
use regex::Regex;

use crate::types::{ErrorType, ReasoningChain};

static NUMERIC_GOLD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(-)?(\d{1,12})(?:\.(\d{1,4}))?(%)?$").expect("gold pattern"));

const REVIEW_PREFIX: &str = "Review ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Gold {
    Number { scaled: i64, decimals: u32, percent: bool },
    Text(String),
}

impl Gold {
    pub(crate) fn parse(normalized: &str) -> Gold {
        let Some(c) = NUMERIC_GOLD.captures(normalized) else {
            return Gold::Text(normalized.to_string());
        };
        let frac = c.get(3).map_or("", |m| m.as_str());
        let decimals = frac.len() as u32;
        let digits = format!("{}{}", &c[2], frac);
        let mut scaled: i64 = digits.parse().expect("bounded digit run");
        if c.get(1).is_some() {
            scaled = -scaled;
        }
        Gold::Number { scaled, decimals, percent: c.get(4).is_some() }
    }

    fn format(&self, value: i64) -> String {
        let (decimals, percent) = match self {
            Gold::Number { decimals, percent, .. } => (*decimals, *percent),
            Gold::Text(_) => (0, false),
        };
        let sign = if value < 0 { "-" } else { "" };
        let abs = value.unsigned_abs();
        let mut out = if decimals == 0 {
            format!("{sign}{abs}")
        } else {
            let unit = 10u64.pow(decimals);
            format!("{sign}{}.{:0width$}", abs / unit, abs % unit, width = decimals as usize)
        };
        if percent {
            out.push('%');
        }
        out
    }

    fn unit(&self) -> i64 {
        match self {
            Gold::Number { decimals, .. } => 10i64.pow(*decimals),
            Gold::Text(_) => 1,
        }
    }

    pub(crate) fn answer(&self) -> String {
        match self {
            Gold::Number { scaled, .. } => self.format(*scaled),
            Gold::Text(t) => t.clone(),
        }
    }

    /// A wrong final answer. Numeric answers move by `offset` units of the
    /// last printed digit.
    pub(crate) fn wrong(&self, offset: i64) -> String {
        match self {
            Gold::Number { scaled, .. } => self.format(scaled + offset),
            Gold::Text(t) => match t.as_str() {
                "yes" => "no".into(),
                "no" => "yes".into(),
                "true" => "false".into(),
                "false" => "true".into(),
                other => format!("not {other}"),
            },
        }
    }
}

/// The error a synthetic chain carries: type, 1-based step, and the value
/// offset it introduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ErrorSpec {
    pub error_type: ErrorType,
    pub location: usize,
    pub offset: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Row {
    prev: i64,
    result: i64,
}

/// Values behind a chain, independent of any error placed on it.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Skeleton {
    gold: Gold,
    len: usize,
    rows: Vec<Row>,
}

impl Skeleton {
    pub(crate) fn build(gold_answer: &str, len: usize, rng: &mut impl Rng) -> Skeleton {
        assert!(len >= 2, "synthetic chains have at least two steps");
        let gold = Gold::parse(gold_answer);
        let (target, numeric_rows) = match &gold {
            Gold::Number { scaled, .. } => (*scaled, len),
            Gold::Text(_) => (rng.random_range(20..=120), len - 1),
        };
        let span = 20 * gold.unit();
        let mut rows = Vec::with_capacity(numeric_rows);
        let mut value = target;
        for _ in 0..numeric_rows {
            let d = rng.random_range(1..=span);
            let prev = if value - d >= 0 { value - d } else { value + d };
            rows.push(Row { prev, result: value });
            value = prev;
        }
        rows.reverse();
        Skeleton { gold, len, rows }
    }

    pub(crate) fn gold(&self) -> &Gold {
        &self.gold
    }

    /// Steps an error of this type may sit on. Arithmetic needs a numeric
    /// step; a logic gap needs a preceding step.
    pub(crate) fn valid_locations(&self, error_type: ErrorType) -> RangeInclusive<usize> {
        match error_type {
            ErrorType::Arithmetic => 1..=self.rows.len(),
            ErrorType::LogicGap => 2..=self.len,
            ErrorType::Premise | ErrorType::None => 1..=self.len,
        }
    }

    pub(crate) fn draw_offset(&self, location: usize, rng: &mut impl Rng) -> i64 {
        let magnitude = rng.random_range(1..=9);
        let offset = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        let lowest = self
            .rows
            .iter()
            .enumerate()
            .filter(|(i, _)| i + 1 >= location)
            .flat_map(|(i, r)| {
                let prev = (i + 1 > location).then_some(r.prev);
                std::iter::once(r.result).chain(prev)
            })
            .min();
        match (lowest, &self.gold) {
            (Some(v), _) if v + offset < 0 => magnitude,
            (_, Gold::Number { scaled, .. }) if scaled + offset < 0 => magnitude,
            _ => offset,
        }
    }

    pub(crate) fn draw_error(&self, error_type: ErrorType, rng: &mut impl Rng) -> ErrorSpec {
        let location = rng.random_range(self.valid_locations(error_type));
        let offset = self.draw_offset(location, rng);
        ErrorSpec { error_type, location, offset }
    }

    /// Places `location` inside the valid range for its type.
    pub(crate) fn clamp_location(&self, error_type: ErrorType, location: usize) -> usize {
        let r = self.valid_locations(error_type);
        location.clamp(*r.start(), *r.end())
    }

    fn row_text(&self, row: Row, shift: i64) -> String {
        let prev = row.prev + shift;
        let result = row.result + shift;
        let delta = row.result - row.prev;
        let op = if delta >= 0 { '+' } else { '-' };
        format!("{} {op} {} = {}", self.gold.format(prev), self.gold.format(delta.abs()), self.gold.format(result))
    }

    pub(crate) fn render(&self, task_id: &str, error: Option<ErrorSpec>, review: Option<u64>) -> ReasoningChain {
        let mut steps = Vec::with_capacity(self.len);
        for (i, row) in self.rows.iter().enumerate() {
            let j = i + 1;
            let text = match error {
                Some(e) if j == e.location => match e.error_type {
                    ErrorType::Arithmetic => {
                        let delta = row.result - row.prev;
                        let op = if delta >= 0 { '+' } else { '-' };
                        format!(
                            "{} {op} {} = {}",
                            self.gold.format(row.prev),
                            self.gold.format(delta.abs()),
                            self.gold.format(row.result + e.offset)
                        )
                    }
                    ErrorType::LogicGap => {
                        format!("So it follows that the running total is {}", self.gold.format(row.result + e.offset))
                    }
                    _ => format!("Since each unit always counts as {}", self.gold.format(row.result + e.offset)),
                },
                Some(e) if j > e.location => self.row_text(*row, e.offset),
                _ => self.row_text(*row, 0),
            };
            steps.push(text);
        }
        if let Gold::Text(gold) = &self.gold {
            let text = match error {
                None => format!("So the answer is {gold}"),
                Some(e) => {
                    let wrong = self.gold.wrong(e.offset);
                    match (e.location == self.len, e.error_type) {
                        (true, ErrorType::LogicGap) => format!("So it follows that the answer is {wrong}"),
                        (true, _) => format!("Since it is always the case, the answer is {wrong}"),
                        (false, _) => format!("So the answer is {wrong}"),
                    }
                }
            };
            steps.push(text);
        }
        if let (Some(e), Some(r)) = (error, review) {
            let step = &mut steps[e.location - 1];
            let body = strip_review(step).to_string();
            *step = format!("{REVIEW_PREFIX}{r}: {body}");
        }
        ReasoningChain::new(task_id, steps, None).expect("synthetic chains are non-empty")
    }
}

fn strip_review(text: &str) -> &str {
    text.strip_prefix(REVIEW_PREFIX).and_then(|rest| rest.split_once(": ").map(|(_, body)| body)).unwrap_or(text)
}
