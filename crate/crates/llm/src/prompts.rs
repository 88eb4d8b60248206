//! Prompt text for every request the adapter makes. Each one pins the reply
//! to a line format the parsers in [`crate::parse`] accept.

use closedloop::controller::{ControlInput, CorrectionMode};
use closedloop::ReasoningChain;

use crate::backend::Message;

pub const SOLVER_SYSTEM: &str = "You solve problems step by step. Write each step on its own line as \
\"Step N: ...\", numbering from 1. After the last step write one line \"Answer: <final answer>\" \
and nothing else.";

pub const VERIFIER_SYSTEM: &str = "You check reasoning carefully and reply in exactly the format requested.";

pub const REFORMAT_REQUEST: &str = "Your reply did not follow the required format. Restate the same content \
exactly in the required format, with no other text.";

/// The chain as the solver format prints it.
pub fn render_chain(chain: &ReasoningChain) -> String {
    let mut out = String::new();
    for s in &chain.steps {
        out.push_str(&format!("Step {}: {}\n", s.index, s.text));
    }
    out.push_str(&format!("Answer: {}", chain.answer_field.as_deref().unwrap_or(&chain.final_answer)));
    out
}

pub fn generate(question: &str) -> Vec<Message> {
    vec![Message::system(SOLVER_SYSTEM), Message::user(format!("Problem: {question}"))]
}

pub fn confidence(question: &str, chain: &ReasoningChain) -> Vec<Message> {
    vec![
        Message::system(VERIFIER_SYSTEM),
        Message::user(format!(
            "Problem: {question}\n\nSolution:\n{}\n\nFor each step, rate your confidence that the step is \
correct on a scale from 0 to 100. Reply with exactly {} lines of the form \"Step N: <integer>\".",
            render_chain(chain),
            chain.len()
        )),
    ]
}

/// Does step `next` follow from step `next - 1`?
pub fn entailment(question: &str, chain: &ReasoningChain, next: usize) -> Vec<Message> {
    vec![
        Message::system(VERIFIER_SYSTEM),
        Message::user(format!(
            "Problem: {question}\n\nSolution:\n{}\n\nDoes Step {next} follow logically from Step {} and the \
problem statement? Reply with one word: yes or no.",
            render_chain(chain),
            next - 1
        )),
    ]
}

pub fn feedback(question: &str, chain: &ReasoningChain, request: &str) -> Vec<Message> {
    vec![
        Message::system(VERIFIER_SYSTEM),
        Message::user(format!("Problem: {question}\n\nSolution:\n{}\n\n{request}", render_chain(chain))),
    ]
}

/// Correction request. A targeted edit shows the whole prior chain; a
/// regeneration from step l shows only steps 1..l and asks for the rest.
/// `feedback` is the first-phase reply of a feedback-then-refine pair.
pub fn correct(question: &str, chain: &ReasoningChain, input: &ControlInput, feedback: Option<&str>) -> Vec<Message> {
    let body = match (input.mode, input.location) {
        (CorrectionMode::RegenerateFrom, Some(l)) if l <= 1 => format!(
            "Problem: {question}\n\nA previous attempt went wrong from the first step.\n\n{}\n\nSolve the \
problem again from Step 1 in the required format.",
            input.instruction_text
        ),
        (CorrectionMode::RegenerateFrom, Some(l)) => {
            let kept: String = chain.steps[..(l - 1).min(chain.len())]
                .iter()
                .map(|s| format!("Step {}: {}\n", s.index, s.text))
                .collect();
            format!(
                "Problem: {question}\n\nKeep these steps exactly as written:\n{kept}\n{}\n\nContinue the \
solution starting from Step {l}, in the required format, and finish with the Answer line.",
                input.instruction_text
            )
        }
        _ => {
            let fb = feedback.map(|f| format!("Feedback:\n{f}\n\n")).unwrap_or_default();
            format!(
                "Problem: {question}\n\nPrevious solution:\n{}\n\n{fb}{}\n\nWrite the full corrected solution \
in the required format.",
                render_chain(chain),
                input.instruction_text
            )
        }
    };
    vec![Message::system(SOLVER_SYSTEM), Message::user(body)]
}

/// Appends the bad reply and a request to restate it.
pub fn reformat(mut messages: Vec<Message>, bad_reply: &str) -> Vec<Message> {
    messages.push(Message::assistant(bad_reply));
    messages.push(Message::user(REFORMAT_REQUEST));
    messages
}
