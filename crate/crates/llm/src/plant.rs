use std::fs::{File, OpenOptions};
use std::io::Write;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use closedloop::controller::{ControlInput, CorrectionMode};
use closedloop::detector::{Modality, ModalityFailure};
use closedloop::types::StepFlags;
use closedloop::{BenchTask, Metered, ModalityObservations, ModalitySet, Plant, PlantError, ReasoningChain};
use serde_json::json;
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatRequest, HttpBackend, Message, Purpose};
use crate::config::{EndpointConfig, EndpointConfigError};
use crate::parse::{self, ParseError};
use crate::prompts;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Config(#[from] EndpointConfigError),
    #[error("cannot open capture file: {0}")]
    Capture(#[from] std::io::Error),
}

/// Counting semaphore bounding requests in flight.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(slots: usize) -> Self {
        Gate { free: Mutex::new(slots), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Plant backed by a chat-completions endpoint.
///
/// Safe to share across threads; at most `max_in_flight` requests are
/// outstanding at once. Every request other than the K samples runs at
/// `verify_temperature`. Reported call counts include reformat retries but
/// not transport retries.
pub struct LlmPlant<B> {
    backend: B,
    config: EndpointConfig,
    gate: Gate,
    capture: Option<Mutex<File>>,
}

impl LlmPlant<HttpBackend> {
    pub fn from_config(config: EndpointConfig) -> Result<Self, LlmError> {
        let backend = HttpBackend::from_config(&config);
        Self::new(backend, config)
    }
}

impl<B: ChatBackend> LlmPlant<B> {
    pub fn new(backend: B, config: EndpointConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let capture = match &config.capture_path {
            Some(p) => Some(Mutex::new(OpenOptions::new().create(true).append(true).open(p)?)),
            None => None,
        };
        Ok(LlmPlant { gate: Gate::new(config.max_in_flight), backend, config, capture })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn record(&self, request: &ChatRequest, attempt: u32, outcome: &Result<String, BackendError>) {
        let Some(file) = &self.capture else { return };
        let (response, error) = match outcome {
            Ok(text) => (Some(text.as_str()), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let line = json!({
            "purpose": request.purpose,
            "attempt": attempt,
            "request": request,
            "response": response,
            "error": error,
        });
        let mut f = file.lock().expect("capture lock");
        if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
            log::warn!("capture write failed: {e}");
        }
    }

    /// One logical request, retried on transient failures.
    fn send(
        &self,
        purpose: Purpose,
        messages: Vec<Message>,
        temperature: f64,
        calls: &AtomicU32,
    ) -> Result<String, PlantError> {
        calls.fetch_add(1, Ordering::Relaxed);
        let request =
            ChatRequest { purpose: Some(purpose), model: self.config.model_name.clone(), messages, temperature };
        let mut attempt = 0;
        loop {
            let outcome = {
                let _permit = self.gate.acquire();
                self.backend.complete(&request)
            };
            self.record(&request, attempt, &outcome);
            match outcome {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let delay = self.config.retry_backoff_ms.saturating_mul(1 << attempt.min(16)).min(60_000);
                    log::warn!("{purpose:?} request failed ({e}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(PlantError::Transport(e.to_string())),
            }
        }
    }

    /// A request whose reply must parse; a reply that does not gets one
    /// reformat request before giving up.
    fn ask<T>(
        &self,
        purpose: Purpose,
        messages: Vec<Message>,
        temperature: f64,
        calls: &AtomicU32,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, PlantError> {
        let reply = self.send(purpose, messages.clone(), temperature, calls)?;
        match parse(&reply) {
            Ok(v) => Ok(v),
            Err(first) => {
                log::debug!("{purpose:?} reply did not parse ({first}); asking for a reformat");
                let retry = self.send(purpose, prompts::reformat(messages, &reply), temperature, calls)?;
                parse(&retry).map_err(|e| PlantError::Parse(format!("{purpose:?}: {e}")))
            }
        }
    }
}

fn check_task(task: &BenchTask) -> Result<(), PlantError> {
    if task.question.trim().is_empty() {
        return Err(PlantError::InvalidTask(format!("task {} has an empty question", task.id)));
    }
    Ok(())
}

fn join<T>(h: std::thread::ScopedJoinHandle<'_, T>) -> T {
    h.join().expect("request thread panicked")
}

/// The modality's value, or `None` with the failure recorded.
fn keep<T>(
    modality: Modality,
    result: Option<Result<T, PlantError>>,
    failures: &mut Vec<ModalityFailure>,
) -> Option<T> {
    match result? {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("{modality:?} modality failed: {e}");
            failures.push(ModalityFailure { modality, message: e.to_string() });
            None
        }
    }
}

impl<B: ChatBackend> Plant for LlmPlant<B> {
    fn generate(&self, task: &BenchTask) -> Result<Metered<ReasoningChain>, PlantError> {
        check_task(task)?;
        let calls = AtomicU32::new(0);
        let chain = self.ask(
            Purpose::Generate,
            prompts::generate(&task.question),
            self.config.verify_temperature,
            &calls,
            |r| parse::parse_chain(r, &task.id),
        )?;
        Ok(Metered::new(chain, calls.into_inner()))
    }

    fn observe(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        k: usize,
        needs: ModalitySet,
    ) -> Result<Metered<ModalityObservations>, PlantError> {
        check_task(task)?;
        let calls = AtomicU32::new(0);
        let q = task.question.as_str();
        let n = chain.len();
        let verify = self.config.verify_temperature;

        let (samples, confidences, entailment) = std::thread::scope(|s| {
            let samples: Vec<_> = if needs.self_consistency {
                (0..k)
                    .map(|draw| {
                        let calls = &calls;
                        s.spawn(move || {
                            self.ask(
                                Purpose::Sample { draw },
                                prompts::generate(q),
                                self.config.sample_temperature,
                                calls,
                                parse::parse_sample_answer,
                            )
                        })
                    })
                    .collect()
            } else {
                vec![]
            };
            let confidence = needs.confidence.then(|| {
                s.spawn(|| {
                    self.ask(Purpose::Confidence, prompts::confidence(q, chain), verify, &calls, |r| {
                        parse::parse_confidences(r, n)
                    })
                })
            });
            let verdicts: Vec<_> = if needs.logic_chain {
                (2..=n)
                    .map(|step| {
                        let calls = &calls;
                        s.spawn(move || {
                            self.ask(
                                Purpose::Entailment { step },
                                prompts::entailment(q, chain, step),
                                verify,
                                calls,
                                parse::parse_verdict,
                            )
                        })
                    })
                    .collect()
            } else {
                vec![]
            };
            (
                needs.self_consistency.then(|| samples.into_iter().map(join).collect::<Result<Vec<String>, _>>()),
                confidence.map(join),
                needs.logic_chain.then(|| verdicts.into_iter().map(join).collect::<Result<Vec<bool>, _>>()),
            )
        });

        let mut failures = vec![];
        let obs = ModalityObservations {
            samples: keep(Modality::SelfConsistency, samples, &mut failures),
            step_confidences: keep(Modality::Confidence, confidences, &mut failures),
            entailment: keep(Modality::LogicChain, entailment, &mut failures),
            step_flags: StepFlags::for_chain(chain),
            failures,
        };
        let requested = [needs.self_consistency, needs.confidence, needs.logic_chain].iter().filter(|x| **x).count();
        if requested > 0 && obs.failures.len() == requested {
            let all: Vec<String> = obs.failures.iter().map(|f| f.message.clone()).collect();
            return Err(PlantError::AllModalitiesFailed(all.join("; ")));
        }
        Ok(Metered::new(obs, calls.into_inner()))
    }

    fn correct(
        &self,
        task: &BenchTask,
        chain: &ReasoningChain,
        input: &ControlInput,
    ) -> Result<Metered<ReasoningChain>, PlantError> {
        check_task(task)?;
        let calls = AtomicU32::new(0);
        let verify = self.config.verify_temperature;
        let feedback = match &input.feedback_request {
            Some(req) => {
                Some(self.send(Purpose::Feedback, prompts::feedback(&task.question, chain, req), verify, &calls)?)
            }
            None => None,
        };
        let messages = prompts::correct(&task.question, chain, input, feedback.as_deref());
        let out = match (input.mode, input.location) {
            (CorrectionMode::RegenerateFrom, Some(l)) if l > 1 => {
                let kept = &chain.steps[..(l - 1).min(chain.len())];
                self.ask(Purpose::Correct, messages, verify, &calls, |r| {
                    parse::parse_continuation(r, &task.id, kept, l)
                })?
            }
            _ => self.ask(Purpose::Correct, messages, verify, &calls, |r| parse::parse_chain(r, &task.id))?,
        };
        Ok(Metered::new(out, calls.into_inner()))
    }
}
