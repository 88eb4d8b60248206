//! A [`closedloop::Plant`] that talks to a chat-completions endpoint.
//!
//! The three sensing modalities are elicited by prompting: K sampled
//! solutions, one per-step confidence request and one yes/no entailment
//! request per consecutive step pair. Step content flags are computed
//! locally.

pub mod backend;
pub mod config;
pub mod parse;
pub mod plant;
pub mod prompts;

pub use backend::{BackendError, ChatBackend, ChatRequest, HttpBackend, Message, Purpose, Role};
pub use config::EndpointConfig;
pub use plant::{LlmError, LlmPlant};
