use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid endpoint config: {0}")]
pub struct EndpointConfigError(pub String);

/// Where and how to reach a chat-completions endpoint.
///
/// The API key itself never lives here; `api_key_env` names the environment
/// variable it is read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL up to and including the version segment, e.g.
    /// `https://api.openai.com/v1`.
    pub base_url: String,
    pub model_name: String,
    pub api_key_env: String,
    /// Temperature for the K self-consistency draws. Not validated against
    /// anything; 0.7 is a common choice.
    pub sample_temperature: f64,
    /// Temperature for every other request.
    pub verify_temperature: f64,
    pub request_timeout_secs: u64,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub retry_backoff_ms: u64,
    pub max_in_flight: usize,
    /// Mirror every request and response to this JSONL file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capture_path: Option<PathBuf>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            sample_temperature: 0.7,
            verify_temperature: 0.0,
            request_timeout_secs: 120,
            max_retries: 3,
            retry_backoff_ms: 500,
            max_in_flight: 8,
            capture_path: None,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), EndpointConfigError> {
        let bad = |m: String| Err(EndpointConfigError(m));
        if self.base_url.trim().is_empty() {
            return bad("base_url is empty".into());
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty".into());
        }
        for (name, t) in
            [("sample_temperature", self.sample_temperature), ("verify_temperature", self.verify_temperature)]
        {
            if !t.is_finite() || t < 0.0 {
                return bad(format!("{name} must be >= 0, got {t}"));
            }
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be positive".into());
        }
        if self.request_timeout_secs == 0 {
            return bad("request_timeout_secs must be positive".into());
        }
        Ok(())
    }

    /// Full URL of the completions route.
    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = EndpointConfig::default();
        c.validate().unwrap();
        assert_eq!(c.sample_temperature, 0.7);
        assert_eq!(c.verify_temperature, 0.0);
    }

    #[test]
    fn rejects_negative_temperature_and_zero_concurrency() {
        let c = EndpointConfig { sample_temperature: -0.1, ..EndpointConfig::default() };
        assert!(c.validate().is_err());
        let c = EndpointConfig { max_in_flight: 0, ..EndpointConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn url_joins_without_double_slash() {
        let c = EndpointConfig { base_url: "http://h:1/v1/".into(), ..EndpointConfig::default() };
        assert_eq!(c.completions_url(), "http://h:1/v1/chat/completions");
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: EndpointConfig = serde_json::from_str(r#"{"model_name":"m","max_retries":0}"#).unwrap();
        assert_eq!(c.model_name, "m");
        assert_eq!(c.max_retries, 0);
        assert_eq!(c.api_key_env, "OPENAI_API_KEY");
    }
}
