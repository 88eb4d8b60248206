use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Fusion weights for self-consistency, verbalized confidence and
/// logic-chain verification, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(pub [f64; 3]);

impl Weights {
    pub const DEFAULT: Weights = Weights([0.4, 0.35, 0.25]);
    pub const SELF_CONSISTENCY_ONLY: Weights = Weights([1.0, 0.0, 0.0]);

    pub fn sc(&self) -> f64 {
        self.0[0]
    }

    pub fn vc(&self) -> f64 {
        self.0[1]
    }

    pub fn lc(&self) -> f64 {
        self.0[2]
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid(format!("weights must be finite and >= 0, got {:?}", self.0)));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::DEFAULT
    }
}

/// Detector, judge and loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Self-consistency sample count.
    pub k: usize,
    /// Verbalized-confidence flag threshold on the 0..=100 scale.
    pub phi: f64,
    /// Detection threshold on the fused severity.
    pub sigma: f64,
    /// Convergence tolerance on consecutive severities.
    pub epsilon: f64,
    /// Overshoot margin.
    pub delta: f64,
    pub t_max: usize,
    pub weights: Weights,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters { k: 5, phi: 40.0, sigma: 0.3, epsilon: 0.05, delta: 0.1, t_max: 3, weights: Weights::DEFAULT }
    }
}

impl Hyperparameters {
    /// Self-consistency-only detector with a two-iteration budget.
    pub fn lite() -> Self {
        Hyperparameters::default().into_lite()
    }

    pub fn into_lite(self) -> Self {
        Hyperparameters { weights: Weights::SELF_CONSISTENCY_ONLY, t_max: 2, ..self }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(invalid("k must be positive"));
        }
        if !(0.0..=100.0).contains(&self.phi) {
            return Err(invalid(format!("phi must lie in [0, 100], got {}", self.phi)));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(invalid(format!("sigma must lie in [0, 1], got {}", self.sigma)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(invalid(format!("delta must be >= 0, got {}", self.delta)));
        }
        // A converged step may rise by up to epsilon without rollback, so the
        // accepted-severity bound only holds when epsilon <= delta.
        if self.epsilon > self.delta {
            return Err(invalid(format!("epsilon ({}) must not exceed delta ({})", self.epsilon, self.delta)));
        }
        self.weights.validate()
    }
}
