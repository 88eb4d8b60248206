//! Closed-loop self-correction for reasoning chains.
//!
//! A [`plant::Plant`] produces reasoning chains. The [`detector`] turns
//! observations of a chain into an [`types::ErrorSignal`], the
//! [`controller`] maps that signal to a typed correction instruction, and the
//! [`judge`] decides after each revision whether to continue, stop, or roll
//! back. [`runner`] wires these into a loop and records a
//! [`trajectory::Trajectory`] per run; [`metrics`] and [`report`] aggregate
//! trajectories.
//!
//! [`sim::SimPlant`] is a deterministic synthetic plant with a known hidden
//! error per chain.

pub mod answer;
pub mod controller;
pub mod detector;
pub mod judge;
pub mod metrics;
pub mod params;
pub mod plant;
pub mod report;
pub mod runner;
pub mod sim;
pub mod task;
pub mod trajectory;
pub mod types;

pub use answer::{answers_equal, normalize_answer};
pub use detector::{detect, ModalityObservations, ModalitySet};
pub use metrics::{compute_metrics, MetricsReport};
pub use params::{ConfigError, Hyperparameters, Weights};
pub use plant::{Metered, Plant, PlantError};
pub use runner::{run, Method, RunConfig, RunError};
pub use sim::{SimPlant, SimPlantConfig};
pub use task::{BenchTask, Category};
pub use trajectory::{Termination, Trajectory};
pub use types::{ErrorSignal, ErrorType, ReasoningChain};
