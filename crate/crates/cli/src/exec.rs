use std::time::SystemTime;

use closedloop::controller::TemplateSet;
use closedloop::{run, BenchTask, Plant, RunConfig, RunError, SimPlant, Trajectory};
use closedloop_llm::{LlmError, LlmPlant};
use log::{error, info};
use rayon::prelude::*;

use crate::config::{CliConfig, PlantKind};
use crate::error::{self, CliError};

pub struct Batch {
    /// Method-major, then task order, independent of scheduling.
    pub trajectories: Vec<Trajectory>,
    pub failures: usize,
}

fn now() -> String {
    humantime::format_rfc3339_millis(SystemTime::now()).to_string()
}

/// Runs every configured method over `tasks`.
///
/// Simulated plants keep per-task state, so each method gets a fresh one.
/// The LLM plant is shared so its in-flight limit covers the whole batch.
pub fn execute(
    cfg: &CliConfig,
    label: Option<&str>,
    tasks: &[BenchTask],
    templates: &TemplateSet,
) -> Result<Batch, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| error::config(format!("thread pool: {e}")))?;
    let echo = serde_json::to_value(cfg).expect("config serializes");
    let llm = match cfg.plant {
        PlantKind::Llm => Some(LlmPlant::from_config(cfg.llm.clone()).map_err(|e| match e {
            LlmError::Capture(e) => error::io("capture file", e),
            other => error::config(other.to_string()),
        })?),
        PlantKind::Sim => None,
    };

    let mut batch = Batch { trajectories: Vec::new(), failures: 0 };
    for &method in &cfg.methods {
        let sim;
        let plant: &(dyn Plant + Sync) = match &llm {
            Some(p) => p,
            None => {
                sim = SimPlant::new(cfg.sim.clone()).map_err(|e| error::config(e.to_string()))?;
                &sim
            }
        };
        let rc = RunConfig::new(method, cfg.params.clone(), cfg.seed).with_templates(templates.clone());
        info!("{}{method} over {} tasks", label.map(|l| format!("{l}: ")).unwrap_or_default(), tasks.len());

        // Each task yields what to log and whether it failed.
        let results: Vec<(Option<Trajectory>, bool)> = pool.install(|| {
            tasks
                .par_iter()
                .map(|task| {
                    let started = cfg.timestamps.then(now);
                    let outcome = run(task, plant, &rc);
                    let finished = cfg.timestamps.then(now);
                    let stamp = |mut t: Trajectory| {
                        t.run_label = label.map(str::to_string);
                        t.config = Some(echo.clone());
                        t.started_at = started.clone();
                        t.finished_at = finished.clone();
                        t
                    };
                    match outcome {
                        Ok(t) => (Some(stamp(t)), false),
                        Err(RunError::Plant { source, partial }) => {
                            error!("{} ({method}): {source}", task.id);
                            ((!partial.entries.is_empty()).then(|| stamp(*partial)), true)
                        }
                        Err(e) => {
                            error!("{} ({method}): {e}", task.id);
                            (None, true)
                        }
                    }
                })
                .collect()
        });
        for (logged, failed) in results {
            batch.failures += usize::from(failed);
            batch.trajectories.extend(logged);
        }
    }
    Ok(batch)
}
