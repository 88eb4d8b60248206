//! Effective configuration: defaults, then the config file, then `--set`
//! overrides, then dedicated flags.

use std::path::{Path, PathBuf};

use closedloop::controller::TemplateSet;
use closedloop::sim::synthetic_tasks;
use closedloop::task::load_tasks;
use closedloop::task::TaskError;
use closedloop::{BenchTask, Hyperparameters, Method, RunConfig, SimPlantConfig};
use closedloop_llm::EndpointConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::args::ConfigArgs;
use crate::error::{self, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    #[default]
    Sim,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub plant: PlantKind,
    /// Also becomes the simulated plant's seed.
    pub seed: u64,
    pub methods: Vec<Method>,
    pub params: Hyperparameters,
    pub sim: SimPlantConfig,
    pub llm: EndpointConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tasks: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_tasks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    /// 0 uses every core.
    pub parallelism: usize,
    pub timestamps: bool,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            plant: PlantKind::Sim,
            seed: 0,
            methods: Method::ALL.to_vec(),
            params: Hyperparameters::default(),
            sim: SimPlantConfig::default(),
            llm: EndpointConfig::default(),
            tasks: None,
            synthetic_tasks: None,
            question: None,
            gold: None,
            templates: None,
            parallelism: 0,
            timestamps: false,
        }
    }
}

/// Merged but not yet deserialized configuration. Sweeps patch this before
/// each run.
pub fn merged(args: &ConfigArgs, methods: Option<&[Method]>) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(CliConfig::default()).expect("config serializes");
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| error::config(format!("cannot read config {}: {e}", path.display())))?;
        let file: Value =
            serde_json::from_str(&text).map_err(|e| error::config(format!("config {}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(error::config(format!("config {}: expected a JSON object", path.display())));
        }
        deep_merge(&mut v, file);
    }
    for s in &args.set {
        let (key, value) =
            s.split_once('=').ok_or_else(|| error::config(format!("--set {s:?}: expected KEY=VALUE")))?;
        set_path(&mut v, key, literal(value))?;
    }

    let flags: [(&str, Option<Value>); 16] = [
        ("plant", args.plant.clone().map(Value::String)),
        ("seed", args.seed.map(Value::from)),
        ("tasks", args.tasks.as_ref().map(|p| Value::String(p.display().to_string()))),
        ("synthetic_tasks", args.synthetic.map(Value::from)),
        ("question", args.question.clone().map(Value::String)),
        ("gold", args.gold.clone().map(Value::String)),
        ("templates", args.templates.as_ref().map(|p| Value::String(p.display().to_string()))),
        ("parallelism", args.parallelism.map(Value::from)),
        ("timestamps", args.timestamps.then_some(Value::Bool(true))),
        ("params.k", args.k.map(Value::from)),
        ("params.phi", args.phi.map(Value::from)),
        ("params.sigma", args.sigma.map(Value::from)),
        ("params.epsilon", args.epsilon.map(Value::from)),
        ("params.delta", args.delta.map(Value::from)),
        ("params.t_max", args.t_max.map(Value::from)),
        ("params.weights", args.weights.clone().map(Value::from)),
    ];
    for (key, value) in flags {
        if let Some(value) = value {
            set_path(&mut v, key, value)?;
        }
    }
    if let Some(methods) = methods {
        set_path(&mut v, "methods", serde_json::to_value(methods).expect("methods serialize"))?;
    }
    Ok(v)
}

/// Deserializes and validates a merged value.
pub fn finish(v: Value) -> Result<CliConfig, CliError> {
    let mut cfg: CliConfig = serde_json::from_value(v).map_err(|e| error::config(format!("config: {e}")))?;
    cfg.sim.seed = cfg.seed;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &CliConfig) -> Result<(), CliError> {
    let bad = |e: &dyn std::fmt::Display| error::config(e.to_string());
    cfg.params.validate().map_err(|e| bad(&e))?;
    if cfg.methods.is_empty() {
        return Err(error::config("no methods selected"));
    }
    for &m in &cfg.methods {
        RunConfig::new(m, cfg.params.clone(), cfg.seed).validate().map_err(|e| bad(&e))?;
    }
    match cfg.plant {
        PlantKind::Sim => cfg.sim.validate().map_err(|e| bad(&e))?,
        PlantKind::Llm => {
            cfg.llm.validate().map_err(|e| bad(&e))?;
            let key = std::env::var(&cfg.llm.api_key_env).unwrap_or_default();
            if key.trim().is_empty() {
                return Err(error::config(format!("the llm plant needs an API key in ${}", cfg.llm.api_key_env)));
            }
        }
    }
    let sources = [cfg.tasks.is_some(), cfg.synthetic_tasks.is_some(), cfg.question.is_some()];
    if sources.iter().filter(|&&s| s).count() > 1 {
        return Err(error::config("choose one of tasks, synthetic_tasks or question"));
    }
    if cfg.question.is_some() != cfg.gold.is_some() {
        return Err(error::config("question and gold go together"));
    }
    if cfg.synthetic_tasks == Some(0) {
        return Err(error::config("synthetic_tasks must be at least 1"));
    }
    for path in [&cfg.tasks, &cfg.templates].into_iter().flatten() {
        if !path.is_file() {
            return Err(error::config(format!("no such file: {}", path.display())));
        }
    }
    Ok(())
}

/// Tasks from the configured source; the built-in samples by default.
pub fn tasks(cfg: &CliConfig) -> Result<Vec<BenchTask>, CliError> {
    if let Some(path) = &cfg.tasks {
        return load_tasks(path).map_err(|e| match e {
            TaskError::Io(e) => error::io(path.display(), e),
            other => error::config(format!("{}: {other}", path.display())),
        });
    }
    if let Some(n) = cfg.synthetic_tasks {
        return Ok(synthetic_tasks(&cfg.sim, n));
    }
    if let (Some(q), Some(gold)) = (&cfg.question, &cfg.gold) {
        return Ok(vec![BenchTask::inline("inline", q.as_str(), gold)]);
    }
    Ok(closedloop::task::sample_tasks())
}

pub fn templates(cfg: &CliConfig) -> Result<TemplateSet, CliError> {
    match &cfg.templates {
        None => Ok(TemplateSet::default()),
        Some(path) => {
            let text = read(path)?;
            TemplateSet::parse(&text).map_err(|e| error::config(format!("{}: {e}", path.display())))
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| error::io(path.display(), e))
}

/// JSON when it parses as JSON, otherwise the bare string.
pub fn literal(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

pub fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(error::config(format!("bad config key {path:?}")));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    for part in parents {
        if node.get(*part).is_none_or(Value::is_null) {
            node[*part] = Value::Object(Map::new());
        }
        node = node.get_mut(*part).expect("inserted above");
        if !node.is_object() {
            return Err(error::config(format!("config key {path:?}: {part} is not a table")));
        }
    }
    node[*last] = value;
    Ok(())
}
