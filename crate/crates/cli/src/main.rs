//! `closedloop`: run, bench and report closed-loop self-correction.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 some tasks hit
//! plant failures, 3 I/O error or unreadable logs.

mod args;
mod config;
mod error;
mod exec;
mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use closedloop::metrics::MetricsOptions;
use closedloop::trajectory::{read_jsonl, write_jsonl, TrajectoryError};
use closedloop::{answers_equal, Trajectory};

use args::{BenchArgs, Cli, Command, ReportArgs, RunArgs};
use error::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("closedloop: {failures} task run(s) failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("closedloop: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn write_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| error::io(path.display(), e))?;
    let mut out = BufWriter::new(file);
    write_jsonl(&mut out, trajectories).and_then(|_| out.flush()).map_err(|e| error::io(path.display(), e))
}

fn summary(t: &Trajectory) -> String {
    let verdict = if answers_equal(&t.final_answer, &t.task.gold_answer) { "correct" } else { "wrong" };
    format!(
        "{}\t{}\t{:?}\titerations={}\tanswer={:?}\tgold={:?}\t{verdict}",
        t.task.id,
        t.method,
        t.termination,
        t.iterations(),
        t.final_answer,
        t.task.gold_answer
    )
}

/// Returns the number of failed task runs.
fn cmd_run(a: RunArgs) -> Result<usize, CliError> {
    let cfg = config::finish(config::merged(&a.config, Some(&[a.method]))?)?;
    let tasks = config::tasks(&cfg)?;
    let templates = config::templates(&cfg)?;
    let batch = exec::execute(&cfg, None, &tasks, &templates)?;

    let lines: Vec<String> = batch.trajectories.iter().map(summary).collect();
    match &a.out {
        Some(path) => {
            write_trajectories(path, &batch.trajectories)?;
            output::write(None, &lines.iter().map(|l| format!("{l}\n")).collect::<String>())?;
        }
        None => {
            let stdout = std::io::stdout();
            write_jsonl(stdout.lock(), &batch.trajectories).map_err(|e| error::io("stdout", e))?;
            for l in lines {
                eprintln!("{l}");
            }
        }
    }
    Ok(batch.failures)
}

fn parse_sweep(s: &str) -> Result<(String, Vec<String>), CliError> {
    let (key, values) =
        s.split_once('=').ok_or_else(|| error::config(format!("--sweep {s:?}: expected KEY=V1,V2,..")))?;
    let key = key.trim();
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
    if key.is_empty() || values.iter().any(String::is_empty) {
        return Err(error::config(format!("--sweep {s:?}: empty key or value")));
    }
    Ok((key.to_string(), values))
}

fn cmd_bench(a: BenchArgs) -> Result<usize, CliError> {
    let methods = (!a.methods.is_empty()).then_some(a.methods.as_slice());
    let base = config::merged(&a.config, methods)?;

    let mut runs = Vec::new();
    match &a.sweep {
        None => runs.push((None, base)),
        Some(s) => {
            let (key, values) = parse_sweep(s)?;
            let path = if key.contains('.') { key.clone() } else { format!("params.{key}") };
            for value in values {
                let mut v = base.clone();
                config::set_path(&mut v, &path, config::literal(&value))?;
                runs.push((Some(format!("{key}={value}")), v));
            }
        }
    }
    // Validate every sweep point before running any of them.
    let runs =
        runs.into_iter().map(|(label, v)| Ok((label, config::finish(v)?))).collect::<Result<Vec<_>, CliError>>()?;

    let mut trajectories = Vec::new();
    let mut failures = 0;
    for (label, cfg) in &runs {
        let tasks = config::tasks(cfg)?;
        let templates = config::templates(cfg)?;
        let batch = exec::execute(cfg, label.as_deref(), &tasks, &templates)?;
        trajectories.extend(batch.trajectories);
        failures += batch.failures;
    }
    if let Some(path) = &a.out {
        write_trajectories(path, &trajectories)?;
    }

    let groups = output::group(trajectories);
    let options = MetricsOptions { accepted_overshoot: a.accepted_overshoot };
    let reports = output::reports(&groups, options).map_err(|e| CliError::Io(format!("metrics: {e}")))?;
    output::write(a.report.as_deref(), &output::render(&reports, a.format))?;
    if let Some(path) = &a.iterations_csv {
        output::write(Some(path), &output::render_iterations(&groups))?;
    }
    Ok(failures)
}

fn cmd_report(a: ReportArgs) -> Result<usize, CliError> {
    if a.files.is_empty() {
        return Err(error::config("report: no trajectory files given"));
    }
    let mut trajectories = Vec::new();
    for path in &a.files {
        let read = read_jsonl(path).map_err(|e| match e {
            TrajectoryError::Io(e) => error::io(path.display(), e),
            schema => CliError::Io(schema.to_string()),
        })?;
        trajectories.extend(read);
    }
    if trajectories.is_empty() {
        return Err(error::config("report: the input files hold no trajectories"));
    }

    let groups = output::group(trajectories);
    let options = MetricsOptions { accepted_overshoot: a.accepted_overshoot };
    let reports = output::reports(&groups, options).map_err(|e| CliError::Io(format!("inconsistent logs: {e}")))?;
    output::write(a.out.as_deref(), &output::render(&reports, a.format))?;
    if let Some(path) = &a.iterations_csv {
        output::write(Some(path), &output::render_iterations(&groups))?;
    }
    Ok(0)
}
