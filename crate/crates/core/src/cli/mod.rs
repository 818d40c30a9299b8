//! Command-line front end: configuration layering, scenario runs, CSV traces,
//! metric summaries and SVG plots.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure (including
//! an infeasible filter step when `filter.strict = true`).

pub mod config;
pub mod svg;
pub mod trace_csv;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{angle_scale, run_scenario, BarrierKind, ConfigError, ScenarioConfig, SimError};
pub use config::{layered_config, load_config, parse_config, parse_entries, presets, render_config, Entry, Preset};
pub use svg::plot_svg;
pub use trace_csv::{read_trace_csv, trace_header, trace_table, write_table_csv, write_trace_csv, TraceTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{origin}:{line}: {message}")]
    Parse { origin: String, line: usize, message: String },
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("cannot read {path}: {message}")]
    ConfigIo { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Config(_) | CliError::ConfigIo { .. } | CliError::Usage(_) => 1,
            CliError::Sim(e) if e.is_config() => 1,
            CliError::Sim(_) | CliError::Io { .. } | CliError::Plot(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Run,
    Validate,
    ListScenarios,
    Plot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliCommand {
    pub verb: Verb,
    pub config_path: Option<PathBuf>,
    pub preset: Option<String>,
    /// Output directory for `run`; output file for `plot`.
    pub output_dir: Option<PathBuf>,
    pub overrides: Vec<String>,
    /// Trace to plot (`plot` only).
    pub trace_path: Option<PathBuf>,
    pub columns: Vec<String>,
    pub limits: Vec<f64>,
}

impl CliCommand {
    pub fn new(verb: Verb) -> Self {
        Self {
            verb,
            config_path: None,
            preset: None,
            output_dir: None,
            overrides: Vec::new(),
            trace_path: None,
            columns: Vec::new(),
            limits: Vec::new(),
        }
    }
}

pub const TRACE_FILE: &str = "trace.csv";
pub const PLOT_FILE: &str = "plot.svg";
pub const METRICS_FILE: &str = "metrics.txt";
pub const CONFIG_FILE: &str = "config.txt";

/// Barrier limits in trace units, for plot overlays.
pub fn limit_lines(cfg: &ScenarioConfig) -> Vec<f64> {
    let s = angle_scale(cfg);
    cfg.barriers
        .iter()
        .map(|b| match b.kind {
            BarrierKind::Upper | BarrierKind::Lower => b.limit * s,
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })
}

/// Executes a command, writing human output to `out` and diagnostics to
/// `err`; returns the process exit code.
pub fn run_command(cmd: &CliCommand, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match execute(cmd, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cmd: &CliCommand, out: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io { path: "<stdout>".into(), message: e.to_string() };
    match cmd.verb {
        Verb::ListScenarios => {
            for p in presets() {
                writeln!(out, "{:<16} {}", p.name, p.description).map_err(io)?;
            }
            Ok(())
        }
        Verb::Validate => {
            let cfg = load_config(cmd.preset.as_deref(), cmd.config_path.as_deref(), &cmd.overrides)?;
            writeln!(out, "ok: {} ({} plant, {} filter, {} steps)", cfg.name, cfg.plant, cfg.filter.kind, cfg.steps())
                .map_err(io)?;
            Ok(())
        }
        Verb::Run => {
            let cfg = load_config(cmd.preset.as_deref(), cmd.config_path.as_deref(), &cmd.overrides)?;
            let (trace, metrics) = run_scenario(&cfg)?;
            let dir = cmd.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)
                .map_err(|e| CliError::Io { path: dir.display().to_string(), message: e.to_string() })?;
            let table = trace_table(&trace);
            write_table_csv(&table, &dir.join(TRACE_FILE))?;
            let svg = plot_svg(&table, &["y_true", "y_hat", "r"], &limit_lines(&cfg))?;
            write_file(&dir.join(PLOT_FILE), &svg)?;
            let summary = metrics.summary();
            write_file(&dir.join(METRICS_FILE), &format!("{summary}\n"))?;
            write_file(&dir.join(CONFIG_FILE), &render_config(&cfg))?;
            writeln!(out, "{}: {summary}", cfg.name).map_err(io)?;
            Ok(())
        }
        Verb::Plot => {
            let path = cmd.trace_path.as_deref().ok_or_else(|| CliError::Usage("plot needs --trace".into()))?;
            let table = read_trace_csv(path)?;
            let cols: Vec<&str> = if cmd.columns.is_empty() {
                vec!["y_true", "r"]
            } else {
                cmd.columns.iter().map(String::as_str).collect()
            };
            let svg = plot_svg(&table, &cols, &cmd.limits)?;
            match &cmd.output_dir {
                Some(p) => write_file(p, &svg),
                None => out.write_all(svg.as_bytes()).map_err(io),
            }
        }
    }
}
