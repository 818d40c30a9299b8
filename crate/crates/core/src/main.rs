use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icbf_core::cli::{run_command, CliCommand, Verb};

#[derive(Parser)]
#[command(name = "icbf", version, about = "Safety-filtered incremental control simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Bundled scenario to start from (see `list-scenarios`).
    #[arg(long)]
    preset: Option<String>,
    /// `key = value` configuration file layered over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single `key=value` override; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv, plot.svg, metrics.txt and config.txt.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Check a configuration without simulating.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// List bundled scenarios.
    ListScenarios,
    /// Plot columns of an existing trace.csv as SVG.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        /// Comma-separated column names.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        /// Horizontal limit line; repeatable.
        #[arg(long = "limit", allow_negative_numbers = true)]
        limits: Vec<f64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn with_scenario(verb: Verb, s: ScenarioArgs) -> CliCommand {
    let mut cmd = CliCommand::new(verb);
    cmd.preset = s.preset;
    cmd.config_path = s.config;
    cmd.overrides = s.overrides;
    cmd
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cmd = match cli.command {
        Command::Run { scenario, out } => {
            let mut c = with_scenario(Verb::Run, scenario);
            c.output_dir = Some(out);
            c
        }
        Command::Validate { scenario } => with_scenario(Verb::Validate, scenario),
        Command::ListScenarios => CliCommand::new(Verb::ListScenarios),
        Command::Plot { trace, columns, limits, out } => {
            let mut c = CliCommand::new(Verb::Plot);
            c.trace_path = Some(trace);
            c.columns = columns;
            c.limits = limits;
            c.output_dir = out;
            c
        }
    };
    let code = run_command(&cmd, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code as u8)
}
