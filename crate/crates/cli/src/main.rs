use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsd_core::harness::{self, load_scenario, presets, RunOptions, Scenario};
use dsd_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Decoupled signal detection sweeps for heterogeneous massive-MIMO uplinks.
#[derive(Debug, Parser)]
#[command(name = "dsdlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its CSV table.
    Run {
        scenario: PathBuf,
        /// Output file; defaults to the scenario's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to the available cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Use the full-scale trial counts.
        #[arg(long)]
        full_scale: bool,
    },
    /// Inspect the shipped scenario presets.
    Presets {
        #[command(subcommand)]
        action: PresetCommand,
    },
    /// Parse and validate a scenario without running it.
    Validate { scenario: PathBuf },
}

#[derive(Debug, Subcommand)]
enum PresetCommand {
    /// List preset names and descriptions.
    List,
    /// Print a preset's scenario file.
    Show { name: String },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(error: Error) -> Self {
        let code = match error {
            Error::Io { .. } => EXIT_VALIDATION,
            ref e if e.is_validation() => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        };
        Self {
            code,
            message: error.to_string(),
        }
    }

    fn runtime(error: Error) -> Self {
        let code = if error.is_validation() {
            EXIT_VALIDATION
        } else {
            EXIT_RUNTIME
        };
        Self {
            code,
            message: error.to_string(),
        }
    }
}

fn run(
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
    full_scale: bool,
) -> Result<(), Failure> {
    let scenario = load_scenario(path).map_err(Failure::input)?;
    let mut options = RunOptions::default();
    if let Some(w) = workers {
        options.workers = w;
    }
    options.full_scale = full_scale;
    options.seed = seed;
    let result = harness::run(&scenario, &options).map_err(Failure::runtime)?;
    match out.or_else(|| scenario.output.as_ref().map(PathBuf::from)) {
        Some(target) => {
            harness::emit_csv(&result, &target).map_err(Failure::runtime)?;
            eprintln!("wrote {} rows to {}", result.rows.len(), target.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(result.to_csv().as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure {
                    code: EXIT_RUNTIME,
                    message: format!("cannot write to stdout: {e}"),
                })?;
        }
    }
    Ok(())
}

fn describe(scenario: &Scenario) -> String {
    let points = scenario.sweep.values.len();
    format!(
        "{} sweep over {} ({points} points, {} detectors)",
        match scenario.kind {
            harness::ScenarioKind::Ber => "BER",
            harness::ScenarioKind::Rate => "rate",
            harness::ScenarioKind::Flops => "FLOP",
        },
        scenario.sweep.axis,
        scenario.detectors.len()
    )
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            workers,
            full_scale,
        } => run(&scenario, out, seed, workers, full_scale),
        Command::Validate { scenario } => {
            let parsed = load_scenario(&scenario).map_err(Failure::input)?;
            println!("{}: ok, {}", scenario.display(), describe(&parsed));
            Ok(())
        }
        Command::Presets {
            action: PresetCommand::List,
        } => {
            let width = presets::PRESETS
                .iter()
                .map(|p| p.name.len())
                .max()
                .unwrap_or(0);
            for preset in presets::PRESETS {
                println!("{:width$}  {}", preset.name, preset.description);
            }
            Ok(())
        }
        Command::Presets {
            action: PresetCommand::Show { name },
        } => {
            let preset = presets::find(&name).ok_or_else(|| Failure {
                code: EXIT_VALIDATION,
                message: format!("unknown preset `{name}`"),
            })?;
            print!("{}", preset.json);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("dsdlab: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
