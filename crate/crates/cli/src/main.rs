use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stsim_core::config::{load_config, RunConfig};
use stsim_core::gradcheck::{run_gradcheck, GradcheckOptions};
use stsim_core::mapper::Dataflow;
use stsim_core::model::ConfigError;
use stsim_core::report::{emit_report, render, Format, RunOutput};
use stsim_core::sim::{run_simulate, run_sweep, SimError};

const EXIT_CONFIG: u8 = 3;
const EXIT_SIMULATION: u8 = 4;
const EXIT_GRADCHECK: u8 = 5;
const EXIT_IO: u8 = 6;

#[derive(Parser)]
#[command(name = "stsim", version, about = "Training cost simulator for spiking Transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
        }
    }
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file; defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the sparsity measurement pass.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one dataflow.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Dataflow such as OS_C; overrides the configuration.
        #[arg(long)]
        dataflow: Option<String>,
    },
    /// Evaluate all nine dataflows and rank them.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Check kernel gradients against reference implementations.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb the kernel gradients; the check must then fail.
        #[arg(long)]
        corrupt: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the effective configuration.
    PrintConfig {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Simulation(String),
    Gradcheck(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Simulation(_) => EXIT_SIMULATION,
            Failure::Gradcheck(_) => EXIT_GRADCHECK,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Simulation(m) | Failure::Gradcheck(m) | Failure::Io(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            other => Failure::Simulation(other.to_string()),
        }
    }
}

fn config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn write(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit(out: &RunOutput, common: &Common) -> Result<(), Failure> {
    let format = common.format.into();
    match &common.output {
        Some(p) => emit_report(out, format, p).map_err(|e| Failure::Io(e.to_string())),
        None => {
            let text = render(out, format).map_err(|e| Failure::Io(e.to_string()))?;
            write(&text, None)
        }
    }
}

fn prepare(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.sparsity.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { common, dataflow } => {
            let mut cfg = prepare(&common)?;
            if let Some(name) = dataflow {
                cfg.dataflow = name;
            }
            let df: Dataflow = cfg.dataflow()?;
            let report = run_simulate(&cfg, df)?;
            emit(&RunOutput::single(&cfg, report), &common)
        }
        Command::Sweep { common } => {
            let cfg = prepare(&common)?;
            let sweep = run_sweep(&cfg)?;
            for (e, l) in sweep.by_energy.iter().zip(&sweep.by_latency) {
                eprintln!(
                    "#{:<2} energy {:<5} {:.6e} J   latency {:<5} {} cycles",
                    e.rank, e.dataflow, e.value, l.dataflow, l.value
                );
            }
            emit(&RunOutput::sweep(&cfg, sweep), &common)
        }
        Command::Gradcheck {
            config: path,
            seed,
            corrupt,
            output,
        } => {
            let cfg = config(path.as_deref())?;
            let opts = GradcheckOptions {
                corrupt,
                ..GradcheckOptions::default()
            };
            let summary = run_gradcheck(&cfg.model, seed, opts)
                .map_err(|e| Failure::Simulation(e.to_string()))?;
            for c in &summary.checks {
                eprintln!(
                    "{} {:<28} cases={:<5} max_error={:.3e} tol={:.0e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.cases,
                    c.max_error,
                    c.tolerance
                );
            }
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
            write(&text, output.as_deref())?;
            if summary.passed {
                Ok(())
            } else {
                let failing: Vec<String> = summary
                    .checks
                    .iter()
                    .filter_map(|c| c.failure.as_ref().map(|f| format!("{}: {f}", c.name)))
                    .collect();
                Err(Failure::Gradcheck(failing.join("\n")))
            }
        }
        Command::PrintConfig {
            config: path,
            output,
        } => {
            let cfg = config(path.as_deref())?;
            let text = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
            write(&text, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
