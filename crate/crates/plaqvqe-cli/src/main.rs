use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plaqvqe::experiments::{run, Experiment, ExperimentError, RunSettings};
use serde_json::{Map, Value};

/// Vacuum preparation experiments for SU(3) plaquette models.
#[derive(Debug, Parser)]
#[command(name = "plaqvqe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config; unknown keys are rejected. Defaults apply when absent.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Config field override, applied after --config. Values parse as JSON, else as strings.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Sample energies with N shots instead of exact expectations.
    #[arg(long, global = true, value_name = "N")]
    shots: Option<usize>,
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Krylov dimension for a target vacuum overlap against 1/g, and the Gaussian tail.
    KrylovScaling,
    /// Bayesian optimization against gradient descent on the CP-even plaquette.
    OptimizerCompare,
    /// Gradient-descent steps to a target overlap against g and the Krylov start.
    GdScaling,
    /// Domain decomposition and stitching on finite and infinite chains.
    DomainDecomp,
    /// Noiseless VQE on the systems run on hardware, checked against their energies.
    HardwareAnalogue,
    /// Infinite-chain vacuum from imaginary-time TEBD.
    TebdVacuum,
}

impl Command {
    fn experiment(self) -> Experiment {
        match self {
            Command::KrylovScaling => Experiment::KrylovScaling,
            Command::OptimizerCompare => Experiment::OptimizerCompare,
            Command::GdScaling => Experiment::GdScaling,
            Command::DomainDecomp => Experiment::DomainDecomp,
            Command::HardwareAnalogue => Experiment::HardwareAnalogue,
            Command::TebdVacuum => Experiment::TebdVacuum,
        }
    }
}

fn config_text(cli: &Cli) -> Result<Option<String>, ExperimentError> {
    let base = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| ExperimentError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    if cli.overrides.is_empty() {
        return Ok(base);
    }
    let mut map = match &base {
        Some(t) => match serde_json::from_str::<Value>(t) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(ExperimentError::Config("config must be a JSON object".into())),
            Err(e) => return Err(ExperimentError::Config(e.to_string())),
        },
        None => Map::new(),
    };
    for kv in &cli.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| ExperimentError::Config(format!("override `{kv}` is not KEY=VALUE")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        map.insert(k.to_string(), value);
    }
    Ok(Some(Value::Object(map).to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("config error: --jobs must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let experiment = cli.command.experiment();
    let settings = RunSettings { out: cli.out.clone(), shots: cli.shots, seed: cli.seed };
    let outcome = config_text(&cli).and_then(|text| run(experiment, text.as_deref(), &settings));
    match outcome {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            for c in &o.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if o.failed().is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{}: {} check(s) failed", experiment.name(), o.failed().len());
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
