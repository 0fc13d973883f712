//! Configured experiment runs writing CSV sweeps and JSON records with a provenance block.

pub mod domain;
pub mod gd_scaling;
pub mod hardware;
pub mod krylov;
pub mod optimizer_compare;
pub mod tebd;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::optimizers::OptimizerTrace;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Numerical(_) => 3,
            ExperimentError::Io(_) => 1,
        }
    }
}

macro_rules! numerical_from {
    ($($t:ty),*) => {$(
        impl From<$t> for ExperimentError {
            fn from(e: $t) -> Self {
                ExperimentError::Numerical(e.to_string())
            }
        }
    )*};
}

numerical_from!(
    crate::hamiltonian::HamiltonianError,
    crate::spectral::SpectralError,
    crate::ansatz::AnsatzError,
    crate::statevector::StateError,
    crate::mps::MpsError,
    crate::optimizers::OptError,
    crate::encoding::EncodingError
);

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Io(std::io::Error::other(e))
    }
}

impl From<serde_json::Error> for ExperimentError {
    fn from(e: serde_json::Error) -> Self {
        ExperimentError::Io(std::io::Error::other(e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    KrylovScaling,
    OptimizerCompare,
    GdScaling,
    DomainDecomp,
    HardwareAnalogue,
    TebdVacuum,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::KrylovScaling,
        Experiment::OptimizerCompare,
        Experiment::GdScaling,
        Experiment::DomainDecomp,
        Experiment::HardwareAnalogue,
        Experiment::TebdVacuum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::KrylovScaling => "krylov-scaling",
            Experiment::OptimizerCompare => "optimizer-compare",
            Experiment::GdScaling => "gd-scaling",
            Experiment::DomainDecomp => "domain-decomp",
            Experiment::HardwareAnalogue => "hardware-analogue",
            Experiment::TebdVacuum => "tebd-vacuum",
        }
    }
}

/// Command-line settings shared by every experiment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSettings {
    pub out: PathBuf,
    /// Shot count for sampled energies; exact expectations when absent.
    pub shots: Option<usize>,
    /// Overrides the seed of the config.
    pub seed: Option<u64>,
}

/// Parses a JSON config, rejecting unknown keys; an absent config gives the defaults.
pub fn parse_config<C: DeserializeOwned + Default>(text: Option<&str>) -> Result<C, ExperimentError> {
    match text {
        None => Ok(C::default()),
        Some(t) => serde_json::from_str(t).map_err(|e| ExperimentError::Config(e.to_string())),
    }
}

/// Writes output files into one directory, each stamped with the provenance block.
/// Timestamps go to a separate `<experiment>.run.json`.
pub struct OutputSink {
    dir: PathBuf,
    experiment: Experiment,
    provenance: Value,
    started: SystemTime,
    clock: Instant,
    files: Vec<PathBuf>,
}

impl OutputSink {
    pub fn new<C: Serialize>(dir: &Path, experiment: Experiment, config: &C, settings: &RunSettings) -> Result<Self, ExperimentError> {
        let provenance = json!({
            "experiment": experiment.name(),
            "code_version": CODE_VERSION,
            "config": serde_json::to_value(config)?,
            "shots": settings.shots,
            "seed": settings.seed,
        });
        fs::create_dir_all(dir)?;
        Ok(OutputSink { dir: dir.to_path_buf(), experiment, provenance, started: SystemTime::now(), clock: Instant::now(), files: Vec::new() })
    }

    pub fn provenance(&self) -> &Value {
        &self.provenance
    }

    /// CSV preceded by a `# {provenance}` line.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, ExperimentError> {
        let path = self.dir.join(name);
        let mut buf = Vec::new();
        writeln!(buf, "# {}", serde_json::to_string(&self.provenance)?)?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        fs::write(&path, buf)?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn json<R: Serialize>(&mut self, name: &str, result: &R) -> Result<PathBuf, ExperimentError> {
        let path = self.dir.join(name);
        let doc = json!({ "provenance": self.provenance, "result": serde_json::to_value(result)? });
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn finish(self, checks: &[Check]) -> Result<Vec<PathBuf>, ExperimentError> {
        let started = self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let record = json!({
            "experiment": self.experiment.name(),
            "started_unix": started,
            "wall_seconds": self.clock.elapsed().as_secs_f64(),
            "files": self.files.iter().map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect::<Vec<_>>(),
            "checks": checks,
        });
        let path = self.dir.join(format!("{}.run.json", self.experiment.name()));
        fs::write(&path, serde_json::to_string_pretty(&record)? + "\n")?;
        let mut files = self.files;
        files.push(path);
        Ok(files)
    }
}

/// Named pass/fail condition evaluated by a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Rows of an optimizer trace under `TRACE_HEADER`.
pub fn trace_rows(trace: &OptimizerTrace<f64>) -> Vec<Vec<String>> {
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    trace.rows.iter().map(|r| vec![r.iter.to_string(), num(r.energy), opt(r.grad_norm), opt(r.eta), opt(r.relative_error)]).collect()
}

pub const TRACE_HEADER: [&str; 5] = ["iter", "energy", "grad_norm", "eta", "relative_error"];

/// `f64` in shortest round-trip form.
pub fn num(x: f64) -> String {
    format!("{x}")
}

fn prepare<C: DeserializeOwned + Default + Serialize>(
    text: Option<&str>,
    validate: impl Fn(&C) -> Result<(), ExperimentError>,
) -> Result<C, ExperimentError> {
    let cfg: C = parse_config(text)?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Parses and validates the config, then runs the experiment into `settings.out`.
/// Nothing is written when the config is rejected.
pub fn run(experiment: Experiment, config: Option<&str>, settings: &RunSettings) -> Result<Outcome, ExperimentError> {
    match experiment {
        Experiment::KrylovScaling => {
            let cfg = prepare(config, krylov::KrylovConfig::validate)?;
            krylov::write(&cfg, settings)
        }
        Experiment::OptimizerCompare => {
            let cfg = prepare(config, optimizer_compare::CompareConfig::validate)?;
            optimizer_compare::write(&cfg, settings)
        }
        Experiment::GdScaling => {
            let cfg = prepare(config, gd_scaling::GdScalingConfig::validate)?;
            gd_scaling::write(&cfg, settings)
        }
        Experiment::DomainDecomp => {
            let cfg = prepare(config, domain::DomainConfig::validate)?;
            domain::write(&cfg, settings)
        }
        Experiment::HardwareAnalogue => {
            let cfg = prepare(config, hardware::HardwareConfig::validate)?;
            hardware::write(&cfg, settings)
        }
        Experiment::TebdVacuum => {
            let cfg = prepare(config, tebd::TebdConfig::validate)?;
            tebd::write(&cfg, settings)
        }
    }
}
