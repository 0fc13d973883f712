//! Bayesian optimization against fixed-step gradient descent on the hyperspherical
//! ansatz of the CP-even plaquette, started from a Krylov Ritz vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{num, trace_rows, Check, Experiment, ExperimentError, Outcome, OutputSink, RunSettings, TRACE_HEADER};
use crate::ansatz::{hyperspherical_angles, hyperspherical_circuit};
use crate::hamiltonian::SparseHamiltonian;
use crate::optimizers::{
    bayes_opt, gradient_descent, BoOptions, CircuitObjective, GdOptions, Objective, ObjectiveHandle, OptError, OptimizerTrace, StepMode,
};
use crate::spectral::{cp_even_plaquette, exact_ground, lanczos_initialize};
use crate::statevector::{Circuit, StateVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub cutoff: u32,
    pub g: f64,
    pub krylov_dim: usize,
    pub lambdas: Vec<f64>,
    /// Objective evaluations per BO run, initial points included.
    pub bo_evaluations: usize,
    /// Uniform random points added to the Krylov start before the first fit.
    pub random_points: usize,
    pub seed: u64,
    pub acquisition_starts: usize,
    pub refined_starts: usize,
    pub likelihood_starts: usize,
    pub gd_etas: Vec<f64>,
    pub gd_steps: usize,
    /// BO runs from each Krylov start dimension at `sweep_lambda`.
    pub sweep_dims: Vec<usize>,
    pub sweep_lambda: f64,
    pub sweep_evaluations: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            cutoff: 3,
            g: 0.5,
            krylov_dim: 5,
            lambdas: vec![1e-2, 9e-4, 1e-12],
            bo_evaluations: 250,
            random_points: 1,
            seed: 0,
            acquisition_starts: 64,
            refined_starts: 4,
            likelihood_starts: 16,
            gd_etas: vec![0.1],
            gd_steps: 250,
            sweep_dims: (1..=7).collect(),
            sweep_lambda: 9e-4,
            sweep_evaluations: 100,
        }
    }
}

impl CompareConfig {
    pub fn initial_points(&self) -> usize {
        1 + self.random_points
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if !(self.g > 0.0) || self.cutoff == 0 {
            return bad("g and cutoff must be positive");
        }
        if self.krylov_dim == 0 || self.sweep_dims.iter().any(|&d| d == 0) {
            return bad("Krylov dimensions must be positive");
        }
        if self.lambdas.iter().chain([&self.sweep_lambda]).any(|l| !(*l >= 0.0)) {
            return bad("regulators must be non-negative");
        }
        if self.gd_etas.iter().any(|e| !(*e > 0.0)) {
            return bad("learning rates must be positive");
        }
        if self.bo_evaluations.min(self.sweep_evaluations) <= self.initial_points() || self.gd_steps == 0 {
            return bad("BO budgets must exceed the initial points and gd_steps be positive");
        }
        if self.acquisition_starts == 0 || self.refined_starts == 0 || self.likelihood_starts == 0 {
            return bad("start counts must be positive");
        }
        Ok(())
    }
}

pub struct Problem {
    pub hamiltonian: SparseHamiltonian<f64>,
    pub exact: f64,
    pub circuit: Circuit<f64>,
}

impl Problem {
    pub fn new(cfg: &CompareConfig) -> Result<Self, ExperimentError> {
        let hamiltonian = cp_even_plaquette(cfg.cutoff, cfg.g)?;
        let (exact, _) = exact_ground(&hamiltonian)?;
        let circuit = hyperspherical_circuit(hamiltonian.dim())?;
        Ok(Problem { hamiltonian, exact, circuit })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    fn objective(&self) -> CircuitObjective<'_, f64> {
        CircuitObjective { circuit: &self.circuit, hamiltonian: &self.hamiltonian, initial: StateVector::basis(self.dim(), 0) }
    }

    /// Hyperspherical angles of the Krylov Ritz vector from the electric vacuum.
    pub fn start(&self, krylov_dim: usize) -> Result<Vec<f64>, ExperimentError> {
        let mut seed = vec![0.0; self.dim()];
        seed[0] = 1.0;
        let k = lanczos_initialize(&self.hamiltonian, &seed, krylov_dim.min(self.dim()))?;
        Ok(hyperspherical_angles(&k.ritz_vector))
    }

    pub fn energy(&self, theta: &[f64]) -> Result<f64, ExperimentError> {
        Ok(self.objective().evaluate(theta)?.energy)
    }

    pub fn relative_error(&self, e: f64) -> f64 {
        ((e - self.exact) / self.exact).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub optimizer: &'static str,
    pub setting: f64,
    pub krylov_dim: usize,
    pub initial_relative_error: f64,
    pub final_relative_error: f64,
    /// `ok`, or the error that stopped the run early.
    pub status: String,
    pub trace: OptimizerTrace<f64>,
}

fn finish(p: &Problem, optimizer: &'static str, setting: f64, krylov_dim: usize, start: &[f64], status: String, trace: OptimizerTrace<f64>) -> Result<Run, ExperimentError> {
    let initial = p.relative_error(p.energy(start)?);
    let last = trace.rows.last().map(|r| r.energy).unwrap_or(f64::NAN);
    let final_energy = if optimizer == "bo" { trace.best_energy } else { last };
    Ok(Run { optimizer, setting, krylov_dim, initial_relative_error: initial, final_relative_error: p.relative_error(final_energy), status, trace })
}

/// Krylov start followed by `cfg.random_points` uniform points in the angle box.
pub fn init_points(p: &Problem, cfg: &CompareConfig, seed: u64, krylov_dim: usize) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut pts = vec![p.start(krylov_dim)?];
    for _ in 0..cfg.random_points {
        pts.push((0..p.dim() - 1).map(|_| rng.random_range(0.0..PI)).collect());
    }
    Ok(pts)
}

/// Multicollinearity ends a run early; its best-seen trace is kept.
pub fn run_bo(p: &Problem, cfg: &CompareConfig, seed: u64, lambda: f64, krylov_dim: usize, evaluations: usize) -> Result<Run, ExperimentError> {
    let obj = p.objective();
    let handle = ObjectiveHandle::hyperspherical(&obj);
    let init = init_points(p, cfg, seed, krylov_dim)?;
    let mut opts = BoOptions::new(lambda, evaluations.saturating_sub(init.len()), seed);
    opts.acquisition_starts = cfg.acquisition_starts;
    opts.refined_starts = cfg.refined_starts;
    opts.likelihood_starts = cfg.likelihood_starts;
    opts.exact = Some(p.exact);
    let (status, trace) = match bayes_opt(&handle, &init, &opts) {
        Ok(t) => ("ok".to_string(), t),
        Err(f) => match f.error {
            OptError::Multicollinearity { .. } => (f.error.to_string(), f.trace),
            e => return Err(e.into()),
        },
    };
    finish(p, "bo", lambda, krylov_dim, &init[0], status, trace)
}

pub fn run_gd(p: &Problem, eta: f64, krylov_dim: usize, steps: usize) -> Result<Run, ExperimentError> {
    let obj = p.objective();
    let handle = ObjectiveHandle::hyperspherical(&obj);
    let start = p.start(krylov_dim)?;
    let mut opts = GdOptions::new(eta, StepMode::Fixed, steps);
    opts.tol = 0.0;
    opts.exact = Some(p.exact);
    let trace = gradient_descent(&handle, &start, &opts, |_| false).map_err(|f| ExperimentError::from(f.error))?;
    finish(p, "gd", eta, krylov_dim, &start, "ok".into(), trace)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub bo: Vec<Run>,
    pub gd: Vec<Run>,
    pub sweep: Vec<Run>,
}

pub fn compare(cfg: &CompareConfig, seed: u64) -> Result<Comparison, ExperimentError> {
    let p = Problem::new(cfg)?;
    let bo = cfg.lambdas.par_iter().map(|&l| run_bo(&p, cfg, seed, l, cfg.krylov_dim, cfg.bo_evaluations)).collect::<Result<Vec<_>, _>>()?;
    let gd = cfg.gd_etas.iter().map(|&e| run_gd(&p, e, cfg.krylov_dim, cfg.gd_steps)).collect::<Result<Vec<_>, _>>()?;
    let sweep = cfg
        .sweep_dims
        .par_iter()
        .map(|&d| run_bo(&p, cfg, seed, cfg.sweep_lambda, d, cfg.sweep_evaluations))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Comparison { bo, gd, sweep })
}

/// A run that never beat its starting point.
pub fn no_improvement(r: &Run) -> bool {
    r.final_relative_error >= r.initial_relative_error * (1.0 - 1e-9)
}

pub fn checks(c: &Comparison) -> Vec<Check> {
    let mut out = Vec::new();
    for g in &c.gd {
        for b in &c.bo {
            out.push(Check::new(
                format!("gd eta {} beats bo lambda {:e} tenfold", num(g.setting), b.setting),
                g.final_relative_error <= 0.1 * b.final_relative_error,
                format!("gd {:e}, bo {:e}", g.final_relative_error, b.final_relative_error),
            ));
        }
    }
    if let [a, b, ..] = c.bo.as_slice() {
        let ratio = (a.final_relative_error / b.final_relative_error).max(b.final_relative_error / a.final_relative_error);
        out.push(Check::new(
            format!("bo sensitive to lambda {:e} vs {:e}", a.setting, b.setting),
            ratio > 3.0,
            format!("ratio {ratio:.3}"),
        ));
    }
    if !c.sweep.is_empty() {
        let stuck: Vec<usize> = c.sweep.iter().filter(|r| no_improvement(r)).map(|r| r.krylov_dim).collect();
        out.push(Check::new("some Krylov start gives no bo improvement", !stuck.is_empty(), format!("stuck at d = {stuck:?}")));
    }
    out
}

fn summary_row(r: &Run) -> Vec<String> {
    vec![
        r.optimizer.to_string(),
        num(r.setting),
        r.krylov_dim.to_string(),
        num(r.initial_relative_error),
        num(r.final_relative_error),
        r.trace.evaluations.to_string(),
        r.status.clone(),
    ]
}

pub fn write(cfg: &CompareConfig, settings: &RunSettings) -> Result<Outcome, ExperimentError> {
    if settings.shots.is_some() {
        return Err(ExperimentError::Config("optimizer-compare evaluates exact expectations; --shots is not supported".into()));
    }
    let seed = settings.seed.unwrap_or(cfg.seed);
    let c = compare(cfg, seed)?;
    let mut sink = OutputSink::new(&settings.out, Experiment::OptimizerCompare, cfg, settings)?;
    for r in &c.bo {
        sink.csv(&format!("optimizer_bo_lambda_{:e}.csv", r.setting), &TRACE_HEADER, &trace_rows(&r.trace))?;
    }
    for r in &c.gd {
        sink.csv(&format!("optimizer_gd_eta_{}.csv", num(r.setting)), &TRACE_HEADER, &trace_rows(&r.trace))?;
    }
    for r in &c.sweep {
        sink.csv(&format!("optimizer_bo_krylov_{}.csv", r.krylov_dim), &TRACE_HEADER, &trace_rows(&r.trace))?;
    }
    let body: Vec<Vec<String>> = c.bo.iter().chain(&c.gd).chain(&c.sweep).map(summary_row).collect();
    sink.csv(
        "optimizer_summary.csv",
        &["optimizer", "setting", "krylov_dim", "initial_relative_error", "final_relative_error", "evaluations", "status"],
        &body,
    )?;
    let checks = checks(&c);
    let files = sink.finish(&checks)?;
    Ok(Outcome { files, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CompareConfig {
        CompareConfig {
            cutoff: 1,
            lambdas: vec![1e-2],
            bo_evaluations: 7,
            gd_steps: 20,
            sweep_dims: vec![1, 2],
            sweep_evaluations: 5,
            acquisition_starts: 8,
            likelihood_starts: 2,
            ..CompareConfig::default()
        }
    }

    #[test]
    fn krylov_start_improves_with_dimension() {
        let cfg = CompareConfig::default();
        let p = Problem::new(&cfg).unwrap();
        let e: Vec<f64> = (1..=4).map(|d| p.relative_error(p.energy(&p.start(d).unwrap()).unwrap())).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-14), "{e:?}");
    }

    #[test]
    fn bo_is_reproducible_and_never_worse_than_start() {
        let cfg = small();
        let p = Problem::new(&cfg).unwrap();
        let a = run_bo(&p, &cfg, 3, 1e-2, 1, 7).unwrap();
        let b = run_bo(&p, &cfg, 3, 1e-2, 1, 7).unwrap();
        assert_eq!(a.trace.rows, b.trace.rows);
        assert!(a.final_relative_error <= a.initial_relative_error);
        assert_eq!(a.trace.rows.len(), 7);
        assert_eq!(a.trace.evaluations, 7);
    }

    #[test]
    fn gd_trace_has_all_steps() {
        let cfg = small();
        let p = Problem::new(&cfg).unwrap();
        let r = run_gd(&p, 0.1, 2, 20).unwrap();
        assert_eq!(r.trace.rows.len(), 21);
        assert!(r.final_relative_error < r.initial_relative_error);
    }

    #[test]
    fn shots_rejected() {
        let s = RunSettings { out: std::env::temp_dir().join("plaqvqe-never-written"), shots: Some(10), seed: None };
        assert_eq!(write(&small(), &s).unwrap_err().exit_code(), 2);
        assert!(!s.out.exists());
    }

    #[test]
    fn rejects_negative_lambda() {
        let cfg = CompareConfig { lambdas: vec![-1.0], ..CompareConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
