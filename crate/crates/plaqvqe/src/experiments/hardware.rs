//! Noiseless gradient-descent VQE on the small systems run on hardware, checked against the
//! lowest hardware energies as upper bounds.

use serde::{Deserialize, Serialize};

use super::{num, trace_rows, Check, Experiment, ExperimentError, Outcome, OutputSink, RunSettings, TRACE_HEADER};
use crate::ansatz::{maximize_overlap, real_two_qubit_ansatz};
use crate::encoding::group_two_qubit_hamiltonian;
use crate::hamiltonian::{
    build_chain_hamiltonian, connected_sector, enumerate_gauss_basis, truncated_named_basis, Boundary, NamedTruncation, SparseHamiltonian,
    SymmetricSubspace,
};
use crate::optimizers::{gradient_descent, CircuitObjective, GdOptions, Objective, ObjectiveHandle, OptimizerTrace, ShotObjective, StepMode};
use crate::spectral::{exact_ground, lanczos_initialize};
use crate::statevector::{Circuit, StateVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardwareConfig {
    /// Systems to run, in output order.
    pub systems: Vec<System>,
    pub trunc8_g: f64,
    pub trunc8_bound: f64,
    pub trunc6plus_g: f64,
    pub trunc6plus_bound: f64,
    pub two_plaquette_g: f64,
    pub two_plaquette_bound: f64,
    /// Krylov dimension of the improved start.
    pub krylov_dim: usize,
    pub eta: f64,
    pub max_steps: usize,
    /// Energy change below which descent stops.
    pub tol: f64,
    /// Relative error that counts as converged.
    pub relative_tol: f64,
    pub seed: u64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            systems: System::ALL.to_vec(),
            trunc8_g: 1.0,
            trunc8_bound: 2.783,
            trunc6plus_g: 0.8,
            trunc6plus_bound: 3.767,
            two_plaquette_g: 1.0,
            two_plaquette_bound: 2.594,
            krylov_dim: 2,
            eta: 1.0,
            max_steps: 50_000,
            tol: 1e-14,
            relative_tol: 1e-6,
            seed: 0,
        }
    }
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.systems.is_empty() {
            return bad("systems must not be empty");
        }
        if [self.trunc8_g, self.trunc6plus_g, self.two_plaquette_g].iter().any(|g| !(*g > 0.0)) {
            return bad("couplings must be positive");
        }
        if !(self.eta > 0.0) || self.max_steps == 0 || self.krylov_dim == 0 {
            return bad("eta, max_steps and krylov_dim must be positive");
        }
        if !(self.tol >= 0.0) || !(self.relative_tol > 0.0) {
            return bad("tolerances must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum System {
    #[serde(rename = "trunc8")]
    Trunc8,
    #[serde(rename = "trunc6plus")]
    Trunc6plus,
    #[serde(rename = "two_plaquette_pbc")]
    TwoPlaquette,
}

impl System {
    pub const ALL: [System; 3] = [System::Trunc8, System::Trunc6plus, System::TwoPlaquette];

    pub fn name(self) -> &'static str {
        match self {
            System::Trunc8 => "trunc8",
            System::Trunc6plus => "trunc6plus",
            System::TwoPlaquette => "two_plaquette_pbc",
        }
    }

    fn coupling(self, cfg: &HardwareConfig) -> f64 {
        match self {
            System::Trunc8 => cfg.trunc8_g,
            System::Trunc6plus => cfg.trunc6plus_g,
            System::TwoPlaquette => cfg.two_plaquette_g,
        }
    }

    fn bound(self, cfg: &HardwareConfig) -> f64 {
        match self {
            System::Trunc8 => cfg.trunc8_bound,
            System::Trunc6plus => cfg.trunc6plus_bound,
            System::TwoPlaquette => cfg.two_plaquette_bound,
        }
    }
}

/// Hamiltonian, ansatz and both starting angles of one system.
pub struct Setup {
    pub system: System,
    pub g: f64,
    pub hamiltonian: SparseHamiltonian<f64>,
    pub circuit: Circuit<f64>,
    pub initial: StateVector<f64>,
    pub exact: f64,
    /// `(label, θ₀)`: the electric vacuum and the improved start.
    pub starts: Vec<(&'static str, Vec<f64>)>,
}

/// Two-plaquette periodic chain truncated at the 3 in the global basis of CP- and
/// translation-symmetric orbits connected to the electric vacuum, with the `3/g²` constant
/// counted once. Four states.
pub fn two_plaquette_global(g: f64) -> Result<SparseHamiltonian<f64>, ExperimentError> {
    let basis = enumerate_gauss_basis(2, Boundary::Periodic)?;
    let h = build_chain_hamiltonian(&basis, g)?;
    let keep = connected_sector(&h, basis.electric_vacuum());
    let translate = basis.translation_permutation().ok_or_else(|| ExperimentError::Numerical("periodic chain without translation".into()))?;
    let sub = SymmetricSubspace::from_orbits(basis.dim(), &[basis.cp_permutation(), translate], &keep);
    let reduced = sub.project(&h);
    let shift = SparseHamiltonian::from_triplets(reduced.dim(), (0..reduced.dim()).map(|i| (i, i, -3.0 / (g * g))))?;
    Ok(reduced.add(&shift)?)
}

pub fn setup(system: System, cfg: &HardwareConfig) -> Result<Setup, ExperimentError> {
    let g = system.coupling(cfg);
    let (hamiltonian, improved_label) = match system {
        System::Trunc8 => (truncated_named_basis(NamedTruncation::Trunc8, g)?, "krylov"),
        System::Trunc6plus => (truncated_named_basis(NamedTruncation::Trunc6plus, g)?, "krylov"),
        System::TwoPlaquette => (two_plaquette_global(g)?, "single_plaquette"),
    };
    if hamiltonian.dim() != 4 {
        return Err(ExperimentError::Numerical(format!("{} has {} states, expected 4", system.name(), hamiltonian.dim())));
    }
    let mut seed = vec![0.0; 4];
    seed[0] = 1.0;
    let target = lanczos_initialize(&hamiltonian, &seed, cfg.krylov_dim.min(4))?.ritz_vector;
    let (exact, _) = exact_ground(&hamiltonian)?;
    let circuit = real_two_qubit_ansatz();
    let initial = StateVector::basis(4, 0);
    let zero = vec![0.0; circuit.n_params()];
    let (improved, _) = maximize_overlap(&circuit, &initial, &target, &zero, 200, 1e-14)?;
    Ok(Setup { system, g, hamiltonian, circuit, initial, exact, starts: vec![("electric", zero), (improved_label, improved)] })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HardwareRun {
    pub system: System,
    pub start: &'static str,
    pub g: f64,
    pub exact: f64,
    pub bound: f64,
    pub final_energy: f64,
    pub relative_error: f64,
    /// First step whose energy is within `relative_tol` of the exact energy.
    pub converged_step: Option<usize>,
    pub trace: OptimizerTrace<f64>,
}

/// Exact expectations, or sampled ones when `shots` is set.
pub fn descend(s: &Setup, theta0: &[f64], cfg: &HardwareConfig, shots: Option<usize>, seed: u64) -> Result<OptimizerTrace<f64>, ExperimentError> {
    let mut opts = GdOptions::new(cfg.eta, StepMode::Backtracking, cfg.max_steps);
    opts.tol = cfg.tol;
    opts.exact = Some(s.exact);
    let exact = CircuitObjective { circuit: &s.circuit, hamiltonian: &s.hamiltonian, initial: s.initial.clone() };
    let groups = shots.map(|_| group_two_qubit_hamiltonian(&s.hamiltonian)).transpose()?;
    let sampled = groups.as_ref().zip(shots).map(|(gr, n)| ShotObjective { circuit: &s.circuit, groups: gr, initial: s.initial.clone(), shots: n, seed });
    let obj: &dyn Objective<f64> = match &sampled {
        Some(o) => o,
        None => &exact,
    };
    let handle = ObjectiveHandle::new(obj);
    gradient_descent(&handle, theta0, &opts, |_| false).map_err(|f| f.error.into())
}

pub fn run_system(system: System, cfg: &HardwareConfig, shots: Option<usize>, seed: u64) -> Result<Vec<HardwareRun>, ExperimentError> {
    let s = setup(system, cfg)?;
    let exact_obj = CircuitObjective { circuit: &s.circuit, hamiltonian: &s.hamiltonian, initial: s.initial.clone() };
    s.starts
        .iter()
        .map(|(label, theta0)| {
            let trace = descend(&s, theta0, cfg, shots, seed)?;
            let final_energy = exact_obj.evaluate(&trace.best_params)?.energy;
            let rel = |e: f64| ((e - s.exact) / s.exact).abs();
            let converged_step = trace.rows.iter().find(|r| rel(r.energy) <= cfg.relative_tol).map(|r| r.iter);
            Ok(HardwareRun {
                system,
                start: label,
                g: s.g,
                exact: s.exact,
                bound: system.bound(cfg),
                final_energy,
                relative_error: rel(final_energy),
                converged_step,
                trace,
            })
        })
        .collect()
}

pub fn checks(runs: &[HardwareRun], cfg: &HardwareConfig) -> Vec<Check> {
    let mut out = Vec::new();
    for r in runs {
        out.push(Check::new(
            format!("{} from {} below hardware minimum", r.system.name(), r.start),
            r.final_energy <= r.bound,
            format!("E = {}, bound {}", num(r.final_energy), num(r.bound)),
        ));
        out.push(Check::new(
            format!("{} from {} reaches exact energy", r.system.name(), r.start),
            r.relative_error <= cfg.relative_tol,
            format!("relative error {:e}", r.relative_error),
        ));
    }
    let two: Vec<&HardwareRun> = runs.iter().filter(|r| r.system == System::TwoPlaquette).collect();
    if let [electric, improved] = two.as_slice() {
        let faster = match (improved.converged_step, electric.converged_step) {
            (Some(a), Some(b)) => a < b,
            (Some(_), None) => true,
            _ => false,
        };
        out.push(Check::new(
            "two_plaquette_pbc single-plaquette start converges faster",
            faster,
            format!("steps {:?} vs {:?}", improved.converged_step, electric.converged_step),
        ));
    }
    out
}

fn opt_cell(s: Option<usize>) -> String {
    s.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write(cfg: &HardwareConfig, settings: &RunSettings) -> Result<Outcome, ExperimentError> {
    let seed = settings.seed.unwrap_or(cfg.seed);
    if settings.shots.is_some() {
        for &system in &cfg.systems {
            let s = setup(system, cfg)?;
            group_two_qubit_hamiltonian(&s.hamiltonian).map_err(|e| {
                ExperimentError::Config(format!("{} cannot be sampled ({e}); leave it out of systems", system.name()))
            })?;
        }
    }
    let mut runs = Vec::new();
    for &system in &cfg.systems {
        runs.extend(run_system(system, cfg, settings.shots, seed)?);
    }
    let mut sink = OutputSink::new(&settings.out, Experiment::HardwareAnalogue, cfg, settings)?;
    for r in &runs {
        sink.csv(&format!("hardware_{}_{}.csv", r.system.name(), r.start), &TRACE_HEADER, &trace_rows(&r.trace))?;
    }
    let body: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.system.name().to_string(),
                num(r.g),
                r.start.to_string(),
                num(r.exact),
                num(r.final_energy),
                num(r.bound),
                num(r.relative_error),
                opt_cell(r.converged_step),
                (r.trace.rows.len() - 1).to_string(),
                (r.final_energy <= r.bound).to_string(),
            ]
        })
        .collect();
    sink.csv(
        "hardware_summary.csv",
        &["system", "g", "start", "exact", "final_energy", "bound", "relative_error", "converged_step", "steps", "below_bound"],
        &body,
    )?;
    let checks = checks(&runs, cfg);
    let files = sink.finish(&checks)?;
    Ok(Outcome { files, checks })
}
