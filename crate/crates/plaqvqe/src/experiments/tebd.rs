//! Infinite-chain vacuum from imaginary-time TEBD, at the main bond dimension and a smaller one.

use serde::{Deserialize, Serialize};

use super::{Check, Experiment, ExperimentError, Outcome, OutputSink, RunSettings};
use crate::mps::{default_penalty, itebd_ground, ItebdOptions, ItebdResult};

/// Slack on per-sweep energy increases from Trotter error.
pub const MONOTONE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TebdConfig {
    pub g: f64,
    pub chi: usize,
    /// Smaller bond dimension for the convergence comparison; skipped when absent.
    pub compare_chi: Option<usize>,
    /// Gauss penalty strength; `20·max(3g²/2, 3/g²)` when absent.
    pub c_g: Option<f64>,
    /// Imaginary time steps, one stage each; `0.1 → 0.001` in four stages when absent.
    pub dtau_schedule: Option<Vec<f64>>,
    pub steps_per_sweep: usize,
    pub max_sweeps_per_stage: usize,
    pub tol: f64,
    pub plaq_shift_tol: f64,
    pub penalty_tol: f64,
}

impl Default for TebdConfig {
    fn default() -> Self {
        TebdConfig {
            g: 0.9,
            chi: 64,
            compare_chi: Some(32),
            c_g: None,
            dtau_schedule: None,
            steps_per_sweep: 10,
            max_sweeps_per_stage: 2000,
            tol: 1e-9,
            plaq_shift_tol: 1e-5,
            penalty_tol: 1e-6,
        }
    }
}

impl TebdConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if !(self.g > 0.0 && self.g.is_finite()) {
            return bad("g must be positive");
        }
        if self.chi == 0 || self.compare_chi == Some(0) {
            return bad("bond dimensions must be positive");
        }
        if self.c_g.is_some_and(|c| !(c >= 0.0)) {
            return bad("c_g must be non-negative");
        }
        if let Some(s) = &self.dtau_schedule {
            if s.is_empty() || s.iter().any(|t| !(*t > 0.0)) || s.windows(2).any(|w| w[1] > w[0]) {
                return bad("dtau_schedule must be positive and non-increasing");
            }
        }
        if self.steps_per_sweep == 0 || self.max_sweeps_per_stage == 0 || !(self.tol > 0.0) {
            return bad("steps_per_sweep, max_sweeps_per_stage and tol must be positive");
        }
        Ok(())
    }

    pub fn options(&self, chi: usize) -> ItebdOptions<f64> {
        let mut o = ItebdOptions::new(self.g, chi);
        o.c_g = self.c_g.unwrap_or_else(|| default_penalty(self.g));
        if let Some(s) = &self.dtau_schedule {
            o.schedule = s.clone();
        }
        o.steps_per_sweep = self.steps_per_sweep;
        o.max_sweeps_per_stage = self.max_sweeps_per_stage;
        o.tol = self.tol;
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TebdRecord {
    pub g: f64,
    pub chi: usize,
    #[serde(rename = "cG")]
    pub c_g: f64,
    pub dtau_schedule: Vec<f64>,
    pub energy_density: f64,
    pub plaq_expectation: f64,
    pub discard_weight_max: f64,
    pub sweeps: usize,
    pub penalty: f64,
    pub converged: bool,
    pub bond_dims: Vec<usize>,
    /// `(stage, energy density)` after every sweep.
    pub history: Vec<(usize, f64)>,
}

impl TebdRecord {
    pub fn new(g: f64, opts: &ItebdOptions<f64>, r: &ItebdResult<f64>) -> Self {
        TebdRecord {
            g,
            chi: opts.chi,
            c_g: opts.c_g,
            dtau_schedule: opts.schedule.clone(),
            energy_density: r.energy_density,
            plaq_expectation: r.plaq_expectation,
            discard_weight_max: r.discard_weight_max,
            sweeps: r.sweeps,
            penalty: r.penalty,
            converged: r.converged,
            bond_dims: r.state.bond_dims(),
            history: r.history.clone(),
        }
    }

    pub fn monotone(&self) -> bool {
        self.history.windows(2).all(|w| w[1].1 <= w[0].1 + MONOTONE_TOL)
    }
}

pub fn vacuum(cfg: &TebdConfig, chi: usize) -> Result<TebdRecord, ExperimentError> {
    let opts = cfg.options(chi);
    let r = itebd_ground(cfg.g, &opts)?;
    Ok(TebdRecord::new(cfg.g, &opts, &r))
}

pub fn checks(main: &TebdRecord, compare: Option<&TebdRecord>, cfg: &TebdConfig) -> Vec<Check> {
    let mut out = Vec::new();
    for r in std::iter::once(main).chain(compare) {
        out.push(Check::new(format!("chi {} energy monotone per sweep", r.chi), r.monotone(), format!("{} sweeps", r.history.len())));
        out.push(Check::new(format!("chi {} converged", r.chi), r.converged, format!("{} sweeps", r.sweeps)));
    }
    out.push(Check::new("gauss penalty vanishes", main.penalty.abs() < cfg.penalty_tol, format!("{:e}", main.penalty)));
    if let Some(c) = compare {
        let shift = (main.plaq_expectation - c.plaq_expectation).abs();
        out.push(Check::new(format!("chi {} to {} plaquette shift", c.chi, main.chi), shift < cfg.plaq_shift_tol, format!("{shift:e}")));
    }
    out
}

pub fn write(cfg: &TebdConfig, settings: &RunSettings) -> Result<Outcome, ExperimentError> {
    let main = vacuum(cfg, cfg.chi)?;
    let compare = cfg.compare_chi.map(|chi| vacuum(cfg, chi)).transpose()?;
    let mut sink = OutputSink::new(&settings.out, Experiment::TebdVacuum, cfg, settings)?;
    sink.json(&format!("tebd_vacuum_chi{}.json", main.chi), &main)?;
    if let Some(c) = &compare {
        sink.json(&format!("tebd_vacuum_chi{}.json", c.chi), c)?;
    }
    let checks = checks(&main, compare.as_ref(), cfg);
    let files = sink.finish(&checks)?;
    Ok(Outcome { files, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_chi_run_is_consistent() {
        let cfg = TebdConfig { g: 1.5, chi: 8, compare_chi: None, dtau_schedule: Some(vec![0.1, 0.03]), ..TebdConfig::default() };
        let r = vacuum(&cfg, 8).unwrap();
        assert!(r.monotone());
        assert!(r.penalty.abs() < 1e-10);
        assert!(r.plaq_expectation > 0.0 && r.plaq_expectation < 1.0);
        assert_eq!(r.dtau_schedule, vec![0.1, 0.03]);
        let j = serde_json::to_value(&r).unwrap();
        for k in ["g", "chi", "cG", "dtau_schedule", "energy_density", "plaq_expectation", "discard_weight_max", "sweeps"] {
            assert!(j.get(k).is_some(), "{k}");
        }
    }

    #[test]
    fn rejects_increasing_schedule() {
        let cfg = TebdConfig { dtau_schedule: Some(vec![0.01, 0.1]), ..TebdConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn monotone_allows_round_off_only() {
        let mut r = vacuum(&TebdConfig { g: 2.0, chi: 4, dtau_schedule: Some(vec![0.1]), ..TebdConfig::default() }, 4).unwrap();
        r.history = vec![(0, 1.0), (0, 1.0 + 1e-12), (0, 0.5)];
        assert!(r.monotone());
        r.history.push((0, 0.5 + 1e-8));
        assert!(!r.monotone());
    }
}
