//! Backtracking gradient descent step counts against the coupling and the Krylov start.

use serde::{Deserialize, Serialize};

use super::{num, Check, Experiment, ExperimentError, Outcome, OutputSink, RunSettings};
use crate::fit::{linear_fit, LinearFit};
use crate::optimizers::{gradient_descent, GdOptions, ObjectiveHandle, ProjectiveObjective, StepMode};
use crate::spectral::{cp_even_plaquette, exact_ground, lanczos_initialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdScalingConfig {
    /// `left` (steps against g), `right` (steps against Krylov dimension) or `both`.
    pub mode: String,
    pub cutoff: u32,
    pub g_min: f64,
    pub g_max: f64,
    pub points: usize,
    /// Squared vacuum overlap that ends a run.
    pub target: f64,
    pub eta: f64,
    pub max_steps: usize,
    pub right_g: f64,
    pub right_dims: Vec<usize>,
}

impl Default for GdScalingConfig {
    fn default() -> Self {
        GdScalingConfig {
            mode: "both".into(),
            cutoff: 31,
            g_min: 0.1,
            g_max: 1.0,
            points: 10,
            target: 0.999,
            eta: 1.0,
            max_steps: 200_000,
            right_g: 0.1,
            right_dims: (1..=12).collect(),
        }
    }
}

impl GdScalingConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if !["left", "right", "both"].contains(&self.mode.as_str()) {
            return bad("mode must be left, right or both");
        }
        if !(self.g_min > 0.0 && self.g_max >= self.g_min && self.right_g > 0.0) {
            return bad("couplings must be positive with g_min ≤ g_max");
        }
        if self.points == 0 || self.cutoff == 0 || self.max_steps == 0 || self.right_dims.iter().any(|&d| d == 0) {
            return bad("points, cutoff, max_steps and dimensions must be positive");
        }
        if !(self.target > 0.0 && self.target < 1.0) || !(self.eta > 0.0) {
            return bad("target must lie in (0, 1) and eta be positive");
        }
        Ok(())
    }

    pub fn couplings(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.g_min];
        }
        (0..self.points).map(|k| self.g_min + (self.g_max - self.g_min) * k as f64 / (self.points - 1) as f64).collect()
    }
}

/// Steps from `start` until the normalized iterate has squared vacuum overlap ≥ `target`;
/// `None` if the budget runs out.
pub fn steps_to_target(g: f64, cfg: &GdScalingConfig, krylov_dim: usize) -> Result<Option<usize>, ExperimentError> {
    let h = cp_even_plaquette(cfg.cutoff, g)?;
    let (_, v0) = exact_ground(&h)?;
    let mut seed = vec![0.0; h.dim()];
    seed[0] = 1.0;
    let start = if krylov_dim <= 1 { seed } else { lanczos_initialize(&h, &seed, krylov_dim.min(h.dim()))?.ritz_vector };
    let overlap = |x: &[f64]| {
        let n: f64 = x.iter().map(|a| a * a).sum();
        x.iter().zip(&v0).map(|(a, b)| a * b).sum::<f64>().powi(2) / n
    };
    let obj = ProjectiveObjective { hamiltonian: &h };
    let handle = ObjectiveHandle::with_bounds(&obj, vec![(f64::NEG_INFINITY, f64::INFINITY); h.dim()]);
    let mut opts = GdOptions::new(cfg.eta, StepMode::Backtracking, cfg.max_steps);
    opts.tol = 0.0;
    let trace = gradient_descent(&handle, &start, &opts, |x| overlap(x) >= cfg.target).map_err(|f| ExperimentError::Numerical(f.error.to_string()))?;
    let last = trace.rows.last().expect("first row always recorded");
    Ok((overlap(&last.params) >= cfg.target).then_some(last.iter))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub x: f64,
    pub steps: Option<usize>,
}

pub fn left(cfg: &GdScalingConfig) -> Result<Vec<StepRow>, ExperimentError> {
    cfg.couplings().into_iter().map(|g| Ok(StepRow { x: g, steps: steps_to_target(g, cfg, 1)? })).collect()
}

pub fn right(cfg: &GdScalingConfig) -> Result<Vec<StepRow>, ExperimentError> {
    cfg.right_dims.iter().map(|&d| Ok(StepRow { x: d as f64, steps: steps_to_target(cfg.right_g, cfg, d)? })).collect()
}

/// `ln(steps)` against `ln(g)` over runs that reached the target with at least one step.
pub fn left_fit(rows: &[StepRow]) -> Option<LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter_map(|r| r.steps.filter(|&s| s > 0).map(|s| (r.x.ln(), (s as f64).ln()))).unzip();
    linear_fit(&x, &y)
}

fn cell(s: Option<usize>) -> String {
    s.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write(cfg: &GdScalingConfig, settings: &RunSettings) -> Result<Outcome, ExperimentError> {
    let mut sink = OutputSink::new(&settings.out, Experiment::GdScaling, cfg, settings)?;
    let mut checks = Vec::new();
    let header = format!("steps_to_{}", cfg.target);
    if cfg.mode != "right" {
        let rows = left(cfg)?;
        let body: Vec<Vec<String>> = rows.iter().map(|r| vec![num(r.x), cell(r.steps)]).collect();
        sink.csv("gd_scaling_g.csv", &["g", &header], &body)?;
        let fit = left_fit(&rows);
        sink.json("gd_scaling_fit.json", &fit)?;
        checks.push(Check::new("all couplings reached target", rows.iter().all(|r| r.steps.is_some()), format!("{} rows", rows.len())));
    }
    if cfg.mode != "left" {
        let rows = right(cfg)?;
        let body: Vec<Vec<String>> = rows.iter().map(|r| vec![(r.x as usize).to_string(), cell(r.steps)]).collect();
        sink.csv("gd_scaling_krylov.csv", &["krylov_dim", "steps"], &body)?;
        checks.push(Check::new("all starts reached target", rows.iter().all(|r| r.steps.is_some()), format!("{} rows", rows.len())));
    }
    let files = sink.finish(&checks)?;
    Ok(Outcome { files, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strong_coupling_needs_few_steps() {
        let cfg = GdScalingConfig { cutoff: 5, ..GdScalingConfig::default() };
        let s = steps_to_target(1.0, &cfg, 1).unwrap().unwrap();
        assert!(s >= 1 && s < 50);
    }

    #[test]
    fn krylov_start_never_slower() {
        let cfg = GdScalingConfig { cutoff: 7, ..GdScalingConfig::default() };
        let a = steps_to_target(0.5, &cfg, 1).unwrap().unwrap();
        let b = steps_to_target(0.5, &cfg, 4).unwrap().unwrap();
        assert!(b <= a);
    }

    #[test]
    fn left_fit_skips_zero_steps() {
        let rows = vec![StepRow { x: 0.1, steps: Some(100) }, StepRow { x: 1.0, steps: Some(1) }, StepRow { x: 2.0, steps: Some(0) }];
        let f = left_fit(&rows).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
    }
}
