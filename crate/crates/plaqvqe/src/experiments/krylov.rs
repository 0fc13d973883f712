//! Krylov dimension needed to reach a vacuum overlap, as a function of the coupling.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{num, Check, Experiment, ExperimentError, Outcome, OutputSink, RunSettings};
use crate::fit::{linear_fit, LinearFit};
use crate::spectral::{cp_even_plaquette, exact_ground, krylov_overlaps, MAX_SCAN_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrylovConfig {
    /// `scan`, `inset` or `both`.
    pub mode: String,
    pub g_min: f64,
    pub g_max: f64,
    pub points: usize,
    pub cutoff: u32,
    pub threshold: f64,
    pub max_dim: usize,
    pub inset_g: f64,
    pub inset_max_dim: usize,
    /// Infidelities below this are at round-off and excluded from the inset fit.
    pub usable_floor: f64,
    pub inset_fit_points: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        KrylovConfig {
            mode: "both".into(),
            g_min: 0.1,
            g_max: 1.0,
            points: 10,
            cutoff: 31,
            threshold: 0.999999,
            max_dim: MAX_SCAN_DIM,
            inset_g: 0.5,
            inset_max_dim: 40,
            usable_floor: 1e-10,
            inset_fit_points: 5,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if !["scan", "inset", "both"].contains(&self.mode.as_str()) {
            return bad("mode must be scan, inset or both");
        }
        if !(self.g_min > 0.0 && self.g_max >= self.g_min && self.inset_g > 0.0) {
            return bad("couplings must be positive with g_min ≤ g_max");
        }
        if self.points == 0 || self.cutoff == 0 || self.max_dim == 0 || self.inset_max_dim == 0 {
            return bad("points, cutoff and dimensions must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if self.inset_fit_points < 2 {
            return bad("inset fit needs at least two points");
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

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub g: f64,
    /// `None` when the threshold is not reached within the scanned dimensions.
    pub required_dim: Option<usize>,
    pub overlap_at_dim: f64,
    pub seconds: f64,
}

/// Squared vacuum overlap of the Ritz vector for each Krylov dimension from the electric vacuum.
pub fn overlap_curve(g: f64, cutoff: u32, max_dim: usize) -> Result<Vec<f64>, ExperimentError> {
    let h = cp_even_plaquette(cutoff, g)?;
    let (_, v0) = exact_ground(&h)?;
    let mut seed = vec![0.0; h.dim()];
    seed[0] = 1.0;
    Ok(krylov_overlaps(&h, &seed, &v0, max_dim.min(h.dim()))?)
}

pub fn scan(cfg: &KrylovConfig) -> Result<Vec<ScanRow>, ExperimentError> {
    cfg.couplings()
        .into_iter()
        .map(|g| {
            let t = Instant::now();
            let curve = overlap_curve(g, cfg.cutoff, cfg.max_dim)?;
            let hit = curve.iter().position(|&o| o >= cfg.threshold);
            let overlap_at_dim = match hit {
                Some(k) => curve[k],
                None => curve.iter().copied().fold(0.0, f64::max),
            };
            Ok(ScanRow { g, required_dim: hit.map(|k| k + 1), overlap_at_dim, seconds: t.elapsed().as_secs_f64() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InsetRow {
    pub dim: usize,
    pub overlap: f64,
    pub infidelity: f64,
    pub usable: bool,
}

pub fn inset(cfg: &KrylovConfig) -> Result<Vec<InsetRow>, ExperimentError> {
    let curve = overlap_curve(cfg.inset_g, cfg.cutoff, cfg.inset_max_dim)?;
    Ok(curve
        .iter()
        .enumerate()
        .map(|(k, &o)| {
            let inf = 1.0 - o;
            InsetRow { dim: k + 1, overlap: o, infidelity: inf, usable: inf >= cfg.usable_floor }
        })
        .collect())
}

/// `ln(1 − overlap²)` against `d²` over the last `points` usable dimensions.
pub fn inset_fit(rows: &[InsetRow], points: usize) -> Option<LinearFit> {
    let usable: Vec<&InsetRow> = rows.iter().filter(|r| r.usable).collect();
    let tail = &usable[usable.len().saturating_sub(points)..];
    let x: Vec<f64> = tail.iter().map(|r| (r.dim * r.dim) as f64).collect();
    let y: Vec<f64> = tail.iter().map(|r| r.infidelity.ln()).collect();
    linear_fit(&x, &y)
}

/// Required dimension against `1/g`.
pub fn scan_fit(rows: &[ScanRow]) -> Option<LinearFit> {
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.required_dim.map(|d| (1.0 / r.g, d as f64))).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&x, &y)
}

pub fn write(cfg: &KrylovConfig, settings: &RunSettings) -> Result<Outcome, ExperimentError> {
    let mut sink = OutputSink::new(&settings.out, Experiment::KrylovScaling, cfg, settings)?;
    let mut checks = Vec::new();
    if cfg.mode != "inset" {
        let rows = scan(cfg)?;
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    num(r.g),
                    r.required_dim.map(|d| d.to_string()).unwrap_or_default(),
                    num(r.overlap_at_dim),
                    if r.required_dim.is_some() { "" } else { "unreachable" }.to_string(),
                ]
            })
            .collect();
        sink.csv("krylov_scaling.csv", &["g", "required_dim", "overlap_at_dim", "flag"], &body)?;
        let unreachable: Vec<String> = rows.iter().filter(|r| r.required_dim.is_none()).map(|r| num(r.g)).collect();
        checks.push(Check::new("threshold reached", unreachable.is_empty(), format!("unreachable at g = [{}]", unreachable.join(", "))));
        let dims: Vec<usize> = rows.iter().filter_map(|r| r.required_dim).collect();
        checks.push(Check::new("required_dim non-increasing", dims.windows(2).all(|w| w[1] <= w[0]), format!("{dims:?}")));
        sink.json("krylov_scaling_fit.json", &scan_fit(&rows))?;
    }
    if cfg.mode != "scan" {
        let rows = inset(cfg)?;
        let body: Vec<Vec<String>> =
            rows.iter().map(|r| vec![r.dim.to_string(), num(r.overlap), num(r.infidelity), r.usable.to_string()]).collect();
        sink.csv("krylov_inset.csv", &["dim", "overlap", "infidelity", "usable"], &body)?;
        sink.json("krylov_inset_fit.json", &inset_fit(&rows, cfg.inset_fit_points))?;
    }
    let files = sink.finish(&checks)?;
    Ok(Outcome { files, checks })
}
