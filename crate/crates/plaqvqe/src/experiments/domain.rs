//! Domain decomposition and stitching on the finite open chain and on the infinite chain.

use serde::{Deserialize, Serialize};

use super::{num, Check, Experiment, ExperimentError, Outcome, OutputSink, RunSettings};
use crate::ansatz::{domain_program, maximize_overlap, stitched_ansatz, Domain, RotationProgram};
use crate::fit::{linear_fit, LinearFit};
use crate::hamiltonian::{build_chain_hamiltonian, enumerate_gauss_basis, Boundary, ChainBasis, LinkLabel};
use crate::mps::{build_local_terms, default_penalty, domain_stitch_on_mps, itebd_ground, optimize_stitch, DomainCell, ItebdOptions, RotationTable};
use crate::optimizers::{gradient_descent, CircuitObjective, GdOptions, ObjectiveHandle, StepMode};
use crate::spectral::exact_ground;
use crate::statevector::{apply, StateVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub g: f64,
    /// `finite`, `infinite` or `both`.
    pub mode: String,
    pub finite_length: usize,
    pub domain_sizes: Vec<usize>,
    pub gd_eta: f64,
    pub gd_steps: usize,
    pub infinite_lengths: Vec<usize>,
    pub chi: usize,
    pub reference_chi: usize,
    pub stitch_passes: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            g: 0.9,
            mode: "both".into(),
            finite_length: 5,
            domain_sizes: vec![1, 2, 3],
            gd_eta: 1.0,
            gd_steps: 400,
            infinite_lengths: vec![1, 2, 3, 4, 5],
            chi: 64,
            reference_chi: 64,
            stitch_passes: 40,
        }
    }
}

impl DomainConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(ExperimentError::Config("g must be positive".into()));
        }
        if !["finite", "infinite", "both"].contains(&self.mode.as_str()) {
            return Err(ExperimentError::Config(format!("unknown mode {:?}", self.mode)));
        }
        if self.finite_length == 0 || self.domain_sizes.iter().any(|&s| s == 0 || s >= self.finite_length) {
            return Err(ExperimentError::Config("domain sizes must lie in 1..finite_length".into()));
        }
        if self.infinite_lengths.iter().any(|l| !(1..=5).contains(l)) {
            return Err(ExperimentError::Config("infinite domain lengths must lie in 1..=5".into()));
        }
        if self.chi == 0 || self.reference_chi == 0 || self.gd_eta <= 0.0 {
            return Err(ExperimentError::Config("chi and gd_eta must be positive".into()));
        }
        Ok(())
    }

    pub fn finite(&self) -> bool {
        self.mode != "infinite"
    }

    pub fn infinite(&self) -> bool {
        self.mode != "finite"
    }
}

/// Domains of `size` separated by one junction plaquette, left to right.
pub fn tiling(length: usize, size: usize) -> Vec<Domain> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < length {
        out.push(Domain::new(start, size.min(length - start)));
        start += size + 1;
    }
    out
}

/// Vacuum of the isolated open chain of each domain, embedded with singlets elsewhere.
pub fn product_of_domain_vacua(basis: &ChainBasis, domains: &[Domain], g: f64) -> Result<Vec<f64>, ExperimentError> {
    let geom = basis.geometry();
    let mut owned: Vec<Option<(usize, usize)>> = vec![None; geom.n_links()];
    let mut pieces = Vec::new();
    for (k, d) in domains.iter().enumerate() {
        let sub = enumerate_gauss_basis(d.len, Boundary::Open)?;
        let (_, v) = exact_ground(&build_chain_hamiltonian(&sub, g)?)?;
        for (li, id) in sub.geometry().links().iter().enumerate() {
            let big = geom.link_index(id.shifted(d.start)).ok_or_else(|| ExperimentError::Numerical("domain outside chain".into()))?;
            owned[big] = Some((k, li));
        }
        pieces.push((sub, v));
    }
    let mut out = vec![0.0; basis.dim()];
    'cfg: for (i, cfg) in basis.configs().iter().enumerate() {
        let mut local: Vec<Vec<LinkLabel>> = pieces.iter().map(|(s, _)| vec![LinkLabel::One; s.geometry().n_links()]).collect();
        for (li, &lab) in cfg.iter().enumerate() {
            match owned[li] {
                Some((k, sl)) => local[k][sl] = lab,
                None if lab != LinkLabel::One => continue 'cfg,
                None => {}
            }
        }
        let mut amp = 1.0;
        for ((sub, v), l) in pieces.iter().zip(&local) {
            match sub.index_of(l) {
                Some(j) => amp *= v[j],
                None => continue 'cfg,
            }
        }
        out[i] = amp;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteStage {
    pub domain_size: usize,
    pub stage: &'static str,
    pub overlap: f64,
    pub energy: f64,
    pub electric: Vec<f64>,
    pub plaquette: Vec<f64>,
    pub rms_plaquette_error: f64,
    pub gd_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteStudy {
    pub exact_energy: f64,
    pub exact_plaquette: Vec<f64>,
    pub exact_electric: Vec<f64>,
    pub stages: Vec<FiniteStage>,
}

struct ChainObservables {
    electric: Vec<Vec<f64>>,
    plaquette: Vec<crate::hamiltonian::SparseHamiltonian<f64>>,
}

impl ChainObservables {
    fn new(basis: &ChainBasis, g: f64) -> Self {
        let l = basis.geometry().length();
        ChainObservables {
            electric: (0..l).map(|j| basis.plaquette_electric(j, g)).collect(),
            plaquette: (0..l).map(|j| basis.plaquette_hermitian(j)).collect(),
        }
    }

    fn measure(&self, psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let e = self.electric.iter().map(|d| d.iter().zip(psi).map(|(w, a)| w * a * a).sum()).collect();
        let p = self.plaquette.iter().map(|op| op.expectation(psi)).collect();
        (e, p)
    }
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Result of preparing the finite-chain domain vacua and optimizing the stitched ansatz.
pub struct StitchedOptimum {
    pub program: RotationProgram,
    pub theta: Vec<f64>,
}

/// Initial, stitched and stitched-plus-layer stages on the open chain.
pub fn finite_study(cfg: &DomainConfig) -> Result<(FiniteStudy, Vec<(usize, StitchedOptimum)>), ExperimentError> {
    let basis = enumerate_gauss_basis(cfg.finite_length, Boundary::Open)?;
    let h = build_chain_hamiltonian(&basis, cfg.g)?;
    let (e0, v0) = exact_ground(&h)?;
    let obs = ChainObservables::new(&basis, cfg.g);
    let (exact_electric, exact_plaquette) = obs.measure(&v0);
    let vac = StateVector::basis(basis.dim(), basis.electric_vacuum());
    let mut stages = Vec::new();
    let mut optima = Vec::new();
    for &s in &cfg.domain_sizes {
        let domains = tiling(cfg.finite_length, s);
        let three = stitched_ansatz::<f64>(&basis, &domains, 3)?;
        let blocks = three.blocks.clone();
        let target = product_of_domain_vacua(&basis, &domains, cfg.g)?;
        let d1 = stitched_ansatz::<f64>(&basis, &domains, 1)?;
        let (theta1, _) = maximize_overlap(&d1.circuit, &vac, &target, &vec![0.0; d1.circuit.n_params()], 500, 1e-15)?;
        let mut record = |stage: &'static str, psi: &[f64], steps: usize| {
            let (electric, plaquette) = obs.measure(psi);
            let overlap = psi.iter().zip(&v0).map(|(a, b)| a * b).sum::<f64>().powi(2);
            stages.push(FiniteStage {
                domain_size: s,
                stage,
                overlap,
                energy: h.expectation(psi),
                rms_plaquette_error: rms(&plaquette, &exact_plaquette),
                electric,
                plaquette,
                gd_steps: steps,
            });
        };
        let psi1 = apply(&d1.circuit, &theta1, &vac)?.real_parts();
        record("initial", &psi1, 0);

        let two = stitched_ansatz::<f64>(&basis, &domains, 2)?;
        let mut start2 = vec![0.0; two.circuit.n_params()];
        start2[..theta1.len()].copy_from_slice(&theta1);
        let (theta2, steps2) = vqe(&two.circuit, &h, &vac, &start2, cfg)?;
        let psi2 = apply(&two.circuit, &theta2, &vac)?.real_parts();
        record("stitched", &psi2, steps2);

        let mut start3 = vec![0.0; three.circuit.n_params()];
        start3[..theta2.len()].copy_from_slice(&theta2);
        debug_assert_eq!(blocks[2].start, theta2.len());
        let (theta3, steps3) = vqe(&three.circuit, &h, &vac, &start3, cfg)?;
        let psi3 = apply(&three.circuit, &theta3, &vac)?.real_parts();
        record("stitched+layer", &psi3, steps3);
        optima.push((s, StitchedOptimum { program: two.program, theta: theta2 }));
    }
    Ok((FiniteStudy { exact_energy: e0, exact_plaquette, exact_electric, stages }, optima))
}

fn vqe(
    circuit: &crate::statevector::Circuit<f64>,
    h: &crate::hamiltonian::SparseHamiltonian<f64>,
    vac: &StateVector<f64>,
    start: &[f64],
    cfg: &DomainConfig,
) -> Result<(Vec<f64>, usize), ExperimentError> {
    let obj = CircuitObjective { circuit, hamiltonian: h, initial: vac.clone() };
    let handle = ObjectiveHandle::new(&obj);
    let opts = GdOptions::new(cfg.gd_eta, StepMode::Backtracking, cfg.gd_steps);
    let trace = gradient_descent(&handle, start, &opts, |_| false).map_err(|f| ExperimentError::Numerical(f.error.to_string()))?;
    Ok((trace.best_params, trace.rows.len().saturating_sub(1)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfiniteRow {
    pub l: usize,
    pub initial_plaquette: f64,
    pub initial_error: f64,
    pub stitched_plaquette: f64,
    pub stitched_error: f64,
    pub initial_energy_density: f64,
    pub stitched_energy_density: f64,
    pub discard_weight_max: f64,
    pub n_params: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfiniteStudy {
    pub reference_plaquette: f64,
    pub reference_energy_density: f64,
    pub rows: Vec<InfiniteRow>,
    /// Fit of `ln|error|` against `l` for the initial states.
    pub fit: Option<LinearFit>,
    pub stitched_fit: Option<LinearFit>,
}

/// Domain program for the infinite-chain cell and its angles from the exact open-chain
/// vacuum. Length 5 uses domains of three and one plaquette with a stitch layer between them.
pub fn infinite_domain(l: usize, g: f64) -> Result<(RotationProgram, Vec<f64>), ExperimentError> {
    let basis = enumerate_gauss_basis(l, Boundary::Open)?;
    let (_, v) = exact_ground(&build_chain_hamiltonian(&basis, g)?)?;
    let vac = StateVector::basis(basis.dim(), basis.electric_vacuum());
    let (program, start) = if l == 5 {
        let domains = [Domain::new(0, 3), Domain::new(4, 1)];
        let d1 = stitched_ansatz::<f64>(&basis, &domains, 1)?;
        let target = product_of_domain_vacua(&basis, &domains, g)?;
        let (t1, _) = maximize_overlap(&d1.circuit, &vac, &target, &vec![0.0; d1.circuit.n_params()], 500, 1e-15)?;
        let two = stitched_ansatz::<f64>(&basis, &domains, 2)?;
        let mut start = vec![0.0; two.circuit.n_params()];
        start[..t1.len()].copy_from_slice(&t1);
        (two.program, start)
    } else {
        let p = domain_program(&basis, Domain::new(0, l))?;
        let n = p.n_params;
        (p, vec![0.0; n])
    };
    let circuit = program.circuit::<f64>(&basis)?;
    let (theta, _) = maximize_overlap(&circuit, &vac, &v, &start, 500, 1e-15)?;
    Ok((program, theta))
}

pub fn infinite_study(cfg: &DomainConfig) -> Result<InfiniteStudy, ExperimentError> {
    let mut opts = ItebdOptions::new(cfg.g, cfg.reference_chi);
    opts.c_g = default_penalty(cfg.g);
    let reference = itebd_ground(cfg.g, &opts)?;
    let v_inf = reference.plaq_expectation;
    let terms = build_local_terms(cfg.g, opts.c_g)?;
    let table = RotationTable::new()?;
    let mut rows = Vec::new();
    for &l in &cfg.infinite_lengths {
        let (program, theta) = infinite_domain(l, cfg.g)?;
        let cell = DomainCell::new(l, program)?;
        let initial = domain_stitch_on_mps(&cell, &terms, &table, &theta, None, cfg.chi)?;
        let stitched = optimize_stitch(&cell, &terms, &table, &theta, cfg.chi, cfg.stitch_passes)?;
        rows.push(InfiniteRow {
            l,
            initial_plaquette: initial.center_plaquette,
            initial_error: (initial.center_plaquette - v_inf).abs(),
            stitched_plaquette: stitched.result.center_plaquette,
            stitched_error: (stitched.result.center_plaquette - v_inf).abs(),
            initial_energy_density: initial.energy_density,
            stitched_energy_density: stitched.result.energy_density,
            discard_weight_max: initial.discard_weight_max.max(stitched.result.discard_weight_max),
            n_params: cell.n_params(),
        });
    }
    let ls: Vec<f64> = rows.iter().map(|r| r.l as f64).collect();
    let ln = |f: fn(&InfiniteRow) -> f64| rows.iter().map(|r| f(r).ln()).collect::<Vec<f64>>();
    Ok(InfiniteStudy {
        reference_plaquette: v_inf,
        reference_energy_density: reference.energy_density,
        fit: linear_fit(&ls, &ln(|r| r.initial_error)),
        stitched_fit: linear_fit(&ls, &ln(|r| r.stitched_error)),
        rows,
    })
}

/// Conditions on the finite study: overlap rises initial → stitched and does not fall with the
/// extra layer; the RMS plaquette error falls at each stage.
pub fn finite_checks(study: &FiniteStudy) -> Vec<Check> {
    let mut out = Vec::new();
    let sizes: Vec<usize> = {
        let mut v: Vec<usize> = study.stages.iter().map(|s| s.domain_size).collect();
        v.dedup();
        v
    };
    for s in sizes {
        let st: Vec<&FiniteStage> = study.stages.iter().filter(|x| x.domain_size == s).collect();
        if st.len() != 3 {
            continue;
        }
        out.push(Check::new(
            format!("finite s={s} overlap"),
            st[1].overlap > st[0].overlap && st[2].overlap >= st[1].overlap,
            format!("{:.9} -> {:.9} -> {:.9}", st[0].overlap, st[1].overlap, st[2].overlap),
        ));
        out.push(Check::new(
            format!("finite s={s} rms error"),
            st[1].rms_plaquette_error < st[0].rms_plaquette_error && st[2].rms_plaquette_error < st[1].rms_plaquette_error,
            format!("{:.3e} -> {:.3e} -> {:.3e}", st[0].rms_plaquette_error, st[1].rms_plaquette_error, st[2].rms_plaquette_error),
        ));
    }
    out
}

/// Conditions on the infinite study: monotone error decay, exponential fit quality and a
/// tenfold gain from stitching at every length.
pub fn infinite_checks(study: &InfiniteStudy) -> Vec<Check> {
    let errs: Vec<f64> = study.rows.iter().map(|r| r.initial_error).collect();
    let r2 = study.fit.map(|f| f.r_squared).unwrap_or(f64::NAN);
    let worst = study.rows.iter().map(|r| r.stitched_error / r.initial_error).fold(0.0, f64::max);
    vec![
        Check::new("infinite error monotone", errs.windows(2).all(|w| w[1] < w[0]), errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" ")),
        Check::new("infinite exponential fit", r2 > 0.95, format!("R2 = {r2:.4}")),
        Check::new("infinite stitching gain", worst <= 0.1, format!("max stitched/initial = {worst:.3e}")),
    ]
}

pub fn write(cfg: &DomainConfig, settings: &RunSettings) -> Result<Outcome, ExperimentError> {
    let mut sink = OutputSink::new(&settings.out, Experiment::DomainDecomp, cfg, settings)?;
    let mut checks = Vec::new();
    if cfg.finite() {
        let (study, _) = finite_study(cfg)?;
        let l = cfg.finite_length;
        let mut header: Vec<String> = ["domain_size", "stage", "overlap", "energy", "rms_plaquette_error", "gd_steps"].iter().map(|s| s.to_string()).collect();
        header.extend((0..l).map(|j| format!("electric_{j}")));
        header.extend((0..l).map(|j| format!("plaquette_{j}")));
        let mut rows = Vec::new();
        let mut exact = vec!["exact".to_string(), "exact".into(), num(1.0), num(study.exact_energy), num(0.0), "0".into()];
        exact.extend(study.exact_electric.iter().map(|&x| num(x)));
        exact.extend(study.exact_plaquette.iter().map(|&x| num(x)));
        rows.push(exact);
        for s in &study.stages {
            let mut r = vec![s.domain_size.to_string(), s.stage.to_string(), num(s.overlap), num(s.energy), num(s.rms_plaquette_error), s.gd_steps.to_string()];
            r.extend(s.electric.iter().map(|&x| num(x)));
            r.extend(s.plaquette.iter().map(|&x| num(x)));
            rows.push(r);
        }
        let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        sink.csv("domain_finite.csv", &h, &rows)?;
        checks.extend(finite_checks(&study));
    }
    if cfg.infinite() {
        let study = infinite_study(cfg)?;
        let rows: Vec<Vec<String>> = study
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.l.to_string(),
                    num(r.initial_plaquette),
                    num(r.initial_error),
                    num(r.stitched_plaquette),
                    num(r.stitched_error),
                    num(r.initial_energy_density),
                    num(r.stitched_energy_density),
                    num(r.discard_weight_max),
                    r.n_params.to_string(),
                ]
            })
            .collect();
        sink.csv(
            "domain_infinite.csv",
            &[
                "l",
                "initial_plaquette",
                "initial_error",
                "stitched_plaquette",
                "stitched_error",
                "initial_energy_density",
                "stitched_energy_density",
                "discard_weight_max",
                "n_params",
            ],
            &rows,
        )?;
        sink.json(
            "domain_infinite_fit.json",
            &serde_json::json!({
                "reference_plaquette": study.reference_plaquette,
                "reference_energy_density": study.reference_energy_density,
                "initial_fit": study.fit,
                "stitched_fit": study.stitched_fit,
                "junction_gates": "all fourteen rotations on the junction plaquette",
            }),
        )?;
        checks.extend(infinite_checks(&study));
    }
    let files = sink.finish(&checks)?;
    Ok(Outcome { files, checks })
}
