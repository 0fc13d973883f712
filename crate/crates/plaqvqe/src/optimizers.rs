//! Classical optimizers: parameter-shift gradient descent and Gaussian-process Bayesian
//! optimization with a Tikhonov regulator and probability-of-improvement acquisition.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::encoding::GroupedHamiltonian;
use crate::hamiltonian::SparseHamiltonian;
use crate::scalar::{lit, to_f64, Real};
use crate::statevector::{expectation, sample_energy, Angle, Circuit, GateKind, StateError, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("learning rate must be positive")]
    InvalidRate,
    #[error("non-finite energy at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("multicollinearity{}: covariance not positive definite, smallest eigenvalue {smallest_eigenvalue:e}", .iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Multicollinearity { smallest_eigenvalue: f64, iteration: Option<usize> },
    #[error("need at least {needed} distinct points, have {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("parameter count mismatch: expected {expected}, found {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error(transparent)]
    State(#[from] StateError),
}

/// An optimizer error together with everything recorded before it.
#[derive(Debug, Clone, PartialEq)]
pub struct OptFailure<T> {
    pub error: OptError,
    pub trace: OptimizerTrace<T>,
}

impl<T> std::fmt::Display for OptFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} recorded steps", self.error, self.trace.rows.len())
    }
}

impl<T: std::fmt::Debug> std::error::Error for OptFailure<T> {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation<T> {
    pub energy: T,
    pub variance: Option<T>,
}

/// Energy landscape over a parameter vector.
pub trait Objective<T: Real>: Sync {
    fn n_params(&self) -> usize;

    fn evaluate(&self, theta: &[T]) -> Result<Evaluation<T>, OptError>;

    /// Parameterized gate occurrences; `tag` is passed to [`Objective::evaluate_shifted`].
    fn occurrences(&self) -> Vec<Occurrence> {
        (0..self.n_params()).map(|k| Occurrence { param: k, tag: k, involutory: true }).collect()
    }

    /// Energy with one occurrence's angle shifted by `delta`.
    fn evaluate_shifted(&self, theta: &[T], tag: usize, delta: T) -> Result<T, OptError> {
        let mut t = theta.to_vec();
        t[tag] += delta;
        Ok(self.evaluate(&t)?.energy)
    }

    /// Closed-form gradient when the objective is not a rotation circuit.
    fn analytic_gradient(&self, _theta: &[T]) -> Option<Result<Vec<T>, OptError>> {
        None
    }
}

/// One appearance of a parameter in the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Occurrence {
    pub param: usize,
    pub tag: usize,
    /// Generator squares to the identity (Pauli rotations). Block rotations that act
    /// trivially elsewhere have generator spectrum `{0, ±1}` instead.
    pub involutory: bool,
}

/// `⟨ψ₀|U(θ)† H U(θ)|ψ₀⟩` for a circuit on a real Hamiltonian.
pub struct CircuitObjective<'a, T> {
    pub circuit: &'a Circuit<T>,
    pub hamiltonian: &'a SparseHamiltonian<T>,
    pub initial: StateVector<T>,
}

impl<T: Real> Objective<T> for CircuitObjective<'_, T> {
    fn n_params(&self) -> usize {
        self.circuit.n_params()
    }

    fn evaluate(&self, theta: &[T]) -> Result<Evaluation<T>, OptError> {
        let mut psi = self.initial.clone();
        self.circuit.apply_with_offset(theta, &mut psi, None)?;
        Ok(Evaluation { energy: expectation(self.hamiltonian, &psi)?, variance: None })
    }

    fn occurrences(&self) -> Vec<Occurrence> {
        occurrences_of(self.circuit)
    }

    fn evaluate_shifted(&self, theta: &[T], tag: usize, delta: T) -> Result<T, OptError> {
        let mut psi = self.initial.clone();
        self.circuit.apply_with_offset(theta, &mut psi, Some((tag, delta)))?;
        Ok(expectation(self.hamiltonian, &psi)?)
    }
}

fn occurrences_of<T: Real>(c: &Circuit<T>) -> Vec<Occurrence> {
    c.gates()
        .iter()
        .enumerate()
        .filter_map(|(gi, g)| match g.angle {
            Some(Angle::Slot(k)) => Some(Occurrence { param: k, tag: gi, involutory: g.kind != GateKind::Plane }),
            _ => None,
        })
        .collect()
}

/// Shot-sampled energy of a two-qubit circuit; the sampling seed is derived from the
/// parameters so repeated calls agree.
pub struct ShotObjective<'a, T> {
    pub circuit: &'a Circuit<T>,
    pub groups: &'a GroupedHamiltonian<T>,
    pub initial: StateVector<T>,
    pub shots: usize,
    pub seed: u64,
}

impl<T: Real> ShotObjective<'_, T> {
    fn seed_for(&self, theta: &[T], tag: Option<(usize, T)>) -> u64 {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        let mut mix = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x100_0000_01b3).rotate_left(29);
        };
        for &t in theta {
            mix(to_f64(t).to_bits());
        }
        if let Some((g, d)) = tag {
            mix(g as u64);
            mix(to_f64(d).to_bits());
        }
        h
    }

    fn sampled(&self, theta: &[T], offset: Option<(usize, T)>) -> Result<(T, T), OptError> {
        let mut psi = self.initial.clone();
        self.circuit.apply_with_offset(theta, &mut psi, offset)?;
        Ok(sample_energy(self.groups, &psi, self.shots, self.seed_for(theta, offset))?)
    }
}

impl<T: Real> Objective<T> for ShotObjective<'_, T> {
    fn n_params(&self) -> usize {
        self.circuit.n_params()
    }

    fn evaluate(&self, theta: &[T]) -> Result<Evaluation<T>, OptError> {
        let (e, se) = self.sampled(theta, None)?;
        Ok(Evaluation { energy: e, variance: Some(se * se) })
    }

    fn occurrences(&self) -> Vec<Occurrence> {
        occurrences_of(self.circuit)
    }

    fn evaluate_shifted(&self, theta: &[T], tag: usize, delta: T) -> Result<T, OptError> {
        Ok(self.sampled(theta, Some((tag, delta)))?.0)
    }
}

/// Rayleigh quotient `xᵀHx / xᵀx` over unnormalized real amplitudes.
pub struct ProjectiveObjective<'a, T> {
    pub hamiltonian: &'a SparseHamiltonian<T>,
}

impl<T: Real> Objective<T> for ProjectiveObjective<'_, T> {
    fn n_params(&self) -> usize {
        self.hamiltonian.dim()
    }

    fn evaluate(&self, x: &[T]) -> Result<Evaluation<T>, OptError> {
        let nn = x.iter().fold(T::zero(), |a, &v| a + v * v);
        Ok(Evaluation { energy: self.hamiltonian.expectation(x) / nn, variance: None })
    }

    fn analytic_gradient(&self, x: &[T]) -> Option<Result<Vec<T>, OptError>> {
        let nn = x.iter().fold(T::zero(), |a, &v| a + v * v);
        let hx = self.hamiltonian.matvec(x);
        let e = x.iter().zip(&hx).fold(T::zero(), |a, (&u, &v)| a + u * v) / nn;
        let two: T = lit(2.0);
        Some(Ok(hx.iter().zip(x).map(|(&h, &v)| two * (h - e * v) / nn).collect()))
    }
}

/// Objective plus an evaluation counter and a parameter box.
pub struct ObjectiveHandle<'a, T> {
    objective: &'a dyn Objective<T>,
    counter: AtomicUsize,
    pub bounds: Vec<(T, T)>,
}

impl<'a, T: Real> ObjectiveHandle<'a, T> {
    /// Box `[−π, π]` per parameter.
    pub fn new(objective: &'a dyn Objective<T>) -> Self {
        let b = (lit(-PI), lit(PI));
        Self::with_bounds(objective, vec![b; objective.n_params()])
    }

    /// Box `[0, π]` per parameter, for hyperspherical angles.
    pub fn hyperspherical(objective: &'a dyn Objective<T>) -> Self {
        Self::with_bounds(objective, vec![(T::zero(), lit(PI)); objective.n_params()])
    }

    pub fn with_bounds(objective: &'a dyn Objective<T>, bounds: Vec<(T, T)>) -> Self {
        ObjectiveHandle { objective, counter: AtomicUsize::new(0), bounds }
    }

    pub fn n_params(&self) -> usize {
        self.objective.n_params()
    }

    pub fn evaluations(&self) -> usize {
        self.counter.load(Ordering::Relaxed)
    }

    pub fn evaluate(&self, theta: &[T]) -> Result<Evaluation<T>, OptError> {
        if theta.len() != self.n_params() {
            return Err(OptError::ParameterCount { expected: self.n_params(), found: theta.len() });
        }
        self.counter.fetch_add(1, Ordering::Relaxed);
        self.objective.evaluate(theta)
    }

    fn evaluate_shifted(&self, theta: &[T], tag: usize, delta: T) -> Result<T, OptError> {
        self.counter.fetch_add(1, Ordering::Relaxed);
        self.objective.evaluate_shifted(theta, tag, delta)
    }

    /// Closed-form gradient when available, otherwise the shift rule.
    pub fn gradient(&self, theta: &[T]) -> Result<Vec<T>, OptError> {
        match self.objective.analytic_gradient(theta) {
            Some(g) => g,
            None => parameter_shift_gradient(self, theta),
        }
    }
}

/// `∂ᵢE = Σ_occurrences E(+π/4) − E(−π/4)`, exact for gates `exp(−iθP)` with `P² = 1`.
/// A parameter shared by several gates sums over its occurrences. Block rotations add the
/// correction `(1 − √2)/2 · [E(+π/2) − E(−π/2)]`, which vanishes for involutory generators
/// and makes the rule exact for the frequency set `{1, 2}`.
pub fn parameter_shift_gradient<T: Real>(obj: &ObjectiveHandle<'_, T>, theta: &[T]) -> Result<Vec<T>, OptError> {
    if theta.len() != obj.n_params() {
        return Err(OptError::ParameterCount { expected: obj.n_params(), found: theta.len() });
    }
    let quarter: T = lit(FRAC_PI_4);
    let half: T = lit(FRAC_PI_2);
    let corr: T = lit((1.0 - SQRT_2) / 2.0);
    let occ = obj.objective.occurrences();
    let diffs: Result<Vec<(usize, T)>, OptError> = occ
        .par_iter()
        .map(|o| {
            let mut d = obj.evaluate_shifted(theta, o.tag, quarter)? - obj.evaluate_shifted(theta, o.tag, -quarter)?;
            if !o.involutory {
                d += corr * (obj.evaluate_shifted(theta, o.tag, half)? - obj.evaluate_shifted(theta, o.tag, -half)?);
            }
            Ok((o.param, d))
        })
        .collect();
    let mut grad = vec![T::zero(); theta.len()];
    for (k, d) in diffs? {
        grad[k] += d;
    }
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow<T> {
    pub iter: usize,
    pub params: Vec<T>,
    pub energy: T,
    pub grad_norm: Option<T>,
    pub eta: Option<T>,
    pub relative_error: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerTrace<T> {
    pub rows: Vec<TraceRow<T>>,
    pub best_params: Vec<T>,
    pub best_energy: T,
    pub evaluations: usize,
    pub wall_seconds: f64,
    pub seed: Option<u64>,
}

impl<T: Real> OptimizerTrace<T> {
    fn empty(params: &[T]) -> Self {
        OptimizerTrace {
            rows: Vec::new(),
            best_params: params.to_vec(),
            best_energy: lit(f64::INFINITY),
            evaluations: 0,
            wall_seconds: 0.0,
            seed: None,
        }
    }

    pub fn energies(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.energy).collect()
    }

    /// `iter,energy,grad_norm,eta,relative_error`; absent values are left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iter", "energy", "grad_norm", "eta", "relative_error"])?;
        let opt = |x: Option<T>| x.map(|v| format!("{:.12e}", to_f64(v))).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.iter.to_string(),
                format!("{:.12e}", to_f64(r.energy)),
                opt(r.grad_norm),
                opt(r.eta),
                opt(r.relative_error),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn relative<T: Real>(e: T, exact: Option<T>) -> Option<T> {
    exact.map(|e0| ((e - e0) / e0).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepMode {
    Fixed,
    /// Halve η until the energy decreases, never re-increase.
    Backtracking,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdOptions<T> {
    pub eta: T,
    pub mode: StepMode,
    pub max_steps: usize,
    pub tol: T,
    pub max_halvings: usize,
    /// Exact ground energy for the relative-error column.
    pub exact: Option<T>,
}

impl<T: Real> GdOptions<T> {
    pub fn new(eta: T, mode: StepMode, max_steps: usize) -> Self {
        GdOptions { eta, mode, max_steps, tol: lit(1e-10), max_halvings: 40, exact: None }
    }
}

/// Gradient descent `θ ← θ − η∇E`. `stop` sees each accepted iterate and ends the run
/// when it returns true.
pub fn gradient_descent<T: Real>(
    obj: &ObjectiveHandle<'_, T>,
    theta0: &[T],
    opts: &GdOptions<T>,
    mut stop: impl FnMut(&[T]) -> bool,
) -> Result<OptimizerTrace<T>, OptFailure<T>> {
    let start = Instant::now();
    let mut trace = OptimizerTrace::empty(theta0);
    let fail = |error, mut trace: OptimizerTrace<T>| {
        trace.wall_seconds = start.elapsed().as_secs_f64();
        trace.evaluations = obj.evaluations();
        Err(OptFailure { error, trace })
    };
    if !(opts.eta > T::zero()) {
        return fail(OptError::InvalidRate, trace);
    }
    let mut theta = theta0.to_vec();
    let mut eta = opts.eta;
    let mut energy = match obj.evaluate(&theta) {
        Ok(e) if e.energy.is_finite() => e.energy,
        Ok(_) => return fail(OptError::NonFinite { iteration: 0 }, trace),
        Err(e) => return fail(e, trace),
    };
    let mut iter = 0;
    loop {
        let grad = match obj.gradient(&theta) {
            Ok(g) => g,
            Err(e) => return fail(e, trace),
        };
        let gnorm = grad.iter().fold(T::zero(), |a, &g| a + g * g).sqrt();
        trace.rows.push(TraceRow {
            iter,
            params: theta.clone(),
            energy,
            grad_norm: Some(gnorm),
            eta: Some(eta),
            relative_error: relative(energy, opts.exact),
        });
        if energy < trace.best_energy {
            trace.best_energy = energy;
            trace.best_params = theta.clone();
        }
        if iter >= opts.max_steps || gnorm < opts.tol || stop(&theta) {
            break;
        }
        iter += 1;
        let step = |eta: T| theta.iter().zip(&grad).map(|(&t, &g)| t - eta * g).collect::<Vec<T>>();
        match opts.mode {
            StepMode::Fixed => {
                theta = step(eta);
                energy = match obj.evaluate(&theta) {
                    Ok(e) if e.energy.is_finite() => e.energy,
                    Ok(_) => return fail(OptError::NonFinite { iteration: iter }, trace),
                    Err(e) => return fail(e, trace),
                };
            }
            StepMode::Backtracking => {
                let mut accepted = false;
                for _ in 0..=opts.max_halvings {
                    let cand = step(eta);
                    let e = match obj.evaluate(&cand) {
                        Ok(e) => e.energy,
                        Err(e) => return fail(e, trace),
                    };
                    if e.is_finite() && e < energy {
                        theta = cand;
                        energy = e;
                        accepted = true;
                        break;
                    }
                    eta *= lit(0.5);
                }
                if !accepted {
                    break;
                }
            }
        }
    }
    trace.wall_seconds = start.elapsed().as_secs_f64();
    trace.evaluations = obj.evaluations();
    Ok(trace)
}

/// Length-scale choice for [`gp_fit`].
#[derive(Clone, Debug, PartialEq)]
pub enum LengthScales<T> {
    Fixed(Vec<T>),
    /// Maximize the data likelihood inside `[1e-3, 10·width]` per dimension.
    Auto { widths: Vec<T>, starts: usize, seed: u64, warm: Option<Vec<T>> },
}

/// Gaussian process with the kernel `exp(−Σ(Δxᵢ/lᵢ)²)` and a BLUP mean.
#[derive(Clone, Debug)]
pub struct GaussianProcessModel<T: Real> {
    pub points: Vec<Vec<T>>,
    pub values: Vec<T>,
    pub variances: Vec<T>,
    pub length_scales: Vec<T>,
    pub lambda: T,
    chol: nalgebra::Cholesky<T, nalgebra::Dyn>,
    c_inv_z: DVector<T>,
    c_inv_1: DVector<T>,
    one_c_inv_1: T,
    blup_mean: T,
}

pub fn kernel<T: Real>(a: &[T], b: &[T], l: &[T]) -> T {
    let s = a.iter().zip(b).zip(l).fold(T::zero(), |acc, ((&x, &y), &li)| {
        let d = (x - y) / li;
        acc + d * d
    });
    (-s).exp()
}

fn covariance<T: Real>(points: &[Vec<T>], variances: &[T], lambda: T, l: &[T]) -> DMatrix<T> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        let k = kernel(&points[i], &points[j], l);
        if i == j {
            k + lambda + variances[i]
        } else {
            k
        }
    })
}

fn smallest_eigenvalue<T: Real>(c: &DMatrix<T>) -> f64 {
    let ev = c.clone().symmetric_eigenvalues();
    ev.iter().map(|&v| to_f64(v)).fold(f64::INFINITY, f64::min)
}

fn factor<T: Real>(points: &[Vec<T>], values: &[T], variances: &[T], lambda: T, l: &[T]) -> Result<GaussianProcessModel<T>, OptError> {
    let c = covariance(points, variances, lambda, l);
    let chol = match c.clone().cholesky() {
        Some(ch) if ch.l_dirty().diagonal().iter().all(|&d| d > T::zero() && d.is_finite()) => ch,
        _ => return Err(OptError::Multicollinearity { smallest_eigenvalue: smallest_eigenvalue(&c), iteration: None }),
    };
    let n = points.len();
    let z = DVector::from_column_slice(values);
    let ones = DVector::from_element(n, T::one());
    let c_inv_z = chol.solve(&z);
    let c_inv_1 = chol.solve(&ones);
    let one_c_inv_1 = c_inv_1.sum();
    let blup_mean = c_inv_z.sum() / one_c_inv_1;
    Ok(GaussianProcessModel {
        points: points.to_vec(),
        values: values.to_vec(),
        variances: variances.to_vec(),
        length_scales: l.to_vec(),
        lambda,
        chol,
        c_inv_z,
        c_inv_1,
        one_c_inv_1,
        blup_mean,
    })
}

impl<T: Real> GaussianProcessModel<T> {
    pub fn blup_mean(&self) -> T {
        self.blup_mean
    }

    /// Gaussian log-likelihood of the data with the BLUP mean and covariance `C`.
    pub fn log_likelihood(&self) -> T {
        let n = self.points.len();
        let r = DVector::from_iterator(n, self.values.iter().map(|&z| z - self.blup_mean));
        let quad = r.dot(&self.chol.solve(&r));
        let logdet = self.chol.l_dirty().diagonal().iter().fold(T::zero(), |a, &d| a + d.ln());
        let two: T = lit(2.0);
        -quad / two - logdet - lit::<T>(0.5 * n as f64 * (2.0 * PI).ln())
    }
}

/// Fits the process to `(X, Z)`; `C = K + (λ + varᵢ)δᵢⱼ`.
pub fn gp_fit<T: Real>(
    points: &[Vec<T>],
    values: &[T],
    variances: &[T],
    lambda: T,
    scales: &LengthScales<T>,
) -> Result<GaussianProcessModel<T>, OptError> {
    if points.is_empty() {
        return Err(OptError::TooFewPoints { needed: 1, found: 0 });
    }
    match scales {
        LengthScales::Fixed(l) => factor(points, values, variances, lambda, l),
        LengthScales::Auto { widths, starts, seed, warm } => {
            let distinct = {
                let mut d: Vec<&Vec<T>> = Vec::new();
                for p in points {
                    if !d.contains(&p) {
                        d.push(p);
                    }
                }
                d.len()
            };
            if distinct < 2 {
                return Err(OptError::TooFewPoints { needed: 2, found: distinct });
            }
            let l = fit_length_scales(points, values, variances, lambda, widths, *starts, *seed, warm.as_deref())?;
            factor(points, values, variances, lambda, &l)
        }
    }
}

fn negative_log_likelihood<T: Real>(points: &[Vec<T>], values: &[T], variances: &[T], lambda: T, l: &[T]) -> f64 {
    let c = covariance(points, variances, lambda, l);
    let Some(chol) = c.cholesky() else { return f64::INFINITY };
    let n = points.len();
    let ones = DVector::from_element(n, T::one());
    let z = DVector::from_column_slice(values);
    let ci1 = chol.solve(&ones);
    let ciz = chol.solve(&z);
    let mean = ciz.sum() / ci1.sum();
    let r = z - ones * mean;
    let quad = to_f64(r.dot(&chol.solve(&r)));
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|&d| 2.0 * to_f64(d).ln()).sum();
    let v = 0.5 * quad + 0.5 * logdet + 0.5 * n as f64 * (2.0 * PI).ln();
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_length_scales<T: Real>(
    points: &[Vec<T>],
    values: &[T],
    variances: &[T],
    lambda: T,
    widths: &[T],
    starts: usize,
    seed: u64,
    warm: Option<&[T]>,
) -> Result<Vec<T>, OptError> {
    let d = widths.len();
    let lo: Vec<f64> = vec![1e-3f64.ln(); d];
    let hi: Vec<f64> = widths.iter().map(|&w| (10.0 * to_f64(w)).ln()).collect();
    let nll = |u: &[f64]| -> f64 {
        let l: Vec<T> = u.iter().map(|&x| lit(x.exp())).collect();
        negative_log_likelihood(points, values, variances, lambda, &l)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cands: Vec<Vec<f64>> = (0..starts.max(1))
        .map(|_| (0..d).map(|i| rng.random_range(lo[i]..=hi[i])).collect())
        .collect();
    if let Some(w) = warm {
        cands.push(w.iter().map(|&x| to_f64(x).ln().clamp(lo[0], hi[0].max(lo[0]))).collect());
    }
    let scored: Vec<(f64, Vec<f64>)> = cands.into_par_iter().map(|u| (nll(&u), u)).collect();
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let bounds: Vec<(f64, f64)> = lo.iter().zip(&hi).map(|(&a, &b)| (a, b)).collect();
    let refined: Vec<(f64, Vec<f64>)> = order
        .iter()
        .take(1)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|&i| coordinate_descent(&nll, &scored[i].1, &bounds, 1, 1e-2))
        .collect();
    let best = refined.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("at least one start");
    if !best.0.is_finite() {
        let c = covariance(points, variances, lambda, &widths.to_vec());
        return Err(OptError::Multicollinearity { smallest_eigenvalue: smallest_eigenvalue(&c), iteration: None });
    }
    Ok(best.1.iter().map(|&u| lit(u.exp())).collect())
}

/// Posterior `(μ, σ²)` at `x`. The regulator λ enters `C` only; σ² is clamped at zero.
pub fn gp_posterior<T: Real>(model: &GaussianProcessModel<T>, x: &[T]) -> (T, T) {
    let n = model.points.len();
    let c = DVector::from_iterator(n, model.points.iter().map(|p| kernel(x, p, &model.length_scales)));
    let c_inv_c = model.chol.solve(&c);
    let ct_ci1 = c.dot(&model.c_inv_1);
    let w = T::one() - ct_ci1;
    let mu = c.dot(&model.c_inv_z) + w * model.blup_mean;
    let var = T::one() - c.dot(&c_inv_c) + w * w / model.one_c_inv_1;
    let var = if var < T::zero() { T::zero() } else { var };
    (mu, var)
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Cyclic coordinate descent with golden-section line searches inside a box.
pub fn coordinate_descent(f: &(dyn Fn(&[f64]) -> f64 + Sync), x0: &[f64], bounds: &[(f64, f64)], passes: usize, tol: f64) -> (f64, Vec<f64>) {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    for _ in 0..passes {
        let before = fx;
        for i in 0..x.len() {
            let (lo, hi) = bounds[i];
            let line = |t: f64| {
                let mut y = x.clone();
                y[i] = t;
                f(&y)
            };
            let (t, ft) = golden_section(&line, lo, hi, tol * (hi - lo).max(1e-12));
            if ft < fx {
                x[i] = t;
                fx = ft;
            }
        }
        if (before - fx).abs() <= 1e-12 * before.abs().max(1.0) {
            break;
        }
    }
    (fx, x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoOptions<T> {
    pub lambda: T,
    pub iterations: usize,
    pub seed: u64,
    /// Random acquisition starts per iteration.
    pub acquisition_starts: usize,
    /// Starts refined by coordinate descent.
    pub refined_starts: usize,
    pub likelihood_starts: usize,
    pub exact: Option<T>,
}

impl<T: Real> BoOptions<T> {
    pub fn new(lambda: T, iterations: usize, seed: u64) -> Self {
        BoOptions { lambda, iterations, seed, acquisition_starts: 64, refined_starts: 4, likelihood_starts: 16, exact: None }
    }
}

/// Bayesian optimization: each iteration refits length scales, minimizes
/// `(μ − f_min)/σ` inside the box and evaluates the objective there. Returns best-seen.
pub fn bayes_opt<T: Real>(
    obj: &ObjectiveHandle<'_, T>,
    init_points: &[Vec<T>],
    opts: &BoOptions<T>,
) -> Result<OptimizerTrace<T>, OptFailure<T>> {
    let start = Instant::now();
    let mut trace = OptimizerTrace::empty(init_points.first().map(|v| v.as_slice()).unwrap_or(&[]));
    trace.seed = Some(opts.seed);
    let finish = |mut trace: OptimizerTrace<T>| {
        trace.wall_seconds = start.elapsed().as_secs_f64();
        trace.evaluations = obj.evaluations();
        trace
    };
    if opts.iterations == 0 {
        return Err(OptFailure { error: OptError::NoIterations, trace: finish(trace) });
    }
    let d = obj.n_params();
    let bounds: Vec<(f64, f64)> = obj.bounds.iter().map(|&(a, b)| (to_f64(a), to_f64(b))).collect();
    let widths: Vec<T> = obj.bounds.iter().map(|&(a, b)| b - a).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut xs, mut zs, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    let record = |trace: &mut OptimizerTrace<T>, x: Vec<T>, e: Evaluation<T>, xs: &mut Vec<Vec<T>>, zs: &mut Vec<T>, vs: &mut Vec<T>| {
        if e.energy < trace.best_energy {
            trace.best_energy = e.energy;
            trace.best_params = x.clone();
        }
        trace.rows.push(TraceRow {
            iter: trace.rows.len(),
            params: x.clone(),
            energy: e.energy,
            grad_norm: None,
            eta: None,
            relative_error: relative(trace.best_energy, opts.exact),
        });
        xs.push(x);
        zs.push(e.energy);
        vs.push(e.variance.unwrap_or(T::zero()));
    };
    for x in init_points {
        match obj.evaluate(x) {
            Ok(e) if e.energy.is_finite() => record(&mut trace, x.clone(), e, &mut xs, &mut zs, &mut vs),
            Ok(_) => return Err(OptFailure { error: OptError::NonFinite { iteration: 0 }, trace: finish(trace) }),
            Err(e) => return Err(OptFailure { error: e, trace: finish(trace) }),
        }
    }
    let mut warm: Option<Vec<T>> = None;
    for it in 1..=opts.iterations {
        let scales = LengthScales::Auto { widths: widths.clone(), starts: opts.likelihood_starts, seed: rng.random(), warm: warm.clone() };
        let model = match gp_fit(&xs, &zs, &vs, opts.lambda, &scales) {
            Ok(m) => m,
            Err(OptError::Multicollinearity { smallest_eigenvalue, .. }) => {
                return Err(OptFailure {
                    error: OptError::Multicollinearity { smallest_eigenvalue, iteration: Some(it) },
                    trace: finish(trace),
                })
            }
            Err(e) => return Err(OptFailure { error: e, trace: finish(trace) }),
        };
        warm = Some(model.length_scales.clone());
        let f_min = to_f64(trace.best_energy);
        let acq = |u: &[f64]| -> f64 {
            let x: Vec<T> = u.iter().map(|&v| lit(v)).collect();
            let (mu, var) = gp_posterior(&model, &x);
            let s = to_f64(var).sqrt();
            if s <= 1e-12 {
                f64::INFINITY
            } else {
                (to_f64(mu) - f_min) / s
            }
        };
        let starts: Vec<Vec<f64>> = (0..opts.acquisition_starts.max(1))
            .map(|_| bounds.iter().map(|&(a, b)| rng.random_range(a..=b)).collect())
            .collect();
        let scored: Vec<(f64, Vec<f64>)> = starts.into_par_iter().map(|u| (acq(&u), u)).collect();
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
        let refined: Vec<(f64, Vec<f64>)> = order
            .iter()
            .take(opts.refined_starts.max(1))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|&i| coordinate_descent(&acq, &scored[i].1, &bounds, 3, 1e-4))
            .collect();
        let best = refined.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("at least one start");
        let mut proposal = best.1;
        let sigma_zero = !best.0.is_finite();
        if sigma_zero {
            // every proposal sits on evaluated data: resample uniformly
            proposal = bounds.iter().map(|&(a, b)| rng.random_range(a..=b)).collect();
        }
        let x: Vec<T> = proposal.iter().map(|&v| lit(v)).collect();
        debug_assert_eq!(x.len(), d);
        match obj.evaluate(&x) {
            Ok(e) if e.energy.is_finite() => record(&mut trace, x, e, &mut xs, &mut zs, &mut vs),
            Ok(_) => return Err(OptFailure { error: OptError::NonFinite { iteration: it }, trace: finish(trace) }),
            Err(e) => return Err(OptFailure { error: e, trace: finish(trace) }),
        }
    }
    Ok(finish(trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{cp_tied_two_qubit_ansatz, hyperspherical_circuit, real_two_qubit_ansatz};
    use crate::hamiltonian::{truncated_named_basis, NamedTruncation};
    use crate::spectral::exact_ground;
    use crate::statevector::Space;
    use proptest::prelude::*;
    use rand::Rng;

    struct Quadratic;

    impl Objective<f64> for Quadratic {
        fn n_params(&self) -> usize {
            3
        }
        fn evaluate(&self, t: &[f64]) -> Result<Evaluation<f64>, OptError> {
            Ok(Evaluation { energy: t.iter().map(|x| x * x).sum(), variance: None })
        }
        fn analytic_gradient(&self, t: &[f64]) -> Option<Result<Vec<f64>, OptError>> {
            Some(Ok(t.iter().map(|x| 2.0 * x).collect()))
        }
    }

    fn trunc8(g: f64) -> SparseHamiltonian<f64> {
        truncated_named_basis(NamedTruncation::Trunc8, g).unwrap()
    }

    #[test]
    fn shift_rule_matches_trig_identity() {
        let h = SparseHamiltonian::from_dense(&DMatrix::from_row_slice(2, 2, &[0.3, 1.1, 1.1, -0.7])).unwrap();
        let mut c = Circuit::new(Space::Basis(2));
        c.push(crate::statevector::Gate::plane(0, 1, Angle::Slot(0))).unwrap();
        let obj = CircuitObjective { circuit: &c, hamiltonian: &h, initial: StateVector::basis(2, 0) };
        let handle = ObjectiveHandle::new(&obj);
        for t in [-2.0f64, -0.3, 0.0, 0.9, 2.5] {
            // E(θ) = 0.3cos²θ − 0.7sin²θ + 1.1 sin2θ, so E' = −sin2θ + 2.2 cos2θ
            let exact = -(2.0 * t).sin() + 2.2 * (2.0 * t).cos();
            let g = parameter_shift_gradient(&handle, &[t]).unwrap()[0];
            assert!((g - exact).abs() < 1e-12);
        }
        assert_eq!(handle.evaluations(), 20);
    }

    fn fd_check(c: &Circuit<f64>, h: &SparseHamiltonian<f64>, psi0: StateVector<f64>, seed: u64) {
        let obj = CircuitObjective { circuit: c, hamiltonian: h, initial: psi0 };
        let handle = ObjectiveHandle::new(&obj);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..c.n_params()).map(|_| rng.random_range(-PI..PI)).collect();
        let g = parameter_shift_gradient(&handle, &theta).unwrap();
        let hstep = 1e-6;
        for k in 0..theta.len() {
            let mut p = theta.clone();
            let mut m = theta.clone();
            p[k] += hstep;
            m[k] -= hstep;
            let fd = (obj.evaluate(&p).unwrap().energy - obj.evaluate(&m).unwrap().energy) / (2.0 * hstep);
            assert!((fd - g[k]).abs() < 1e-6, "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn shift_rule_matches_finite_difference_on_trunc8() {
        let h = trunc8(0.9);
        for s in 0..5 {
            fd_check(&real_two_qubit_ansatz(), &h, StateVector::basis(4, 0), s);
            fd_check(&cp_tied_two_qubit_ansatz(), &h, StateVector::basis(4, 0), 100 + s);
        }
        let hs = crate::spectral::cp_even_plaquette::<f64>(3, 0.5).unwrap();
        fd_check(&hyperspherical_circuit(hs.dim()).unwrap(), &hs, StateVector::basis(hs.dim(), 0), 7);
    }

    #[test]
    fn gradient_vanishes_at_ground_state() {
        let h = trunc8(1.0);
        let (_, v) = exact_ground(&h).unwrap();
        let c = hyperspherical_circuit::<f64>(4).unwrap();
        let theta = crate::ansatz::hyperspherical_angles(&v);
        let obj = CircuitObjective { circuit: &c, hamiltonian: &h, initial: StateVector::basis(4, 0) };
        let g = parameter_shift_gradient(&ObjectiveHandle::new(&obj), &theta).unwrap();
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-10);
    }

    #[test]
    fn quadratic_bowl_fixed_step() {
        let q = Quadratic;
        let h = ObjectiveHandle::new(&q);
        let tr = gradient_descent(&h, &[1.0, -2.0, 0.5], &GdOptions::new(0.25, StepMode::Fixed, 60), |_| false).unwrap();
        let e = tr.energies();
        for w in e.windows(2) {
            assert!((w[1] - 0.25 * w[0]).abs() < 1e-12 * w[0].max(1e-300));
        }
        assert!(tr.best_energy < 1e-20);
    }

    #[test]
    fn invalid_rate_rejected() {
        let q = Quadratic;
        let h = ObjectiveHandle::new(&q);
        let err = gradient_descent(&h, &[1.0; 3], &GdOptions::new(0.0, StepMode::Fixed, 5), |_| false).unwrap_err();
        assert_eq!(err.error, OptError::InvalidRate);
    }

    #[test]
    fn backtracking_is_monotone_on_trunc6plus() {
        let h = truncated_named_basis(NamedTruncation::Trunc6plus, 0.8).unwrap();
        let c = real_two_qubit_ansatz::<f64>();
        let obj = CircuitObjective { circuit: &c, hamiltonian: &h, initial: StateVector::basis(4, 0) };
        let handle = ObjectiveHandle::new(&obj);
        let tr = gradient_descent(&handle, &[0.0; 3], &GdOptions::new(1.0, StepMode::Backtracking, 200), |_| false).unwrap();
        let e = tr.energies();
        assert!(e.windows(2).all(|w| w[1] <= w[0]));
        let (e0, _) = exact_ground(&h).unwrap();
        assert!((tr.best_energy - e0) / e0.abs() < 1e-6);
    }

    #[test]
    fn projective_gradient_matches_finite_difference() {
        let h = trunc8(0.7);
        let obj = ProjectiveObjective { hamiltonian: &h };
        let x = [0.9, -0.2, 0.3, 0.1];
        let g = obj.analytic_gradient(&x).unwrap().unwrap();
        for k in 0..4 {
            let mut p = x;
            let mut m = x;
            p[k] += 1e-6;
            m[k] -= 1e-6;
            let fd = (obj.evaluate(&p).unwrap().energy - obj.evaluate(&m).unwrap().energy) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn csv_trace_header() {
        let q = Quadratic;
        let h = ObjectiveHandle::new(&q);
        let mut o = GdOptions::new(0.25, StepMode::Fixed, 2);
        o.exact = Some(1.0);
        let tr = gradient_descent(&h, &[1.0, 0.0, 0.0], &o, |_| false).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "iter,energy,grad_norm,eta,relative_error");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,1.0"));
    }

    #[test]
    fn single_point_posterior_is_constant() {
        let m = gp_fit(&[vec![0.3f64]], &[2.5], &[0.0], 0.0, &LengthScales::Fixed(vec![0.7])).unwrap();
        for x in [-3.0, 0.0, 0.3, 10.0] {
            assert!((gp_posterior(&m, &[x]).0 - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_without_regulator() {
        let xs = vec![vec![0.0f64, 0.0], vec![1.0, 0.5], vec![-0.7, 1.2], vec![0.4, -1.0]];
        let zs = vec![1.0, -0.5, 2.0, 0.25];
        let m = gp_fit(&xs, &zs, &[0.0; 4], 0.0, &LengthScales::Fixed(vec![0.8, 1.1])).unwrap();
        for (x, z) in xs.iter().zip(&zs) {
            let (mu, var) = gp_posterior(&m, x);
            assert!((mu - z).abs() < 1e-10);
            assert!(var <= 1e-10);
        }
    }

    #[test]
    fn far_field_limit() {
        let xs = vec![vec![0.0], vec![0.5], vec![1.3]];
        let zs = vec![1.0, 3.0, -2.0];
        let m = gp_fit(&xs, &zs, &[0.0; 3], 1e-3, &LengthScales::Fixed(vec![0.4])).unwrap();
        let (mu, var) = gp_posterior(&m, &[1e3]);
        // c = 0 far away: μ = BLUP mean, σ² = 1 + 1/(1ᵀC⁻¹1)
        let c = covariance(&xs, &[0.0; 3], 1e-3, &[0.4]);
        let ci = c.try_inverse().unwrap();
        let s: f64 = ci.iter().sum();
        let blup: f64 = (0..3).map(|i| (0..3).map(|j| ci[(i, j)] * zs[j]).sum::<f64>()).sum::<f64>() / s;
        assert!((mu - blup).abs() < 1e-10);
        assert!((var - (1.0 + 1.0 / s)).abs() < 1e-10);
    }

    #[test]
    fn duplicate_point_is_multicollinear() {
        let xs = vec![vec![0.2], vec![0.2]];
        match gp_fit(&xs, &[1.0, 1.0], &[0.0; 2], 0.0, &LengthScales::Fixed(vec![1.0])) {
            Err(OptError::Multicollinearity { smallest_eigenvalue, .. }) => assert!(smallest_eigenvalue.abs() < 1e-12f64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mirror_data_mirror_posterior() {
        let xs = vec![vec![0.1], vec![0.6], vec![-0.9]];
        let mx: Vec<Vec<f64>> = xs.iter().map(|v| vec![-v[0]]).collect();
        let zs = vec![0.4, -1.0, 0.7];
        let a = gp_fit(&xs, &zs, &[0.0; 3], 1e-6, &LengthScales::Fixed(vec![0.5])).unwrap();
        let b = gp_fit(&mx, &zs, &[0.0; 3], 1e-6, &LengthScales::Fixed(vec![0.5])).unwrap();
        for x in [-1.2f64, -0.3, 0.0, 0.45, 2.0] {
            let (m1, v1) = gp_posterior(&a, &[x]);
            let (m2, v2) = gp_posterior(&b, &[-x]);
            assert!((m1 - m2).abs() < 1e-12 && (v1 - v2).abs() < 1e-12);
        }
    }

    struct Parabola;

    impl Objective<f64> for Parabola {
        fn n_params(&self) -> usize {
            1
        }
        fn evaluate(&self, t: &[f64]) -> Result<Evaluation<f64>, OptError> {
            Ok(Evaluation { energy: (t[0] - 0.3).powi(2), variance: None })
        }
    }

    #[test]
    fn bayes_opt_finds_parabola_minimum() {
        let p = Parabola;
        let h = ObjectiveHandle::with_bounds(&p, vec![(-1.0, 1.0)]);
        let tr = bayes_opt(&h, &[vec![-0.8], vec![0.9]], &BoOptions::new(1e-8, 30, 3)).unwrap();
        assert!((tr.best_params[0] - 0.3).abs() < 1e-2);
        assert_eq!(h.evaluations(), 32);
        assert_eq!(tr.rows.len(), 32);
        let again = bayes_opt(&ObjectiveHandle::with_bounds(&p, vec![(-1.0, 1.0)]), &[vec![-0.8], vec![0.9]], &BoOptions::new(1e-8, 30, 3)).unwrap();
        assert_eq!(tr.rows, again.rows);
    }

    #[test]
    fn golden_section_quadratic() {
        let (x, _) = golden_section(&|t| (t - 1.234).powi(2), -3.0, 4.0, 1e-9);
        assert!((x - 1.234).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn posterior_variance_nonnegative(xs in proptest::collection::vec(-2.0f64..2.0, 2..8), q in -3.0f64..3.0) {
            let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
            let zs: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
            if let Ok(m) = gp_fit(&pts, &zs, &vec![0.0; pts.len()], 1e-6, &LengthScales::Fixed(vec![0.6])) {
                prop_assert!(gp_posterior(&m, &[q]).1 >= 0.0);
            }
        }

        #[test]
        fn backtracking_monotone_random_start(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let h = trunc8(0.6);
            let circ = real_two_qubit_ansatz::<f64>();
            let obj = CircuitObjective { circuit: &circ, hamiltonian: &h, initial: StateVector::basis(4, 0) };
            let handle = ObjectiveHandle::new(&obj);
            let tr = gradient_descent(&handle, &[a, b, c], &GdOptions::new(0.5, StepMode::Backtracking, 30), |_| false).unwrap();
            prop_assert!(tr.energies().windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
