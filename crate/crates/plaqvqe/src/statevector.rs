//! Dense state-vector simulation of parameterized circuits, either on a qubit
//! register or directly on a projected physical basis.

use std::fmt;
use std::io::{BufRead, Write};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoding::GroupedHamiltonian;
use crate::hamiltonian::SparseHamiltonian;
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("input state not normalized (norm {norm})")]
    Unnormalized { norm: f64 },
    #[error("expected {expected} parameters, found {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("gate {gate}: {reason}")]
    InvalidGate { gate: usize, reason: String },
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Hilbert space a circuit acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    /// `n` qubits, qubit 0 the most significant bit.
    Qubits(usize),
    /// Explicit basis of the given dimension.
    Basis(usize),
}

impl Space {
    pub fn dim(self) -> usize {
        match self {
            Space::Qubits(n) => 1 << n,
            Space::Basis(d) => d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GateKind {
    H,
    X,
    Cnot,
    Rx,
    Ry,
    Rz,
    /// Givens rotations in one or more disjoint planes `(i, j)`, one shared angle.
    Plane,
}

impl GateKind {
    fn name(self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Cnot => "cnot",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Rz => "rz",
            GateKind::Plane => "plane",
        }
    }

    fn parse(s: &str) -> Option<GateKind> {
        Some(match s {
            "h" => GateKind::H,
            "x" => GateKind::X,
            "cnot" => GateKind::Cnot,
            "rx" => GateKind::Rx,
            "ry" => GateKind::Ry,
            "rz" => GateKind::Rz,
            "plane" => GateKind::Plane,
            _ => return None,
        })
    }

    pub fn parameterized(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Plane)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Angle<T> {
    Slot(usize),
    Fixed(T),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gate<T> {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub angle: Option<Angle<T>>,
}

impl<T: Real> Gate<T> {
    pub fn h(q: usize) -> Self {
        Gate { kind: GateKind::H, targets: vec![q], angle: None }
    }

    pub fn x(q: usize) -> Self {
        Gate { kind: GateKind::X, targets: vec![q], angle: None }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate { kind: GateKind::Cnot, targets: vec![control, target], angle: None }
    }

    pub fn rotation(kind: GateKind, q: usize, angle: Angle<T>) -> Self {
        Gate { kind, targets: vec![q], angle: Some(angle) }
    }

    pub fn plane(i: usize, j: usize, angle: Angle<T>) -> Self {
        Gate { kind: GateKind::Plane, targets: vec![i, j], angle: Some(angle) }
    }

    /// Simultaneous rotation in several disjoint planes.
    pub fn planes(pairs: &[(usize, usize)], angle: Angle<T>) -> Self {
        Gate { kind: GateKind::Plane, targets: pairs.iter().flat_map(|&(i, j)| [i, j]).collect(), angle: Some(angle) }
    }

    pub fn plane_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets.chunks_exact(2).map(|c| (c[0], c[1]))
    }
}

/// Ordered gate list with parameter slots `0..n_params`.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit<T> {
    space: Space,
    gates: Vec<Gate<T>>,
    n_params: usize,
}

impl<T: Real> Circuit<T> {
    pub fn new(space: Space) -> Self {
        Circuit { space, gates: Vec::new(), n_params: 0 }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn gates(&self) -> &[Gate<T>] {
        &self.gates
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Allocates a fresh parameter slot.
    pub fn new_param(&mut self) -> Angle<T> {
        self.n_params += 1;
        Angle::Slot(self.n_params - 1)
    }

    pub fn push(&mut self, gate: Gate<T>) -> Result<(), StateError> {
        self.check_gate(self.gates.len(), &gate)?;
        if let Some(Angle::Slot(k)) = gate.angle {
            self.n_params = self.n_params.max(k + 1);
        }
        self.gates.push(gate);
        Ok(())
    }

    /// Appends `other` with its parameter slots shifted past ours.
    pub fn append(&mut self, other: &Circuit<T>) -> Result<(), StateError> {
        if other.space != self.space {
            return Err(StateError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let off = self.n_params;
        for g in &other.gates {
            let mut g = g.clone();
            if let Some(Angle::Slot(k)) = g.angle {
                g.angle = Some(Angle::Slot(k + off));
            }
            self.gates.push(g);
        }
        self.n_params = off + other.n_params;
        Ok(())
    }

    fn check_gate(&self, idx: usize, g: &Gate<T>) -> Result<(), StateError> {
        let bad = |reason: &str| Err(StateError::InvalidGate { gate: idx, reason: reason.to_string() });
        if g.kind.parameterized() != g.angle.is_some() {
            return bad("angle presence does not match gate kind");
        }
        match (g.kind, self.space) {
            (GateKind::Plane, s) => {
                if g.targets.is_empty() || g.targets.len() % 2 != 0 {
                    return bad("plane rotation needs index pairs");
                }
                let mut seen = std::collections::HashSet::new();
                for &t in &g.targets {
                    if t >= s.dim() {
                        return bad("plane index out of range");
                    }
                    if !seen.insert(t) {
                        return bad("planes must be disjoint");
                    }
                }
            }
            (_, Space::Basis(_)) => return bad("qubit gate on a non-qubit space"),
            (kind, Space::Qubits(n)) => {
                let arity = if kind == GateKind::Cnot { 2 } else { 1 };
                if g.targets.len() != arity || g.targets.iter().any(|&t| t >= n) {
                    return bad("qubit target out of range");
                }
                if arity == 2 && g.targets[0] == g.targets[1] {
                    return bad("control equals target");
                }
            }
        }
        Ok(())
    }

    fn angle_of(&self, g: &Gate<T>, theta: &[T]) -> T {
        match g.angle {
            Some(Angle::Slot(k)) => theta[k],
            Some(Angle::Fixed(a)) => a,
            None => T::zero(),
        }
    }

    /// Applies the circuit; `offset = Some((gate, δ))` adds `δ` to one gate's angle.
    pub fn apply_with_offset(&self, theta: &[T], psi: &mut StateVector<T>, offset: Option<(usize, T)>) -> Result<(), StateError> {
        if theta.len() != self.n_params {
            return Err(StateError::ParameterCount { expected: self.n_params, found: theta.len() });
        }
        if psi.dim() != self.dim() {
            return Err(StateError::DimensionMismatch { expected: self.dim(), found: psi.dim() });
        }
        for (gi, g) in self.gates.iter().enumerate() {
            let mut a = self.angle_of(g, theta);
            if let Some((k, d)) = offset {
                if k == gi {
                    a += d;
                }
            }
            apply_gate(self.space, g, a, &mut psi.amps);
        }
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()>
    where
        T: fmt::Debug,
    {
        match self.space {
            Space::Qubits(n) => writeln!(w, "CIRCUIT qubits {} params {}", n, self.n_params)?,
            Space::Basis(d) => writeln!(w, "CIRCUIT basis {} params {}", d, self.n_params)?,
        }
        for g in &self.gates {
            write!(w, "GATE {}", g.kind.name())?;
            for t in &g.targets {
                write!(w, " {t}")?;
            }
            match g.angle {
                Some(Angle::Slot(k)) => write!(w, " p{k}")?,
                Some(Angle::Fixed(a)) => write!(w, " {:?}", to_f64(a))?,
                None => {}
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, StateError> {
        let perr = |line: usize, reason: &str| StateError::Parse { line, reason: reason.to_string() };
        let mut circuit: Option<Circuit<T>> = None;
        let mut declared = 0;
        for (ln, line) in r.lines().enumerate() {
            let line = line.map_err(|e| perr(ln + 1, &e.to_string()))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            match (toks[0], &mut circuit) {
                ("CIRCUIT", None) => {
                    if toks.len() != 5 || toks[3] != "params" {
                        return Err(perr(ln + 1, "bad header"));
                    }
                    let size: usize = toks[2].parse().map_err(|_| perr(ln + 1, "bad size"))?;
                    declared = toks[4].parse().map_err(|_| perr(ln + 1, "bad parameter count"))?;
                    let space = match toks[1] {
                        "qubits" => Space::Qubits(size),
                        "basis" => Space::Basis(size),
                        _ => return Err(perr(ln + 1, "unknown space")),
                    };
                    circuit = Some(Circuit::new(space));
                }
                ("GATE", Some(c)) => {
                    let kind = toks.get(1).and_then(|k| GateKind::parse(k)).ok_or_else(|| perr(ln + 1, "unknown gate"))?;
                    let mut rest = &toks[2..];
                    let mut angle = None;
                    if kind.parameterized() {
                        let (last, head) = rest.split_last().ok_or_else(|| perr(ln + 1, "missing angle"))?;
                        angle = Some(if let Some(k) = last.strip_prefix('p') {
                            Angle::Slot(k.parse().map_err(|_| perr(ln + 1, "bad slot"))?)
                        } else {
                            Angle::Fixed(lit(last.parse::<f64>().map_err(|_| perr(ln + 1, "bad angle"))?))
                        });
                        rest = head;
                    }
                    let targets = rest
                        .iter()
                        .map(|t| t.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| perr(ln + 1, "bad target"))?;
                    c.push(Gate { kind, targets, angle }).map_err(|e| perr(ln + 1, &e.to_string()))?;
                }
                _ => return Err(perr(ln + 1, "unexpected line")),
            }
        }
        let mut c = circuit.ok_or_else(|| perr(0, "missing header"))?;
        if c.n_params > declared {
            return Err(perr(0, "slot exceeds declared parameter count"));
        }
        c.n_params = declared;
        Ok(c)
    }
}

fn apply_gate<T: Real>(space: Space, g: &Gate<T>, a: T, amps: &mut [Complex<T>]) {
    let (c, s) = (a.cos(), a.sin());
    match g.kind {
        GateKind::Plane => {
            for (i, j) in g.plane_pairs() {
                let (x, y) = (amps[i], amps[j]);
                amps[i] = x * c - y * s;
                amps[j] = x * s + y * c;
            }
        }
        kind => {
            let n = match space {
                Space::Qubits(n) => n,
                Space::Basis(_) => unreachable!("checked at push"),
            };
            let bit = |q: usize| 1usize << (n - 1 - q);
            if kind == GateKind::Cnot {
                let (cb, tb) = (bit(g.targets[0]), bit(g.targets[1]));
                for k in 0..amps.len() {
                    if k & cb != 0 && k & tb == 0 {
                        amps.swap(k, k | tb);
                    }
                }
                return;
            }
            let b = bit(g.targets[0]);
            let zero = T::zero();
            let r = lit::<T>(std::f64::consts::FRAC_1_SQRT_2);
            // [[m00, m01], [m10, m11]]
            let m: [Complex<T>; 4] = match kind {
                GateKind::H => [Complex::new(r, zero), Complex::new(r, zero), Complex::new(r, zero), Complex::new(-r, zero)],
                GateKind::X => [Complex::new(zero, zero), Complex::new(T::one(), zero), Complex::new(T::one(), zero), Complex::new(zero, zero)],
                GateKind::Rx => [Complex::new(c, zero), Complex::new(zero, -s), Complex::new(zero, -s), Complex::new(c, zero)],
                GateKind::Ry => [Complex::new(c, zero), Complex::new(-s, zero), Complex::new(s, zero), Complex::new(c, zero)],
                GateKind::Rz => [Complex::new(c, -s), Complex::new(zero, zero), Complex::new(zero, zero), Complex::new(c, s)],
                GateKind::Cnot | GateKind::Plane => unreachable!(),
            };
            for k in 0..amps.len() {
                if k & b == 0 {
                    let (x, y) = (amps[k], amps[k | b]);
                    amps[k] = m[0] * x + m[1] * y;
                    amps[k | b] = m[2] * x + m[3] * y;
                }
            }
        }
    }
}

/// Dense complex amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    amps: Vec<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    /// Basis state `e_k`.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut amps = vec![Complex::new(T::zero(), T::zero()); dim];
        amps[k] = Complex::new(T::one(), T::zero());
        StateVector { amps }
    }

    /// Normalized real vector; fails on a zero vector.
    pub fn from_real(x: &[T]) -> Result<Self, StateError> {
        let n = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        if n == T::zero() {
            return Err(StateError::Unnormalized { norm: 0.0 });
        }
        Ok(StateVector { amps: x.iter().map(|&v| Complex::new(v / n, T::zero())).collect() })
    }

    /// Wraps amplitudes, checking the norm.
    pub fn from_amplitudes(amps: Vec<Complex<T>>) -> Result<Self, StateError> {
        let s = StateVector { amps };
        let n = to_f64(s.norm());
        if (n - 1.0).abs() > 1e-10 {
            return Err(StateError::Unnormalized { norm: n });
        }
        Ok(s)
    }

    /// Wraps amplitudes without a norm check.
    pub fn from_amplitudes_unchecked(amps: Vec<Complex<T>>) -> Self {
        StateVector { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn norm(&self) -> T {
        self.amps.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt()
    }

    pub fn real_parts(&self) -> Vec<T> {
        self.amps.iter().map(|z| z.re).collect()
    }

    pub fn probabilities(&self) -> Vec<T> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector<T>) -> T {
        let ip = self.amps.iter().zip(&other.amps).fold(Complex::new(T::zero(), T::zero()), |a, (x, y)| a + x.conj() * y);
        ip.norm_sqr()
    }
}

/// Runs `circuit` on a copy of `psi0`.
pub fn apply<T: Real>(circuit: &Circuit<T>, theta: &[T], psi0: &StateVector<T>) -> Result<StateVector<T>, StateError> {
    let n = to_f64(psi0.norm());
    if (n - 1.0).abs() > 1e-10 {
        return Err(StateError::Unnormalized { norm: n });
    }
    let mut psi = psi0.clone();
    circuit.apply_with_offset(theta, &mut psi, None)?;
    Ok(psi)
}

/// `⟨ψ|H|ψ⟩` for a real symmetric `H`.
pub fn expectation<T: Real>(h: &SparseHamiltonian<T>, psi: &StateVector<T>) -> Result<T, StateError> {
    if h.dim() != psi.dim() {
        return Err(StateError::DimensionMismatch { expected: h.dim(), found: psi.dim() });
    }
    let re: Vec<T> = psi.amps.iter().map(|z| z.re).collect();
    let im: Vec<T> = psi.amps.iter().map(|z| z.im).collect();
    Ok(h.expectation(&re) + h.expectation(&im))
}

/// Shot-noise energy estimate: each group is rotated to its measurement basis and
/// sampled `shots` times. Returns `(estimate, standard error)`.
pub fn sample_energy<T: Real>(
    groups: &GroupedHamiltonian<T>,
    psi: &StateVector<T>,
    shots: usize,
    seed: u64,
) -> Result<(T, T), StateError> {
    let shots = shots.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut est = groups.identity;
    let mut var = T::zero();
    for g in &groups.groups {
        let rotated = apply(&g.circuit, &[], psi)?;
        let probs: Vec<f64> = rotated.probabilities().iter().map(|&p| to_f64(p)).collect();
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        let values = g.eigenvalues();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..shots {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
            let v = to_f64(values[k]);
            s1 += v;
            s2 += v * v;
        }
        let n = shots as f64;
        let mean = s1 / n;
        let sample_var = if shots > 1 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        est += lit(mean);
        var += lit(sample_var / n);
    }
    Ok((est, var.sqrt()))
}
