//! Variational state families: hyperspherical coordinates, two-qubit circuits,
//! the plaquette-chain Givens rotation set, domain circuits and stitched ansätze.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::hamiltonian::{Boundary, ChainBasis, LinkId, LinkLabel};
use crate::scalar::Real;
use crate::statevector::{apply, Angle, Circuit, Gate, GateKind, Space, StateError, StateVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnsatzError {
    #[error("plaquette {index} out of range for a chain of {length}")]
    PlaquetteOutOfRange { index: usize, length: usize },
    #[error("{rotation} has no matching configuration at plaquette {plaquette}")]
    NoMatch { rotation: RotationType, plaquette: usize },
    #[error("domains overlap or leave the chain")]
    BadDomains,
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error("domain length must be at least 1")]
    InvalidDomain,
    #[error("unknown rotation label {0:?}")]
    BadLabel(String),
    #[error(transparent)]
    Circuit(#[from] StateError),
}

/// Real amplitudes `a₁ = cosθ₁`, `a_k = cosθ_k·Π_{j<k} sinθ_j`, `a_n = Π sinθ_j`.
pub fn hyperspherical_state<T: Real>(angles: &[T]) -> Vec<T> {
    let n = angles.len() + 1;
    let mut a = Vec::with_capacity(n);
    let mut prod = T::one();
    for &t in angles {
        a.push(prod * t.cos());
        prod *= t.sin();
    }
    a.push(prod);
    a
}

/// Inverse of [`hyperspherical_state`] for a unit vector; angles lie in `[0, π]`.
pub fn hyperspherical_angles<T: Real>(a: &[T]) -> Vec<T> {
    let n = a.len();
    let mut tail = vec![T::zero(); n + 1];
    for k in (0..n).rev() {
        tail[k] = tail[k + 1] + a[k] * a[k];
    }
    (0..n.saturating_sub(1))
        .map(|k| {
            let t = if k + 2 == n { a[k + 1] } else { tail[k + 1].sqrt() };
            if k + 2 == n && t < T::zero() {
                // last angle in [0, π] only covers a non-negative final amplitude
                (-t).atan2(a[k])
            } else {
                t.atan2(a[k])
            }
        })
        .collect()
}

/// The same map as a chain of Givens rotations `(k, k+1)` acting on `e₀`, so each
/// angle enters through a full-angle rotation.
pub fn hyperspherical_circuit<T: Real>(n: usize) -> Result<Circuit<T>, AnsatzError> {
    if n == 0 {
        return Err(AnsatzError::InvalidDimension);
    }
    let mut c = Circuit::new(Space::Basis(n));
    for k in 0..n - 1 {
        let a = c.new_param();
        c.push(Gate::plane(k, k + 1, a))?;
    }
    Ok(c)
}

/// `Ry(θ₀)` on qubit 0, `Ry(θ₁)` on qubit 1, CNOT(0→1), `Ry(θ₂)` on qubit 1.
pub fn real_two_qubit_ansatz<T: Real>() -> Circuit<T> {
    let mut c = Circuit::new(Space::Qubits(2));
    let gates = [
        Gate::rotation(GateKind::Ry, 0, Angle::Slot(0)),
        Gate::rotation(GateKind::Ry, 1, Angle::Slot(1)),
        Gate::cnot(0, 1),
        Gate::rotation(GateKind::Ry, 1, Angle::Slot(2)),
    ];
    for g in gates {
        c.push(g).expect("valid gate");
    }
    c
}

/// CP-symmetric two-qubit circuit: one shared `Ry` on both qubits, then a rotation
/// between `|00⟩` and `|11⟩`. Keeps the `|01⟩` and `|10⟩` amplitudes equal.
pub fn cp_tied_two_qubit_ansatz<T: Real>() -> Circuit<T> {
    let mut c = Circuit::new(Space::Qubits(2));
    let gates = [
        Gate::rotation(GateKind::Ry, 0, Angle::Slot(0)),
        Gate::rotation(GateKind::Ry, 1, Angle::Slot(0)),
        Gate::plane(0, 3, Angle::Slot(1)),
    ];
    for g in gates {
        c.push(g).expect("valid gate");
    }
    c
}

/// Unnormalized-coordinate ansatz `ψ = x/‖x‖` used for gradient-descent scaling runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProjectiveAnsatz {
    pub dim: usize,
}

impl ProjectiveAnsatz {
    pub fn state<T: Real>(&self, x: &[T]) -> Vec<T> {
        let n = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        x.iter().map(|&v| v / n).collect()
    }
}

/// Named local rotations on a plaquette chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseRotation {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
}

impl BaseRotation {
    pub const ALL: [BaseRotation; 7] = [BaseRotation::R1, BaseRotation::R2, BaseRotation::R3, BaseRotation::R4, BaseRotation::R5, BaseRotation::R6, BaseRotation::R7];

    /// Window labels `top(j−1, j, j+1) / vertical(j, j+1) / bottom(j−1, j, j+1)`, `b` for 3b.
    fn patterns(self) -> (&'static str, &'static str) {
        match self {
            BaseRotation::R1 => ("111/11/111", "131/3b/1b1"),
            BaseRotation::R2 => ("311/b1/b11", "331/1b/bb1"),
            BaseRotation::R3 => ("311/b1/b11", "3b1/33/b31"),
            BaseRotation::R4 => ("113/13/11b", "133/31/1bb"),
            BaseRotation::R5 => ("113/13/11b", "1b3/bb/13b"),
            BaseRotation::R6 => ("333/11/bbb", "313/b3/b1b"),
            BaseRotation::R7 => ("3bb/31/b33", "31b/bb/b13"),
        }
    }
}

/// A base rotation or its CP conjugate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RotationType {
    pub base: BaseRotation,
    pub conjugate: bool,
}

impl RotationType {
    pub fn new(base: BaseRotation, conjugate: bool) -> Self {
        RotationType { base, conjugate }
    }

    /// All fourteen rotations: each base type followed by its conjugate.
    pub fn all() -> Vec<RotationType> {
        BaseRotation::ALL.iter().flat_map(|&b| [RotationType::new(b, false), RotationType::new(b, true)]).collect()
    }

    /// `(State 1, State 2)` windows in the order of [`WINDOW`].
    pub fn windows(self) -> ([LinkLabel; 8], [LinkLabel; 8]) {
        let (a, b) = self.base.patterns();
        let parse = |s: &str| {
            let mut out = [LinkLabel::One; 8];
            for (k, ch) in s.chars().filter(|c| *c != '/').enumerate() {
                let l = match ch {
                    '1' => LinkLabel::One,
                    '3' => LinkLabel::Three,
                    'b' => LinkLabel::ThreeBar,
                    _ => unreachable!("static pattern"),
                };
                out[k] = if self.conjugate { l.conjugate() } else { l };
            }
            out
        };
        (parse(a), parse(b))
    }
}

impl fmt::Display for RotationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.base, if self.conjugate { "cp" } else { "" })
    }
}

impl FromStr for RotationType {
    type Err = AnsatzError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, conjugate) = match s.strip_suffix("cp") {
            Some(h) => (h, true),
            None => (s, false),
        };
        let base = BaseRotation::ALL
            .into_iter()
            .find(|b| format!("{b:?}") == head)
            .ok_or_else(|| AnsatzError::BadLabel(s.to_string()))?;
        Ok(RotationType { base, conjugate })
    }
}

/// Window positions relative to plaquette `j`: link kind and offset.
pub const WINDOW: [(char, isize); 8] =
    [('t', -1), ('t', 0), ('t', 1), ('v', 0), ('v', 1), ('b', -1), ('b', 0), ('b', 1)];

fn window_links(basis: &ChainBasis, j: usize) -> [Option<usize>; 8] {
    let g = basis.geometry();
    let periodic = g.boundary() == Boundary::Periodic;
    WINDOW.map(|(kind, off)| {
        let i = j as isize + off;
        let n = if kind == 'v' { g.n_vertical() } else { g.length() } as isize;
        let i = if periodic {
            i.rem_euclid(n)
        } else if i < 0 || i >= n {
            return None;
        } else {
            i
        };
        let id = match kind {
            't' => LinkId::Top(i as usize),
            'b' => LinkId::Bottom(i as usize),
            _ => LinkId::Vertical(i as usize),
        };
        g.link_index(id)
    })
}

/// Basis index pairs `(State 1, State 2)` of a rotation at plaquette `j`. Links outside an
/// open chain count as `1`; on short periodic chains a link seen twice must agree.
pub fn rotation_pairs(basis: &ChainBasis, rot: RotationType, j: usize) -> Result<Vec<(usize, usize)>, AnsatzError> {
    let length = basis.geometry().length();
    if j >= length {
        return Err(AnsatzError::PlaquetteOutOfRange { index: j, length });
    }
    let links = window_links(basis, j);
    let (s1, s2) = rot.windows();
    let mut pairs = Vec::new();
    'cfg: for (k, cfg) in basis.configs().iter().enumerate() {
        for (w, l) in links.iter().enumerate() {
            let have = l.map_or(LinkLabel::One, |x| cfg[x]);
            if have != s1[w] {
                continue 'cfg;
            }
        }
        let mut new = cfg.clone();
        let mut written = vec![false; cfg.len()];
        for (w, l) in links.iter().enumerate() {
            match *l {
                None if s2[w] != LinkLabel::One => continue 'cfg,
                None => {}
                Some(x) => {
                    if written[x] && new[x] != s2[w] {
                        continue 'cfg;
                    }
                    new[x] = s2[w];
                    written[x] = true;
                }
            }
        }
        if let Some(k2) = basis.index_of(&new) {
            pairs.push((k, k2));
        }
    }
    Ok(pairs)
}

/// One base rotation at plaquette `j` as a single gate with a shared angle;
/// positive angles move amplitude from State 1 to State 2.
pub fn plaquette_rotation<T: Real>(basis: &ChainBasis, rot: RotationType, j: usize, angle: Angle<T>) -> Result<Gate<T>, AnsatzError> {
    let pairs = rotation_pairs(basis, rot, j)?;
    if pairs.is_empty() {
        return Err(AnsatzError::NoMatch { rotation: rot, plaquette: j });
    }
    Ok(Gate::planes(&pairs, angle))
}

/// One base rotation placed on a plaquette with its parameter slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RotationOp {
    pub rotation: RotationType,
    pub plaquette: usize,
    pub param: usize,
}

/// Ordered rotation list independent of any particular basis; turns into a circuit on a
/// chain basis or into MPS gates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RotationProgram {
    pub ops: Vec<RotationOp>,
    pub n_params: usize,
}

impl RotationProgram {
    /// Adds a rotation with a fresh parameter when it has a matching pair on `basis`.
    fn push(&mut self, basis: &ChainBasis, rotation: RotationType, plaquette: usize) -> Result<(), AnsatzError> {
        if !rotation_pairs(basis, rotation, plaquette)?.is_empty() {
            self.ops.push(RotationOp { rotation, plaquette, param: self.n_params });
            self.n_params += 1;
        }
        Ok(())
    }

    fn push_pair(&mut self, basis: &ChainBasis, base: BaseRotation, j: usize) -> Result<(), AnsatzError> {
        self.push(basis, RotationType::new(base, false), j)?;
        self.push(basis, RotationType::new(base, true), j)
    }

    /// Appends `other` with its parameters renumbered after ours.
    pub fn append(&mut self, other: &RotationProgram) {
        let off = self.n_params;
        self.ops.extend(other.ops.iter().map(|o| RotationOp { param: o.param + off, ..*o }));
        self.n_params += other.n_params;
    }

    /// Same program moved `offset` plaquettes to the right.
    pub fn shifted(&self, offset: usize) -> RotationProgram {
        RotationProgram {
            ops: self.ops.iter().map(|o| RotationOp { plaquette: o.plaquette + offset, ..*o }).collect(),
            n_params: self.n_params,
        }
    }

    pub fn circuit<T: Real>(&self, basis: &ChainBasis) -> Result<Circuit<T>, AnsatzError> {
        let mut c = Circuit::new(Space::Basis(basis.dim()));
        for _ in 0..self.n_params {
            c.new_param();
        }
        for o in &self.ops {
            c.push(plaquette_rotation(basis, o.rotation, o.plaquette, Angle::Slot(o.param))?)?;
        }
        Ok(c)
    }
}

/// Contiguous block of plaquettes `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Domain {
    pub start: usize,
    pub len: usize,
}

impl Domain {
    pub fn new(start: usize, len: usize) -> Self {
        Domain { start, len }
    }

    pub fn plaquettes(self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Recursive vacuum program for a domain. Length 1: excite the plaquette with R1 and its
/// conjugate. Length 2: excite both plaquettes, then R3 at the right plaquette and R4 at the
/// left one. Longer: the program for the first `len − 1` plaquettes, then excite the new
/// right plaquette, stretch it leftward over the previous domain with R4/R5, and break loops
/// in the interior with R6/R7. Every rotation comes with its conjugate and an own angle;
/// rotations without a matching configuration on `basis` are dropped.
pub fn domain_program(basis: &ChainBasis, domain: Domain) -> Result<RotationProgram, AnsatzError> {
    let length = basis.geometry().length();
    if domain.len == 0 {
        return Err(AnsatzError::InvalidDomain);
    }
    if domain.start + domain.len > length {
        return Err(AnsatzError::PlaquetteOutOfRange { index: domain.start + domain.len - 1, length });
    }
    let mut p = RotationProgram::default();
    domain_into(&mut p, basis, domain)?;
    Ok(p)
}

fn domain_into(p: &mut RotationProgram, basis: &ChainBasis, d: Domain) -> Result<(), AnsatzError> {
    let a = d.start;
    match d.len {
        1 => p.push_pair(basis, BaseRotation::R1, a),
        2 => {
            p.push_pair(basis, BaseRotation::R1, a)?;
            p.push_pair(basis, BaseRotation::R1, a + 1)?;
            p.push_pair(basis, BaseRotation::R3, a + 1)?;
            p.push_pair(basis, BaseRotation::R4, a)
        }
        l => {
            domain_into(p, basis, Domain::new(a, l - 1))?;
            let last = a + l - 1;
            p.push_pair(basis, BaseRotation::R1, last)?;
            for j in (a..last).rev() {
                p.push_pair(basis, BaseRotation::R4, j)?;
                p.push_pair(basis, BaseRotation::R5, j)?;
            }
            for j in a + 1..last {
                p.push_pair(basis, BaseRotation::R6, j)?;
                p.push_pair(basis, BaseRotation::R7, j)?;
            }
            Ok(())
        }
    }
}

pub fn build_domain_circuit<T: Real>(basis: &ChainBasis, domain: Domain) -> Result<Circuit<T>, AnsatzError> {
    domain_program(basis, domain)?.circuit(basis)
}

/// All fourteen rotations on each listed plaquette, each with a free angle.
pub fn stitch_program(basis: &ChainBasis, plaquettes: &[usize]) -> Result<RotationProgram, AnsatzError> {
    let mut p = RotationProgram::default();
    for &j in plaquettes {
        for rot in RotationType::all() {
            p.push(basis, rot, j)?;
        }
    }
    Ok(p)
}

pub fn stitch_layer<T: Real>(basis: &ChainBasis, plaquettes: &[usize]) -> Result<Circuit<T>, AnsatzError> {
    stitch_program(basis, plaquettes)?.circuit(basis)
}

/// `C = D(θ₁)` for one layer, `S(θ₂)·D(θ₁)` for two, `D(θ₃)·S(θ₂)·D(θ₁)` for three, and so on
/// alternating. Parameter blocks are independent and concatenated in application order.
#[derive(Clone, Debug, PartialEq)]
pub struct StitchedAnsatz<T> {
    pub circuit: Circuit<T>,
    pub program: RotationProgram,
    /// Parameter index range of each layer.
    pub blocks: Vec<std::ops::Range<usize>>,
    /// Plaquettes between domains, where the stitch layers act.
    pub junctions: Vec<usize>,
}

pub fn stitched_ansatz<T: Real>(basis: &ChainBasis, domains: &[Domain], layers: usize) -> Result<StitchedAnsatz<T>, AnsatzError> {
    let length = basis.geometry().length();
    let mut covered = vec![false; length];
    for d in domains {
        if d.len == 0 || d.start + d.len > length {
            return Err(AnsatzError::BadDomains);
        }
        for j in d.plaquettes() {
            if covered[j] {
                return Err(AnsatzError::BadDomains);
            }
            covered[j] = true;
        }
    }
    let junctions: Vec<usize> = (0..length).filter(|&j| !covered[j]).collect();
    let mut domain_layer = RotationProgram::default();
    for &d in domains {
        domain_layer.append(&domain_program(basis, d)?);
    }
    let stitch = stitch_program(basis, &junctions)?;
    let mut program = RotationProgram::default();
    let mut blocks = Vec::new();
    for layer in 0..layers.max(1) {
        let start = program.n_params;
        program.append(if layer % 2 == 0 { &domain_layer } else { &stitch });
        blocks.push(start..program.n_params);
    }
    Ok(StitchedAnsatz { circuit: program.circuit(basis)?, program, blocks, junctions })
}

/// Coordinate ascent on `|⟨target|U(θ)|ψ₀⟩|` for real circuits. With every slot in a single
/// plane rotation the amplitude is `γ + α·cosθ + β·sinθ` in each angle, so every update is
/// the exact one-dimensional optimum. Stops after `max_passes` or when a pass gains less than
/// `tol`; returns the angles and the squared overlap.
pub fn maximize_overlap(
    circuit: &Circuit<f64>,
    initial: &StateVector<f64>,
    target: &[f64],
    theta0: &[f64],
    max_passes: usize,
    tol: f64,
) -> Result<(Vec<f64>, f64), AnsatzError> {
    let mut theta = theta0.to_vec();
    let amp = |t: &[f64]| -> Result<f64, AnsatzError> {
        let r = apply(circuit, t, initial)?.real_parts();
        Ok(r.iter().zip(target).map(|(x, y)| x * y).sum())
    };
    let mut best = amp(&theta)?.abs();
    for _ in 0..max_passes {
        let before = best;
        for k in 0..theta.len() {
            let mut at = |x: f64| {
                theta[k] = x;
                amp(&theta)
            };
            let (d0, d1, d2, d3) = (at(0.0)?, at(FRAC_PI_2)?, at(PI)?, at(-FRAC_PI_2)?);
            let (gamma, alpha, beta) = ((d0 + d2) / 2.0, (d0 - d2) / 2.0, (d1 - d3) / 2.0);
            let r = alpha.hypot(beta);
            let phi = beta.atan2(alpha);
            theta[k] = if (gamma + r).abs() >= (gamma - r).abs() { phi } else { (phi + 2.0 * PI).rem_euclid(2.0 * PI) - PI };
            best = (gamma + r).abs().max((gamma - r).abs());
        }
        if best - before < tol {
            break;
        }
    }
    let a = amp(&theta)?;
    Ok((theta, a * a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_chain_hamiltonian, enumerate_gauss_basis};
    use crate::spectral::exact_ground;
    use crate::statevector::{apply, StateVector};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn vacuum(basis: &ChainBasis) -> StateVector<f64> {
        StateVector::basis(basis.dim(), basis.electric_vacuum())
    }

    #[test]
    fn hyperspherical_edges() {
        let z = hyperspherical_state(&[0.0f64; 9]);
        assert_eq!(z[0], 1.0);
        assert!(z[1..].iter().all(|&v| v == 0.0));
        let e1 = hyperspherical_state(&[FRAC_PI_2]);
        assert!(e1[0].abs() < 1e-16 && (e1[1] - 1.0).abs() < 1e-16);
    }

    #[test]
    fn hyperspherical_circuit_matches_closed_form() {
        let angles = [0.3, 1.2, 2.9, 0.7, 0.01];
        let c = hyperspherical_circuit::<f64>(6).unwrap();
        let out = apply(&c, &angles, &StateVector::basis(6, 0)).unwrap();
        for (a, b) in out.real_parts().iter().zip(hyperspherical_state(&angles)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hyperspherical_round_trip() {
        let a = hyperspherical_state(&[0.4f64, 2.1, 0.9, 1.3]);
        let back = hyperspherical_state(&hyperspherical_angles(&a));
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn real_two_qubit_zero_is_ground_register() {
        let c = real_two_qubit_ansatz::<f64>();
        let out = apply(&c, &[0.0; 3], &StateVector::basis(4, 0)).unwrap();
        assert_eq!(out.real_parts(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cp_tied_keeps_triplet_amplitudes_equal() {
        let c = cp_tied_two_qubit_ansatz::<f64>();
        for (a, b) in [(0.3, 1.1), (-2.0, 0.4), (1.5, -3.0)] {
            let out = apply(&c, &[a, b], &StateVector::basis(4, 0)).unwrap();
            let r = out.real_parts();
            assert_eq!(r[1], r[2]);
        }
    }

    #[test]
    fn rotation_labels_round_trip() {
        for r in RotationType::all() {
            assert_eq!(r.to_string().parse::<RotationType>().unwrap(), r);
        }
        assert!("R8".parse::<RotationType>().is_err());
    }

    #[test]
    fn r1_excites_a_single_loop() {
        let b = enumerate_gauss_basis(3, Boundary::Open).unwrap();
        let g = plaquette_rotation(&b, RotationType::new(BaseRotation::R1, false), 1, Angle::Fixed(FRAC_PI_2)).unwrap();
        let mut c = Circuit::new(Space::Basis(b.dim()));
        c.push(g).unwrap();
        let out = apply(&c, &[], &vacuum(&b)).unwrap();
        let k = out.probabilities().iter().position(|&p| (p - 1.0).abs() < 1e-12).unwrap();
        let cfg = b.config(k);
        let lp = b.geometry().plaquette_links(1);
        for (x, l) in cfg.iter().enumerate() {
            assert_eq!(*l != LinkLabel::One, lp.contains(&x));
        }
        assert!((b.plaquette_element::<f64>(b.config(0), 1, true).unwrap().1.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_then_inverse_is_identity() {
        let b = enumerate_gauss_basis(3, Boundary::Open).unwrap();
        let mut c = Circuit::new(Space::Basis(b.dim()));
        let r = RotationType::new(BaseRotation::R1, false);
        c.push(plaquette_rotation(&b, r, 0, Angle::Fixed(0.7)).unwrap()).unwrap();
        c.push(plaquette_rotation(&b, r, 0, Angle::Fixed(-0.7)).unwrap()).unwrap();
        let out = apply(&c, &[], &vacuum(&b)).unwrap();
        assert!((out.fidelity(&vacuum(&b)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn unmatched_rotation_leaves_state() {
        let b = enumerate_gauss_basis(3, Boundary::Open).unwrap();
        let g = plaquette_rotation(&b, RotationType::new(BaseRotation::R6, false), 1, Angle::Fixed(1.0)).unwrap();
        let mut c = Circuit::new(Space::Basis(b.dim()));
        c.push(g).unwrap();
        let out = apply(&c, &[], &vacuum(&b)).unwrap();
        assert_eq!(out, vacuum(&b));
    }

    #[test]
    fn every_rotation_pair_is_plaquette_connected() {
        for (l, bd) in [(3, Boundary::Open), (5, Boundary::Open), (3, Boundary::Periodic), (2, Boundary::Periodic)] {
            let b = enumerate_gauss_basis(l, bd).unwrap();
            for j in 0..l {
                let mut connected = std::collections::HashSet::new();
                for (r, c, _) in b.plaquette_matrix::<f64>(j) {
                    connected.insert((r.min(c), r.max(c)));
                }
                for rot in RotationType::all() {
                    for (x, y) in rotation_pairs(&b, rot, j).unwrap() {
                        assert!(connected.contains(&(x.min(y), x.max(y))), "{rot} at {j} L={l} {bd:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn every_base_rotation_matches_in_the_bulk() {
        let b = enumerate_gauss_basis(5, Boundary::Open).unwrap();
        for rot in RotationType::all() {
            assert!(!rotation_pairs(&b, rot, 2).unwrap().is_empty(), "{rot}");
        }
    }

    #[test]
    fn rotations_preserve_gauss_law() {
        // Pairs are looked up in the Gauss basis, so an allowed partner is an index.
        let b = enumerate_gauss_basis(4, Boundary::Open).unwrap();
        for rot in RotationType::all() {
            for j in 0..4 {
                for (x, y) in rotation_pairs(&b, rot, j).unwrap() {
                    assert!(b.geometry().gauss_allowed(b.config(x)) && b.geometry().gauss_allowed(b.config(y)));
                }
            }
        }
    }

    #[test]
    fn cp_maps_rotation_to_conjugate() {
        let b = enumerate_gauss_basis(4, Boundary::Open).unwrap();
        let cp = b.cp_permutation();
        let permute = |x: &[f64]| {
            let mut y = vec![0.0; x.len()];
            for (i, &p) in cp.iter().enumerate() {
                y[p] = x[i];
            }
            y
        };
        let x: Vec<f64> = (0..b.dim()).map(|i| ((i * 31 % 17) as f64) - 8.0).collect();
        let psi = StateVector::from_real(&x).unwrap();
        for rot in RotationType::all() {
            let Ok(g) = plaquette_rotation(&b, rot, 1, Angle::Fixed(0.37)) else { continue };
            let conj = RotationType::new(rot.base, !rot.conjugate);
            let gc = plaquette_rotation(&b, conj, 1, Angle::Fixed(0.37)).unwrap();
            let mut c = Circuit::new(Space::Basis(b.dim()));
            c.push(g).unwrap();
            let mut cc = Circuit::new(Space::Basis(b.dim()));
            cc.push(gc).unwrap();
            let lhs = permute(&apply(&c, &[], &psi).unwrap().real_parts());
            let rhs = apply(&cc, &[], &StateVector::from_real(&permute(&x)).unwrap()).unwrap().real_parts();
            for (a, r) in lhs.iter().zip(&rhs) {
                assert!((a - r).abs() < 1e-12, "{rot}");
            }
        }
    }

    #[test]
    fn domain_circuit_support() {
        let b = enumerate_gauss_basis(5, Boundary::Open).unwrap();
        for (start, len) in [(0, 1), (2, 2), (1, 3), (0, 5)] {
            let c = build_domain_circuit::<f64>(&b, Domain::new(start, len)).unwrap();
            let theta: Vec<f64> = (0..c.n_params()).map(|k| 0.3 + 0.1 * k as f64).collect();
            let out = apply(&c, &theta, &vacuum(&b)).unwrap();
            let g = b.geometry();
            let mut inside = vec![false; g.n_links()];
            for j in start..start + len {
                for l in g.plaquette_links(j) {
                    inside[l] = true;
                }
            }
            for (k, p) in out.probabilities().iter().enumerate() {
                if *p > 1e-24 {
                    for (x, l) in b.config(k).iter().enumerate() {
                        assert!(inside[x] || *l == LinkLabel::One);
                    }
                }
            }
        }
    }

    fn best_overlap(b: &ChainBasis, c: &Circuit<f64>, target: &[f64]) -> f64 {
        maximize_overlap(c, &vacuum(b), target, &vec![0.0; c.n_params()], 300, 0.0).unwrap().1
    }

    #[test]
    fn small_domains_reach_exact_vacua() {
        let b1 = enumerate_gauss_basis(1, Boundary::Open).unwrap();
        let (_, v1) = exact_ground(&build_chain_hamiltonian(&b1, 0.9).unwrap()).unwrap();
        let c1 = build_domain_circuit::<f64>(&b1, Domain::new(0, 1)).unwrap();
        assert!(best_overlap(&b1, &c1, &v1) > 1.0 - 1e-10);
        let b2 = enumerate_gauss_basis(2, Boundary::Open).unwrap();
        let (_, v2) = exact_ground(&build_chain_hamiltonian(&b2, 0.9).unwrap()).unwrap();
        let c2 = build_domain_circuit::<f64>(&b2, Domain::new(0, 2)).unwrap();
        assert!(best_overlap(&b2, &c2, &v2) >= 0.999);
    }

    #[test]
    fn stitched_structure() {
        let b = enumerate_gauss_basis(5, Boundary::Open).unwrap();
        let doms = [Domain::new(0, 1), Domain::new(2, 1), Domain::new(4, 1)];
        let s = stitched_ansatz::<f64>(&b, &doms, 3).unwrap();
        assert_eq!(s.junctions, vec![1, 3]);
        assert_eq!(s.blocks.len(), 3);
        assert_eq!(s.blocks[0].len(), s.blocks[2].len());
        assert_eq!(s.blocks[2].end, s.circuit.n_params());
        let zero = vec![0.0; s.circuit.n_params()];
        assert_eq!(apply(&s.circuit, &zero, &vacuum(&b)).unwrap(), vacuum(&b));
        assert_eq!(stitched_ansatz::<f64>(&b, &[Domain::new(0, 2), Domain::new(1, 2)], 1), Err(AnsatzError::BadDomains));
    }

    proptest! {
        #[test]
        fn hyperspherical_unit_norm(angles in proptest::collection::vec(-PI..PI, 1..12)) {
            let a = hyperspherical_state(&angles);
            prop_assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn stitched_circuits_are_unitary(seed in 0u64..50) {
            let b = enumerate_gauss_basis(5, Boundary::Open).unwrap();
            let s = stitched_ansatz::<f64>(&b, &[Domain::new(0, 2), Domain::new(3, 2)], 3).unwrap();
            let theta: Vec<f64> = (0..s.circuit.n_params()).map(|k| ((seed as usize * 13 + k * 7) % 29) as f64 * 0.2 - 2.8).collect();
            let out = apply(&s.circuit, &theta, &vacuum(&b)).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-12);
        }
    }
}
