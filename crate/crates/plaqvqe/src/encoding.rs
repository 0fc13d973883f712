//! Binary register encoding of `|p,q⟩`, the ladder operator `B_n`, Pauli
//! expansions, and two-qubit measurement grouping.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex;
use thiserror::Error;

use crate::hamiltonian::SparseHamiltonian;
use crate::scalar::{lit, to_f64, Real};
use crate::statevector::{apply, Circuit, Gate, Space, StateVector};
use crate::su3::{casimir, Irrep};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodingError {
    #[error("register width must be at least 1")]
    InvalidWidth,
    #[error("expected a 4x4 operator, found dimension {0}")]
    NotTwoQubit(usize),
    #[error("ungroupable Pauli terms: {0:?}")]
    Ungroupable(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix<T: Real>(self) -> DMatrix<Complex<T>> {
        let (o, z) = (T::one(), T::zero());
        let c = |re: T, im: T| Complex::new(re, im);
        let e = match self {
            Pauli::I => [c(o, z), c(z, z), c(z, z), c(o, z)],
            Pauli::X => [c(z, z), c(o, z), c(o, z), c(z, z)],
            Pauli::Y => [c(z, z), c(z, -o), c(z, o), c(z, z)],
            Pauli::Z => [c(o, z), c(z, z), c(z, z), c(-o, z)],
        };
        DMatrix::from_row_slice(2, 2, &e)
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// `coefficient · P₀ ⊗ P₁ ⊗ …`, qubit 0 leftmost (most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTerm<T> {
    pub coefficient: Complex<T>,
    pub axes: Vec<Pauli>,
}

impl<T: Real> PauliTerm<T> {
    pub fn label(&self) -> String {
        self.axes.iter().map(|p| p.to_string()).collect()
    }

    pub fn matrix(&self) -> DMatrix<Complex<T>> {
        pauli_string(&self.axes) * self.coefficient
    }
}

pub fn kron<T: Real>(a: &DMatrix<Complex<T>>, b: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    a.kronecker(b)
}

pub fn pauli_string<T: Real>(axes: &[Pauli]) -> DMatrix<Complex<T>> {
    axes.iter().fold(DMatrix::identity(1, 1), |m, p| kron(&m, &p.matrix()))
}

/// Sum of terms as a dense matrix on `n` qubits.
pub fn terms_to_matrix<T: Real>(terms: &[PauliTerm<T>], n: usize) -> DMatrix<Complex<T>> {
    let d = 1 << n;
    terms.iter().fold(DMatrix::zeros(d, d), |m, t| m + t.matrix())
}

/// Pauli expansion via `Tr(P·M)/2ⁿ`, dropping coefficients below `1e-13`.
pub fn pauli_decompose<T: Real>(m: &DMatrix<Complex<T>>) -> Vec<PauliTerm<T>> {
    let d = m.nrows();
    let n = d.trailing_zeros() as usize;
    assert_eq!(1 << n, d, "dimension must be a power of two");
    let mut out = Vec::new();
    for code in 0..4usize.pow(n as u32) {
        let axes: Vec<Pauli> = (0..n).map(|k| Pauli::ALL[(code >> (2 * (n - 1 - k))) & 3]).collect();
        let p = pauli_string::<T>(&axes);
        let tr = (&p * m).trace() / Complex::new(lit::<T>(d as f64), T::zero());
        if tr.norm_sqr().sqrt() > lit(1e-13) {
            out.push(PauliTerm { coefficient: tr, axes });
        }
    }
    out
}

fn ladder<T: Real>(lower: bool) -> DMatrix<Complex<T>> {
    // b = |0⟩⟨1| = (X + iY)/2
    let half = Complex::new(lit::<T>(0.5), T::zero());
    let i = Complex::new(T::zero(), T::one());
    let b = (Pauli::X.matrix::<T>() + Pauli::Y.matrix::<T>() * i) * half;
    if lower {
        b
    } else {
        b.adjoint()
    }
}

/// `B_n = Σ_j I^{⊗j} ⊗ b ⊗ (b†)^{⊗(n−1−j)}`: binary decrement on `n` qubits, annihilating `|0⟩`.
pub fn build_bn<T: Real>(n: usize) -> Result<DMatrix<Complex<T>>, EncodingError> {
    if n == 0 {
        return Err(EncodingError::InvalidWidth);
    }
    let d = 1 << n;
    let id = DMatrix::<Complex<T>>::identity(2, 2);
    let mut total = DMatrix::zeros(d, d);
    for j in 0..n {
        let mut m = DMatrix::identity(1, 1);
        for k in 0..n {
            let f = if k < j {
                id.clone()
            } else if k == j {
                ladder(true)
            } else {
                ladder(false)
            };
            m = kron(&m, &f);
        }
        total += m;
    }
    Ok(total)
}

pub fn build_bn_pauli<T: Real>(n: usize) -> Result<Vec<PauliTerm<T>>, EncodingError> {
    Ok(pauli_decompose(&build_bn(n)?))
}

fn plaquette_matrix<T: Real>(n: usize) -> Result<DMatrix<Complex<T>>, EncodingError> {
    let b = build_bn::<T>(n)?;
    let id = DMatrix::identity(1 << n, 1 << n);
    Ok(kron(&b.adjoint(), &id) + kron(&b, &b.adjoint()) + kron(&id, &b))
}

/// `□ = B†⊗I + B⊗B† + I⊗B` on the p-register ⊗ q-register, as Pauli terms.
pub fn plaquette_pauli<T: Real>(n: usize) -> Result<Vec<PauliTerm<T>>, EncodingError> {
    Ok(pauli_decompose(&plaquette_matrix::<T>(n)?))
}

/// Full single-plaquette Hamiltonian on `2n` qubits, assembled from the Pauli form of `□`.
pub fn encoded_single_plaquette<T: Real>(n: usize, g: T) -> Result<DMatrix<T>, EncodingError> {
    let plaq = terms_to_matrix(&plaquette_pauli::<T>(n)?, 2 * n);
    let herm = &plaq + plaq.adjoint();
    let d = 1 << (2 * n);
    let g2 = g * g;
    let hop = -T::one() / (lit::<T>(2.0) * g2);
    Ok(DMatrix::from_fn(d, d, |r, c| {
        let mut v = herm[(r, c)].re * hop;
        if r == c {
            let (p, q) = ((r >> n) as u32, (r & ((1 << n) - 1)) as u32);
            v += lit::<T>(2.0) * g2 * casimir::<T>(Irrep::new(p, q)) + lit::<T>(3.0) / g2;
        }
        v
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupLabel {
    H1,
    H2,
    H3,
}

impl GroupLabel {
    pub const ALL: [GroupLabel; 3] = [GroupLabel::H1, GroupLabel::H2, GroupLabel::H3];

    pub fn members(self) -> &'static [[Pauli; 2]] {
        use Pauli::*;
        match self {
            GroupLabel::H1 => &[[I, Z], [X, I], [X, Z]],
            GroupLabel::H2 => &[[Z, I], [I, X]],
            GroupLabel::H3 => &[[X, X], [Y, Y], [Z, Z]],
        }
    }
}

/// Parameter-free circuit that diagonalizes every member of a group.
pub fn basis_change_circuit<T: Real>(label: GroupLabel) -> Circuit<T> {
    let mut c = Circuit::new(Space::Qubits(2));
    let gates = match label {
        GroupLabel::H1 => vec![Gate::h(0)],
        GroupLabel::H2 => vec![Gate::h(1)],
        GroupLabel::H3 => vec![Gate::cnot(0, 1), Gate::h(0)],
    };
    for g in gates {
        c.push(g).expect("valid two-qubit gate");
    }
    c
}

/// Dense unitary of a parameter-free circuit.
pub fn circuit_unitary<T: Real>(c: &Circuit<T>) -> DMatrix<Complex<T>> {
    let d = c.dim();
    let mut u = DMatrix::zeros(d, d);
    for k in 0..d {
        let out = apply(c, &[], &StateVector::basis(d, k)).expect("parameter-free circuit");
        for (r, a) in out.amplitudes().iter().enumerate() {
            u[(r, k)] = *a;
        }
    }
    u
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementGroup<T> {
    pub label: GroupLabel,
    pub terms: Vec<PauliTerm<T>>,
    pub circuit: Circuit<T>,
    eigenvalues: Vec<T>,
}

impl<T: Real> MeasurementGroup<T> {
    pub fn new(label: GroupLabel, coefficients: &[T]) -> Self {
        let terms: Vec<PauliTerm<T>> = label
            .members()
            .iter()
            .zip(coefficients)
            .map(|(axes, &c)| PauliTerm { coefficient: Complex::new(c, T::zero()), axes: axes.to_vec() })
            .collect();
        let circuit = basis_change_circuit(label);
        let u = circuit_unitary(&circuit);
        let d = &u * terms_to_matrix(&terms, 2) * u.adjoint();
        let eigenvalues = (0..4).map(|k| d[(k, k)].re).collect();
        MeasurementGroup { label, terms, circuit, eigenvalues }
    }

    /// Value of the group operator on each computational outcome after the basis change.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn coefficients(&self) -> Vec<T> {
        self.terms.iter().map(|t| t.coefficient.re).collect()
    }

    pub fn matrix(&self) -> DMatrix<Complex<T>> {
        terms_to_matrix(&self.terms, 2)
    }

    /// Exact expectation via the measurement basis.
    pub fn expectation(&self, psi: &StateVector<T>) -> T {
        let rotated = apply(&self.circuit, &[], psi).expect("two-qubit state");
        rotated.probabilities().iter().zip(&self.eigenvalues).fold(T::zero(), |a, (&p, &e)| a + p * e)
    }
}

/// `H = h_II·I + H1 + H2 + H3`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedHamiltonian<T> {
    pub identity: T,
    pub groups: Vec<MeasurementGroup<T>>,
}

impl<T: Real> GroupedHamiltonian<T> {
    pub fn to_dense(&self) -> DMatrix<T> {
        let m = self.groups.iter().fold(DMatrix::<Complex<T>>::identity(4, 4) * Complex::new(self.identity, T::zero()), |a, g| {
            a + g.matrix()
        });
        m.map(|z| z.re)
    }

    pub fn expectation(&self, psi: &StateVector<T>) -> T {
        self.groups.iter().fold(self.identity, |a, g| a + g.expectation(psi))
    }

    /// Coefficients in the order `II, H1 terms, H2 terms, H3 terms`.
    pub fn coefficient_vector(&self) -> Vec<T> {
        let mut v = vec![self.identity];
        for g in &self.groups {
            v.extend(g.coefficients());
        }
        v
    }
}

/// Splits a real symmetric two-qubit operator into the three measurement groups.
pub fn group_two_qubit_hamiltonian<T: Real>(h: &SparseHamiltonian<T>) -> Result<GroupedHamiltonian<T>, EncodingError> {
    if h.dim() != 4 {
        return Err(EncodingError::NotTwoQubit(h.dim()));
    }
    let m = h.to_dense().map(|v| Complex::new(v, T::zero()));
    let terms = pauli_decompose(&m);
    let mut identity = T::zero();
    let mut coeff = std::collections::HashMap::new();
    let mut bad = Vec::new();
    for t in terms {
        let axes = [t.axes[0], t.axes[1]];
        if to_f64(t.coefficient.im).abs() > 1e-12 {
            bad.push(t.label());
            continue;
        }
        if axes == [Pauli::I, Pauli::I] {
            identity = t.coefficient.re;
        } else if GroupLabel::ALL.iter().any(|g| g.members().contains(&axes)) {
            coeff.insert(axes, t.coefficient.re);
        } else {
            bad.push(t.label());
        }
    }
    if !bad.is_empty() {
        return Err(EncodingError::Ungroupable(bad));
    }
    let groups = GroupLabel::ALL
        .iter()
        .map(|&g| {
            let c: Vec<T> = g.members().iter().map(|a| coeff.get(a).copied().unwrap_or_else(T::zero)).collect();
            MeasurementGroup::new(g, &c)
        })
        .collect();
    Ok(GroupedHamiltonian { identity, groups })
}
