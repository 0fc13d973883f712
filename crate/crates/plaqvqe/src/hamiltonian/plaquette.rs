use std::collections::HashMap;

use super::symmetry::SymmetricSubspace;
use super::{HamiltonianError, SparseHamiltonian};
use crate::scalar::{lit, Real};
use crate::su3::{casimir, Irrep};

/// Ordered `|p,q⟩` states of a single plaquette.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlaquetteBasis {
    states: Vec<Irrep>,
    index: HashMap<Irrep, usize>,
    cutoff: Option<u32>,
}

impl PlaquetteBasis {
    /// All `(p, q)` with `p, q ≤ cutoff`, lexicographic.
    pub fn with_cutoff(cutoff: u32) -> Result<Self, HamiltonianError> {
        if cutoff < 1 {
            return Err(HamiltonianError::InvalidCutoff(cutoff));
        }
        let states = (0..=cutoff).flat_map(|p| (0..=cutoff).map(move |q| Irrep::new(p, q))).collect();
        let mut b = Self::from_states(states);
        b.cutoff = Some(cutoff);
        Ok(b)
    }

    /// An explicit, ordered list of states (duplicates removed).
    pub fn from_states(states: Vec<Irrep>) -> Self {
        let mut uniq = Vec::with_capacity(states.len());
        let mut index = HashMap::new();
        for s in states {
            if !index.contains_key(&s) {
                index.insert(s, uniq.len());
                uniq.push(s);
            }
        }
        PlaquetteBasis { states: uniq, index, cutoff: None }
    }

    pub fn cutoff(&self) -> Option<u32> {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Irrep] {
        &self.states
    }

    pub fn state(&self, i: usize) -> Irrep {
        self.states[i]
    }

    pub fn index_of(&self, r: Irrep) -> Option<usize> {
        self.index.get(&r).copied()
    }

    /// CP permutation `(p,q) ↦ (q,p)`, when the basis is closed under it.
    pub fn cp_permutation(&self) -> Option<Vec<usize>> {
        self.states.iter().map(|s| self.index_of(s.conjugate())).collect()
    }

    /// CP-even subspace; representatives have `p ≥ q`, in lexicographic order.
    pub fn cp_even<T: Real>(&self) -> Result<SymmetricSubspace<T>, HamiltonianError> {
        let perm = self.cp_permutation().ok_or(HamiltonianError::NotCpClosed)?;
        let mut reps: Vec<Irrep> = self.states.iter().copied().filter(|s| s.p >= s.q).collect();
        reps.sort();
        let inv_sqrt2 = lit::<T>(std::f64::consts::FRAC_1_SQRT_2);
        let columns = reps
            .iter()
            .map(|&r| {
                let i = self.index[&r];
                let j = perm[i];
                if i == j {
                    vec![(i, T::one())]
                } else {
                    vec![(i.min(j), inv_sqrt2), (i.max(j), inv_sqrt2)]
                }
            })
            .collect();
        Ok(SymmetricSubspace::from_columns(self.dim(), columns))
    }
}

fn check_coupling<T: Real>(g: T) -> Result<(), HamiltonianError> {
    if g > T::zero() && g.is_finite() {
        Ok(())
    } else {
        Err(HamiltonianError::InvalidCoupling)
    }
}

/// Single-plaquette Hamiltonian on an arbitrary set of `|p,q⟩` states.
///
/// Diagonal `2g²·C(p,q) + 6/(2g²)`; off-diagonal `−1/(2g²)` for each of the moves
/// `(p+1,q)`, `(p−1,q+1)`, `(p,q−1)` that stays inside the basis.
pub fn plaquette_hamiltonian<T: Real>(basis: &PlaquetteBasis, g: T) -> Result<SparseHamiltonian<T>, HamiltonianError> {
    check_coupling(g)?;
    let g2 = g * g;
    let magnetic = lit::<T>(3.0) / g2;
    let hop = -T::one() / (lit::<T>(2.0) * g2);
    let mut trip = Vec::new();
    for (i, s) in basis.states().iter().enumerate() {
        trip.push((i, i, lit::<T>(2.0) * g2 * casimir::<T>(*s) + magnetic));
        let (p, q) = (s.p as i64, s.q as i64);
        for (dp, dq) in [(1, 0), (-1, 1), (0, -1)] {
            let (np, nq) = (p + dp, q + dq);
            if np < 0 || nq < 0 {
                continue;
            }
            if let Some(j) = basis.index_of(Irrep::new(np as u32, nq as u32)) {
                trip.push((i, j, hop));
            }
        }
    }
    SparseHamiltonian::from_triplets(basis.dim(), trip)
}

/// Hard-truncated single plaquette with `p, q ≤ cutoff`.
pub fn build_single_plaquette<T: Real>(cutoff: u32, g: T) -> Result<SparseHamiltonian<T>, HamiltonianError> {
    let basis = PlaquetteBasis::with_cutoff(cutoff)?;
    plaquette_hamiltonian(&basis, g)
}

/// Restricts `h` to the CP-even span, failing if `h` does not commute with CP.
pub fn project_cp<T: Real>(
    h: &SparseHamiltonian<T>,
    basis: &PlaquetteBasis,
) -> Result<(SparseHamiltonian<T>, SymmetricSubspace<T>), HamiltonianError> {
    let perm = basis.cp_permutation().ok_or(HamiltonianError::NotCpClosed)?;
    let res = h.permutation_commutator(&perm);
    if res > lit(1e-10) {
        return Err(HamiltonianError::SymmetryViolation { residual: crate::scalar::to_f64(res) });
    }
    let sub = basis.cp_even()?;
    Ok((sub.project(h), sub))
}

/// The two small truncations run on two qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedTruncation {
    /// `{1, 3, 3b, 8}` in the multiplet basis.
    Trunc8,
    /// CP-even part of `{1, 3, 3b, 8, 6, 6b}`.
    Trunc6plus,
}

impl NamedTruncation {
    pub fn basis(self) -> PlaquetteBasis {
        let s = vec![Irrep::SINGLET, Irrep::ANTITRIPLET, Irrep::TRIPLET, Irrep::OCTET];
        match self {
            NamedTruncation::Trunc8 => PlaquetteBasis::from_states(s),
            NamedTruncation::Trunc6plus => {
                let mut all = s;
                all.extend([Irrep::ANTISEXTET, Irrep::SEXTET]);
                all.sort();
                PlaquetteBasis::from_states(all)
            }
        }
    }
}

/// 4-state Hamiltonian for a named truncation. trunc8 is in the `|p,q⟩` order
/// `(0,0),(0,1),(1,0),(1,1)`; trunc6plus is in the CP-even order of [`PlaquetteBasis::cp_even`].
pub fn truncated_named_basis<T: Real>(name: NamedTruncation, g: T) -> Result<SparseHamiltonian<T>, HamiltonianError> {
    let basis = name.basis();
    let h = plaquette_hamiltonian(&basis, g)?;
    match name {
        NamedTruncation::Trunc8 => Ok(h),
        NamedTruncation::Trunc6plus => Ok(project_cp(&h, &basis)?.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn ground(h: &SparseHamiltonian<f64>) -> f64 {
        SymmetricEigen::new(h.to_dense()).eigenvalues.min()
    }

    #[test]
    fn cutoff_one_entries() {
        let h = build_single_plaquette(1, 1.0f64).unwrap();
        let b = PlaquetteBasis::with_cutoff(1).unwrap();
        let i00 = b.index_of(Irrep::SINGLET).unwrap();
        let i10 = b.index_of(Irrep::TRIPLET).unwrap();
        let i11 = b.index_of(Irrep::OCTET).unwrap();
        assert_eq!(h.get(i00, i10), -0.5);
        assert_eq!(h.get(i00, i00), 3.0);
        assert!((h.get(i11, i11) - 9.0).abs() < 1e-14);
        assert_eq!(h.dim(), 4);
    }

    #[test]
    fn cutoff_one_ground_energy() {
        // Frozen from a dense 4x4 diagonalization.
        let e = ground(&build_single_plaquette(1, 1.0).unwrap());
        assert!((e - 2.782_922_128_140_693).abs() < 1e-12);
    }

    #[test]
    fn strong_coupling_vacuum_is_electric() {
        let h = build_single_plaquette(3, 20.0f64).unwrap();
        let eig = SymmetricEigen::new(h.to_dense());
        let k = eig.eigenvalues.imin();
        assert!(eig.eigenvectors.column(k)[0].abs() > 0.999_999);
    }

    #[test]
    fn invalid_arguments() {
        assert_eq!(build_single_plaquette(0, 1.0), Err(HamiltonianError::InvalidCutoff(0)));
        assert_eq!(build_single_plaquette(2, 0.0), Err(HamiltonianError::InvalidCoupling));
        assert_eq!(build_single_plaquette(2, -1.0), Err(HamiltonianError::InvalidCoupling));
    }

    #[test]
    fn cp_dimensions() {
        for (cut, d) in [(1u32, 3usize), (2, 6), (3, 10), (31, 528)] {
            let b = PlaquetteBasis::with_cutoff(cut).unwrap();
            let h = plaquette_hamiltonian(&b, 0.7).unwrap();
            let (hp, _) = project_cp(&h, &b).unwrap();
            assert_eq!(hp.dim(), d);
            assert_eq!(d, ((cut + 1) * (cut + 2) / 2) as usize);
        }
    }

    #[test]
    fn cp_states_for_cutoff_one() {
        let b = PlaquetteBasis::with_cutoff(1).unwrap();
        let sub = b.cp_even::<f64>().unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(sub.columns()[0], vec![(0, 1.0)]);
        assert_eq!(sub.columns()[1], vec![(1, s), (2, s)]);
        assert_eq!(sub.columns()[2], vec![(3, 1.0)]);
    }

    #[test]
    fn cp_projection_keeps_ground_energy() {
        let b = PlaquetteBasis::with_cutoff(2).unwrap();
        let h = plaquette_hamiltonian(&b, 0.8).unwrap();
        let (hp, _) = project_cp(&h, &b).unwrap();
        assert!((ground(&h) - ground(&hp)).abs() < 1e-10);
    }

    #[test]
    fn cp_violation_detected() {
        let b = PlaquetteBasis::with_cutoff(1).unwrap();
        let h = SparseHamiltonian::from_triplets(4, [(1, 1, 1.0)]).unwrap();
        assert!(matches!(project_cp(&h, &b), Err(HamiltonianError::SymmetryViolation { .. })));
    }

    #[test]
    fn named_truncations() {
        let h8 = truncated_named_basis(NamedTruncation::Trunc8, 1.0).unwrap();
        assert_eq!(h8.dim(), 4);
        assert!(ground(&h8) <= 2.783);
        assert_eq!(h8, build_single_plaquette(1, 1.0).unwrap());
        let h6 = truncated_named_basis(NamedTruncation::Trunc6plus, 0.8).unwrap();
        assert_eq!(h6.dim(), 4);
        // Frozen from a dense 6x6 diagonalization of the unprojected restriction.
        assert!((ground(&h6) - 3.784_354_500_319_927).abs() < 1e-10);
        let b8 = NamedTruncation::Trunc8.basis();
        assert_eq!(b8.cp_even::<f64>().unwrap().dim(), 3);
    }

    proptest! {
        #[test]
        fn ground_energy_decreases_with_cutoff(cut in 1u32..6, gi in 0usize..3) {
            let g = [0.5, 0.8, 1.0][gi];
            let e0 = ground(&build_single_plaquette(cut, g).unwrap());
            let e1 = ground(&build_single_plaquette(cut + 1, g).unwrap());
            prop_assert!(e1 <= e0 + 1e-12);
        }

        #[test]
        fn hamiltonian_commutes_with_cp(cut in 1u32..8, g in 0.1f64..3.0) {
            let b = PlaquetteBasis::with_cutoff(cut).unwrap();
            let h = plaquette_hamiltonian(&b, g).unwrap();
            prop_assert!(h.permutation_commutator(&b.cp_permutation().unwrap()) < 1e-10);
            let d = h.to_dense();
            prop_assert!((&d - d.transpose()).abs().max() < 1e-12);
        }
    }
}
