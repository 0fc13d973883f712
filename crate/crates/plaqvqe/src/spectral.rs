//! Exact ground states and Krylov (Lanczos) initial states.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::hamiltonian::{build_single_plaquette, project_cp, HamiltonianError, PlaquetteBasis, SparseHamiltonian};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("empty operator")]
    Empty,
    #[error("seed has dimension {found}, operator {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Krylov dimension {0} out of range")]
    InvalidDimension(usize),
    #[error("seed vector has zero norm")]
    ZeroSeed,
    #[error("no convergence: residual {residual:e}")]
    NoConvergence { residual: f64 },
    #[error("threshold {threshold} unreachable; best overlap {best}")]
    Unreachable { threshold: f64, best: f64 },
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
}

/// Dimension up to which [`exact_ground`] uses a dense eigensolver.
pub const DENSE_LIMIT: usize = 2048;

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn normalize<T: Real>(x: &mut [T]) -> T {
    let n = dot(x, x).sqrt();
    if n > T::zero() {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Flips the sign so the largest-magnitude component is positive.
pub fn fix_sign<T: Real>(v: &mut [T]) {
    let mut best = T::zero();
    let mut sign = T::one();
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = if x < T::zero() { -T::one() } else { T::one() };
        }
    }
    v.iter_mut().for_each(|x| *x *= sign);
}

/// `|⟨a|b⟩|²` for unit real vectors.
pub fn overlap_sq<T: Real>(a: &[T], b: &[T]) -> T {
    let d = dot(a, b);
    d * d
}

pub fn residual_norm<T: Real>(h: &SparseHamiltonian<T>, e: T, v: &[T]) -> T {
    let hv = h.matvec(v);
    hv.iter().zip(v).fold(T::zero(), |s, (&a, &b)| s + (a - e * b) * (a - e * b)).sqrt()
}

/// Lowest eigenpair with residual below `1e-10` (scaled by `max(1, ‖H‖_max)`).
pub fn exact_ground<T: Real>(h: &SparseHamiltonian<T>) -> Result<(T, Vec<T>), SpectralError> {
    let n = h.dim();
    if n == 0 {
        return Err(SpectralError::Empty);
    }
    let tol = lit::<T>(1e-10) * h.max_abs().max(T::one());
    if n <= DENSE_LIMIT {
        let eig = SymmetricEigen::new(h.to_dense());
        let k = eig.eigenvalues.imin();
        let mut v: Vec<T> = eig.eigenvectors.column(k).iter().copied().collect();
        fix_sign(&mut v);
        let e = eig.eigenvalues[k];
        let r = residual_norm(h, e, &v);
        if r > tol {
            return Err(SpectralError::NoConvergence { residual: to_f64(r) });
        }
        return Ok((e, v));
    }
    let mut seed: Vec<T> = (0..n).map(|i| T::one() + lit::<T>(((i * 7919) % 97) as f64 / 97.0)).collect();
    normalize(&mut seed);
    let mut last = T::max_value().unwrap_or_else(T::one);
    for _ in 0..400 {
        let k = lanczos_initialize(h, &seed, 80.min(n))?;
        let r = residual_norm(h, k.ritz_value, &k.ritz_vector);
        seed = k.ritz_vector;
        if r < tol {
            fix_sign(&mut seed);
            return Ok((k.ritz_value, seed));
        }
        last = r;
    }
    Err(SpectralError::NoConvergence { residual: to_f64(last) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrylovResult<T> {
    pub ritz_vector: Vec<T>,
    pub ritz_value: T,
    /// Dimension actually reached.
    pub dim: usize,
    /// Set when the Krylov space became invariant before reaching the requested dimension.
    pub breakdown: bool,
}

/// Orthonormal Krylov basis `span{ψ, Hψ, …, H^{d−1}ψ}` with two passes of
/// modified Gram–Schmidt per vector. Returns the basis and a breakdown flag.
pub fn krylov_basis<T: Real>(h: &SparseHamiltonian<T>, seed: &[T], d: usize) -> Result<(Vec<Vec<T>>, bool), SpectralError> {
    let n = h.dim();
    if seed.len() != n {
        return Err(SpectralError::DimensionMismatch { expected: n, found: seed.len() });
    }
    if d == 0 || d > n {
        return Err(SpectralError::InvalidDimension(d));
    }
    let mut v0 = seed.to_vec();
    if normalize(&mut v0) == T::zero() {
        return Err(SpectralError::ZeroSeed);
    }
    let mut basis = vec![v0];
    let mut breakdown = false;
    while basis.len() < d {
        let mut w = h.matvec(basis.last().expect("nonempty"));
        let before = dot(&w, &w).sqrt();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(x, &y)| *x -= c * y);
            }
        }
        let nrm = normalize(&mut w);
        if nrm <= lit::<T>(1e-12) * before.max(T::one()) {
            breakdown = true;
            break;
        }
        basis.push(w);
    }
    Ok((basis, breakdown))
}

/// Lowest Ritz pair of `H` in the `d`-dimensional Krylov space of `seed`.
pub fn lanczos_initialize<T: Real>(h: &SparseHamiltonian<T>, seed: &[T], d: usize) -> Result<KrylovResult<T>, SpectralError> {
    let (basis, breakdown) = krylov_basis(h, seed, d)?;
    Ok(ritz_from_basis(h, &basis, breakdown))
}

fn ritz_from_basis<T: Real>(h: &SparseHamiltonian<T>, basis: &[Vec<T>], breakdown: bool) -> KrylovResult<T> {
    let hb: Vec<Vec<T>> = basis.iter().map(|b| h.matvec(b)).collect();
    ritz_from_products(basis, &hb, basis.len(), breakdown)
}

fn ritz_from_products<T: Real>(basis: &[Vec<T>], hb: &[Vec<T>], m: usize, breakdown: bool) -> KrylovResult<T> {
    let t = DMatrix::from_fn(m, m, |i, j| dot(&basis[i], &hb[j]));
    let t = (&t + t.transpose()) * lit::<T>(0.5);
    let eig = SymmetricEigen::new(t);
    let k = eig.eigenvalues.imin();
    let c = eig.eigenvectors.column(k);
    let mut v = vec![T::zero(); basis[0].len()];
    for (j, b) in basis.iter().take(m).enumerate() {
        v.iter_mut().zip(b).for_each(|(x, &y)| *x += c[j] * y);
    }
    normalize(&mut v);
    fix_sign(&mut v);
    KrylovResult { ritz_vector: v, ritz_value: eig.eigenvalues[k], dim: m, breakdown }
}

/// Ritz vectors' squared overlaps with `target` for every Krylov dimension `1..=d_max`
/// (shorter if the Krylov space becomes invariant).
pub fn krylov_overlaps<T: Real>(h: &SparseHamiltonian<T>, seed: &[T], target: &[T], d_max: usize) -> Result<Vec<T>, SpectralError> {
    let (basis, _) = krylov_basis(h, seed, d_max)?;
    let hb: Vec<Vec<T>> = basis.iter().map(|b| h.matvec(b)).collect();
    Ok((1..=basis.len()).map(|m| overlap_sq(&ritz_from_products(&basis, &hb, m, false).ritz_vector, target)).collect())
}

/// CP-even single plaquette at cutoff `Λ` with the electric vacuum as element 0.
pub fn cp_even_plaquette<T: Real>(cutoff: u32, g: T) -> Result<SparseHamiltonian<T>, SpectralError> {
    let h = build_single_plaquette(cutoff, g)?;
    let basis = PlaquetteBasis::with_cutoff(cutoff)?;
    Ok(project_cp(&h, &basis)?.0)
}

/// Largest Krylov dimension scanned by [`required_krylov_dim`].
pub const MAX_SCAN_DIM: usize = 200;

/// Smallest Krylov dimension whose Ritz vector from the electric vacuum reaches
/// `overlap² ≥ threshold` on the single plaquette at cutoff `Λ`.
pub fn required_krylov_dim<T: Real>(g: T, cutoff: u32, threshold: T) -> Result<usize, SpectralError> {
    let h = cp_even_plaquette(cutoff, g)?;
    let (_, v0) = exact_ground(&h)?;
    let mut seed = vec![T::zero(); h.dim()];
    seed[0] = T::one();
    let cap = h.dim().min(MAX_SCAN_DIM);
    let (basis, _) = krylov_basis(&h, &seed, cap)?;
    let hb: Vec<Vec<T>> = basis.iter().map(|b| h.matvec(b)).collect();
    let mut best = 0.0f64;
    for m in 1..=basis.len() {
        let o = overlap_sq(&ritz_from_products(&basis, &hb, m, false).ritz_vector, &v0);
        if o >= threshold {
            return Ok(m);
        }
        best = best.max(to_f64(o));
    }
    Err(SpectralError::Unreachable { threshold: to_f64(threshold), best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_oracle() {
        let h = SparseHamiltonian::from_triplets(3, [(0, 0, 1.0f64), (1, 1, 2.0), (2, 2, 3.0)]).unwrap();
        let (e, v) = exact_ground(&h).unwrap();
        assert_eq!(e, 1.0);
        assert!((v[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_plaquette_golden() {
        let h = build_single_plaquette(1, 1.0f64).unwrap();
        let (e, v) = exact_ground(&h).unwrap();
        assert!((e - 2.782_922_128_140_693).abs() < 1e-12);
        assert!(v[0] > 0.0);
    }

    #[test]
    fn strong_coupling_overlap() {
        let h = build_single_plaquette(3, 50.0f64).unwrap();
        let (_, v) = exact_ground(&h).unwrap();
        assert!(v[0] * v[0] > 1.0 - 1e-9);
    }

    #[test]
    fn iterative_path_matches_dense() {
        let h = cp_even_plaquette(63, 0.6f64).unwrap();
        assert!(h.dim() > DENSE_LIMIT);
        let (e, v) = exact_ground(&h).unwrap();
        let small = cp_even_plaquette(31, 0.6f64).unwrap();
        let (es, _) = exact_ground(&small).unwrap();
        assert!(e <= es + 1e-10);
        assert!((e - es).abs() < 1e-8);
        assert!(residual_norm(&h, e, &v) < 1e-10 * h.max_abs());
    }

    #[test]
    fn lanczos_dimension_one_is_seed() {
        let h = build_single_plaquette(2, 0.8f64).unwrap();
        let mut seed = vec![0.0; h.dim()];
        seed[0] = 1.0;
        let k = lanczos_initialize(&h, &seed, 1).unwrap();
        assert_eq!(k.ritz_vector, seed);
        assert!((k.ritz_value - h.get(0, 0)).abs() < 1e-14);
    }

    #[test]
    fn full_krylov_space_is_exact() {
        let h = build_single_plaquette(2, 0.8f64).unwrap();
        let seed: Vec<f64> = (0..9).map(|i| 1.0 + 0.1 * i as f64).collect();
        let k = lanczos_initialize(&h, &seed, 9).unwrap();
        let (e, _) = exact_ground(&h).unwrap();
        assert!((k.ritz_value - e).abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_krylov_overlap_at_unit_coupling() {
        // Frozen overlap² for the 2-dim Krylov space from the electric vacuum, Λ = 1 and Λ = 31.
        for (cut, want) in [(1u32, 0.998_81), (31, 0.997_71)] {
            let h = cp_even_plaquette(cut, 1.0f64).unwrap();
            let (_, v) = exact_ground(&h).unwrap();
            let mut seed = vec![0.0; h.dim()];
            seed[0] = 1.0;
            let ov = krylov_overlaps(&h, &seed, &v, 2).unwrap();
            assert!(ov[1] >= 0.99);
            assert!((ov[1] - want).abs() < 1e-5, "{}", ov[1]);
        }
    }

    #[test]
    fn breakdown_on_invariant_seed() {
        let h = SparseHamiltonian::from_triplets(3, [(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0)]).unwrap();
        let k = lanczos_initialize(&h, &[0.0, 1.0, 0.0], 3).unwrap();
        assert!(k.breakdown);
        assert_eq!(k.dim, 1);
    }

    #[test]
    fn required_dimension_strong_coupling() {
        let d = required_krylov_dim(5.0f64, 7, 0.999_999).unwrap();
        assert!(d <= 2);
        assert!(matches!(required_krylov_dim(0.1f64, 1, 1.1), Err(SpectralError::Unreachable { .. })));
    }

    #[test]
    fn overlap_monotone_in_dimension() {
        for g in [0.1, 0.5, 1.0] {
            let h = cp_even_plaquette(15, g).unwrap();
            let (_, v) = exact_ground(&h).unwrap();
            let mut seed = vec![0.0; h.dim()];
            seed[0] = 1.0;
            let ov = krylov_overlaps(&h, &seed, &v, 40).unwrap();
            for w in ov.windows(2) {
                assert!(w[1] >= w[0] - 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn ritz_values_decrease_with_dimension(cut in 1u32..6, g in 0.2f64..2.0) {
            let h = build_single_plaquette(cut, g).unwrap();
            let seed: Vec<f64> = (0..h.dim()).map(|i| ((i * 37 % 11) as f64) - 4.5).collect();
            let (e0, _) = exact_ground(&h).unwrap();
            let mut prev = f64::INFINITY;
            for d in 1..=h.dim() {
                let k = lanczos_initialize(&h, &seed, d).unwrap();
                prop_assert!(k.ritz_value <= prev + 1e-10);
                prop_assert!(k.ritz_value >= e0 - 1e-10);
                prev = k.ritz_value;
                if k.breakdown { break; }
            }
            let full = lanczos_initialize(&h, &seed, h.dim()).unwrap();
            prop_assert!((full.ritz_value - e0).abs() < 1e-9);
        }
    }
}
