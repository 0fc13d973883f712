use std::collections::VecDeque;

use super::SparseHamiltonian;
use crate::scalar::{from_usize, Real};

/// Isometry onto a symmetric subspace, stored column by column as sparse vectors
/// in the parent basis.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricSubspace<T> {
    parent_dim: usize,
    columns: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SymmetricSubspace<T> {
    pub fn from_columns(parent_dim: usize, columns: Vec<Vec<(usize, T)>>) -> Self {
        SymmetricSubspace { parent_dim, columns }
    }

    /// Uniform superpositions over the orbits of `keep` under the group generated by `perms`.
    /// Orbits are ordered by their smallest member.
    pub fn from_orbits(parent_dim: usize, perms: &[Vec<usize>], keep: &[usize]) -> Self {
        let mut inside = vec![false; parent_dim];
        for &k in keep {
            inside[k] = true;
        }
        let mut seen = vec![false; parent_dim];
        let mut sorted = keep.to_vec();
        sorted.sort_unstable();
        let mut columns = Vec::new();
        for &s in &sorted {
            if seen[s] {
                continue;
            }
            let mut orbit = vec![s];
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(i) = queue.pop_front() {
                for p in perms {
                    let j = p[i];
                    if !seen[j] {
                        assert!(inside[j], "kept set is not closed under the permutations");
                        seen[j] = true;
                        orbit.push(j);
                        queue.push_back(j);
                    }
                }
            }
            orbit.sort_unstable();
            let w = T::one() / from_usize::<T>(orbit.len()).sqrt();
            columns.push(orbit.into_iter().map(|i| (i, w)).collect());
        }
        SymmetricSubspace { parent_dim, columns }
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn parent_dim(&self) -> usize {
        self.parent_dim
    }

    pub fn columns(&self) -> &[Vec<(usize, T)>] {
        &self.columns
    }

    /// `Vᵀ H V`.
    pub fn project(&self, h: &SparseHamiltonian<T>) -> SparseHamiltonian<T> {
        h.project(&self.columns)
    }

    /// `V x`.
    pub fn embed(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.parent_dim];
        for (c, &xc) in self.columns.iter().zip(x) {
            for &(i, v) in c {
                y[i] += v * xc;
            }
        }
        y
    }

    /// `Vᵀ y`.
    pub fn reduce(&self, y: &[T]) -> Vec<T> {
        self.columns.iter().map(|c| c.iter().fold(T::zero(), |a, &(i, v)| a + v * y[i])).collect()
    }
}

/// Basis indices reachable from `start` through nonzero off-diagonal entries, sorted.
pub fn connected_sector<T: Real>(h: &SparseHamiltonian<T>, start: usize) -> Vec<usize> {
    let n = h.dim();
    let mut adj = vec![Vec::new(); n];
    for &(r, c, v) in h.entries() {
        if r != c && v != T::zero() {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut out = vec![start];
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                out.push(j);
                queue.push_back(j);
            }
        }
    }
    out.sort_unstable();
    out
}
