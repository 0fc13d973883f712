use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::HamiltonianError;
use crate::scalar::{lit, to_f64, Real};

/// Real symmetric operator stored as upper-triangle triplets.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseHamiltonian<T> {
    dim: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> SparseHamiltonian<T> {
    /// Builds from arbitrary triplets. Entries below the diagonal are folded onto
    /// their mirror; duplicates are summed.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self, HamiltonianError>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut acc: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(HamiltonianError::IndexOutOfRange { row: r, col: c, dim });
            }
            if !v.is_finite() {
                return Err(HamiltonianError::NonFinite { row: r, col: c });
            }
            let key = if r <= c { (r, c) } else { (c, r) };
            *acc.entry(key).or_insert_with(T::zero) += v;
        }
        let entries = acc.into_iter().map(|((r, c), v)| (r, c, v)).collect();
        Ok(SparseHamiltonian { dim, entries })
    }

    /// Builds from a dense matrix, checking symmetry.
    pub fn from_dense(m: &DMatrix<T>) -> Result<Self, HamiltonianError> {
        let n = m.nrows();
        let mut worst = T::zero();
        let mut trip = Vec::new();
        for r in 0..n {
            for c in r..n {
                worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
                if m[(r, c)] != T::zero() {
                    trip.push((r, c, m[(r, c)]));
                }
            }
        }
        if worst > lit(1e-10) {
            return Err(HamiltonianError::NonHermitian { residual: to_f64(worst) });
        }
        Self::from_triplets(n, trip)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Upper-triangle entries `(row, col, value)` with `row <= col`.
    pub fn entries(&self) -> &[(usize, usize, T)] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let key = if r <= c { (r, c) } else { (c, r) };
        self.entries
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|i| self.entries[i].2)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn diagonal(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.dim];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r] = v;
            }
        }
        d
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// `⟨x|H|x⟩` for a real vector.
    pub fn expectation(&self, x: &[T]) -> T {
        let mut s = T::zero();
        for &(r, c, v) in &self.entries {
            if r == c {
                s += v * x[r] * x[r];
            } else {
                s += lit::<T>(2.0) * v * x[r] * x[c];
            }
        }
        s
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    pub fn scale(&self, a: T) -> Self {
        SparseHamiltonian {
            dim: self.dim,
            entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * a)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, HamiltonianError> {
        if other.dim != self.dim {
            return Err(HamiltonianError::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Self::from_triplets(self.dim, self.entries.iter().chain(other.entries.iter()).copied())
    }

    /// Restriction to the listed basis indices, in the given order.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let trip = self.entries.iter().filter_map(|&(r, c, v)| {
            let (a, b) = (pos[r], pos[c]);
            (a != usize::MAX && b != usize::MAX).then_some((a, b, v))
        });
        Self::from_triplets(keep.len(), trip).expect("restriction stays in range")
    }

    /// `Vᵀ H V` for an isometry `V` given column by column as sparse vectors.
    pub fn project(&self, columns: &[Vec<(usize, T)>]) -> Self {
        let n = columns.len();
        let mut dense_cols: Vec<Vec<T>> = Vec::with_capacity(n);
        for col in columns {
            let mut x = vec![T::zero(); self.dim];
            for &(i, v) in col {
                x[i] = v;
            }
            dense_cols.push(self.matvec(&x));
        }
        let mut trip = Vec::new();
        for (a, col) in columns.iter().enumerate() {
            for (b, hcol) in dense_cols.iter().enumerate().skip(a) {
                let s = col.iter().fold(T::zero(), |acc, &(i, v)| acc + v * hcol[i]);
                if s.abs() > lit(1e-15) {
                    trip.push((a, b, s));
                }
            }
        }
        Self::from_triplets(n, trip).expect("projection stays in range")
    }

    /// Largest entry of `|H P − P H|` for the permutation `P: e_i ↦ e_{perm[i]}`.
    pub fn permutation_commutator(&self, perm: &[usize]) -> T {
        let mut worst = T::zero();
        for &(r, c, v) in &self.entries {
            let w = self.get(perm[r], perm[c]);
            worst = worst.max((v - w).abs());
        }
        let mut inv = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        for &(r, c, v) in &self.entries {
            let w = self.get(inv[r], inv[c]);
            worst = worst.max((v - w).abs());
        }
        worst
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.entries.iter().fold(T::zero(), |a, &(_, _, v)| a.max(v.abs()))
    }

    /// Text export: header `dim nnz`, then `row col value` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.dim, self.entries.len())?;
        for &(r, c, v) in &self.entries {
            writeln!(w, "{} {} {:?}", r, c, to_f64(v))?;
        }
        Ok(())
    }

    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self, HamiltonianError> {
        let mut lines = r.lines();
        let bad = |m: &str| HamiltonianError::Parse(m.to_string());
        let header = lines.next().ok_or_else(|| bad("missing header"))?.map_err(|e| bad(&e.to_string()))?;
        let mut h = header.split_whitespace();
        let dim: usize = h.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad("bad dim"))?;
        let nnz: usize = h.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad("bad nnz"))?;
        let mut trip = Vec::with_capacity(nnz);
        for line in lines {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut f = line.split_whitespace();
            let r: usize = f.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad(&line))?;
            let c: usize = f.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad(&line))?;
            let v: f64 = f.next().and_then(|x| x.parse().ok()).ok_or_else(|| bad(&line))?;
            trip.push((r, c, lit::<T>(v)));
        }
        if trip.len() != nnz {
            return Err(bad("entry count does not match header"));
        }
        Self::from_triplets(dim, trip)
    }
}
