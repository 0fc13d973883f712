//! Infinite plaquette chain as a matrix product state of blocked sites `(v_i, t_i, b_i)`,
//! imaginary-time TEBD for the vacuum and plaquette rotation gates on an `(l+1)`-site unit cell.
//!
//! Gauss's law fixes `(t_i, b_i)` from `(t_{i−1}, b_{i−1})` and `v_i`, so each bond carries the
//! key `(t, b)` of the site to its left as a conserved sector label. Every operator that couples
//! three consecutive sites only reads the left site through that key, which turns it into a
//! two-site operator conditioned on the left bond sector.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::ansatz::{rotation_pairs, RotationProgram, RotationType};
use crate::hamiltonian::{enumerate_gauss_basis, gauss_penalty_operator, Boundary, ChainBasis, HamiltonianError, LinkId, LinkLabel};
use crate::optimizers::golden_section;
use crate::scalar::{lit, to_f64, Real};
use crate::su3::casimir;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpsError {
    #[error("unit cell needs at least 2 sites, got {0}")]
    CellTooShort(usize),
    #[error("bond dimension must be at least 1")]
    InvalidChi,
    #[error("dτ schedule must be positive and non-increasing")]
    InvalidSchedule,
    #[error("domain length {0} outside 1..=5")]
    InvalidDomain(usize),
    #[error("parameter count mismatch: expected {expected}, found {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Ansatz(#[from] crate::ansatz::AnsatzError),
}

/// Three links `(v, t, b)` blocked into one site of dimension 27.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockedSite {
    pub v: LinkLabel,
    pub t: LinkLabel,
    pub b: LinkLabel,
}

impl BlockedSite {
    pub const DIM: usize = 27;

    pub fn index(self) -> usize {
        9 * self.v as usize + 3 * self.t as usize + self.b as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < 27).then(|| BlockedSite { v: LinkLabel::ALL[i / 9], t: LinkLabel::ALL[(i / 3) % 3], b: LinkLabel::ALL[i % 3] })
    }

    /// Bond sector to the right of this site.
    pub fn key(self) -> usize {
        key_of(self.t, self.b)
    }
}

fn key_of(t: LinkLabel, b: LinkLabel) -> usize {
    3 * t as usize + b as usize
}

/// Number of possible bond sectors `(t, b)`.
pub const KEYS: usize = 9;
const VACUUM_KEY: usize = 0;

/// Local Hamiltonian data in the sector-conditioned two-site form.
#[derive(Clone, Debug)]
pub struct LocalTerms<T: Real> {
    pub g: T,
    pub c_g: T,
    /// `next[key][v]`: sector after a site with vertical `v` to the right of sector `key`.
    pub next: [[Option<usize>; 3]; KEYS],
    /// Electric energy `(g²/2)ΣC` of a site given the left sector and `v`.
    pub electric: [[T; 3]; KEYS],
    /// Gauss penalty of a site given the left sector and `v` (both shared vertices).
    pub penalty: [[T; 3]; KEYS],
    /// `(□ + □†)/2` on `(v_j, v_{j+1})`, index `3v_j + v_{j+1}`, per left sector.
    pub plaquette: Vec<DMatrix<T>>,
    /// Two-site energy term: left-site electric, `3/g²` and `−(□ + □†)/(2g²)`.
    pub bond: Vec<DMatrix<T>>,
}

fn reference_chain() -> Result<ChainBasis, HamiltonianError> {
    enumerate_gauss_basis(3, Boundary::Open)
}

struct Window {
    t0: usize,
    b0: usize,
    v1: usize,
    t1: usize,
    b1: usize,
    v2: usize,
    t2: usize,
    b2: usize,
}

fn window(basis: &ChainBasis) -> Window {
    let g = basis.geometry();
    let ix = |id| g.link_index(id).expect("link of the reference chain");
    Window {
        t0: ix(LinkId::Top(0)),
        b0: ix(LinkId::Bottom(0)),
        v1: ix(LinkId::Vertical(1)),
        t1: ix(LinkId::Top(1)),
        b1: ix(LinkId::Bottom(1)),
        v2: ix(LinkId::Vertical(2)),
        t2: ix(LinkId::Top(2)),
        b2: ix(LinkId::Bottom(2)),
    }
}

/// `(left key, 3v₁ + v₂)` of a reference-chain configuration around plaquette 1.
fn local_coords(w: &Window, cfg: &[LinkLabel]) -> (usize, usize) {
    (key_of(cfg[w.t0], cfg[w.b0]), 3 * cfg[w.v1] as usize + cfg[w.v2] as usize)
}

/// Builds the local terms from the three-plaquette open chain, whose middle plaquette sees
/// every reachable left sector.
pub fn build_local_terms<T: Real>(g: T, c_g: T) -> Result<LocalTerms<T>, MpsError> {
    if !(g > T::zero() && g.is_finite()) {
        return Err(HamiltonianError::InvalidCoupling.into());
    }
    let top = gauss_penalty_operator::<T>([false, false, true], c_g)?;
    let bottom = gauss_penalty_operator::<T>([false, true, true], c_g)?;
    let basis = reference_chain()?;
    let w = window(&basis);
    let mut next = [[None; 3]; KEYS];
    for cfg in basis.configs() {
        for (k, v, t, b) in [(key_of(cfg[w.t0], cfg[w.b0]), cfg[w.v1], cfg[w.t1], cfg[w.b1]), (key_of(cfg[w.t1], cfg[w.b1]), cfg[w.v2], cfg[w.t2], cfg[w.b2])] {
            let new = key_of(t, b);
            match next[k][v as usize] {
                None => next[k][v as usize] = Some(new),
                Some(old) if old != new => return Err(HamiltonianError::InternalConsistency { residual: 1.0 }.into()),
                _ => {}
            }
        }
    }
    let half_g2 = g * g / lit(2.0);
    let mut electric = [[T::zero(); 3]; KEYS];
    let mut penalty = [[T::zero(); 3]; KEYS];
    for key in 0..KEYS {
        let (tl, bl) = (LinkLabel::ALL[key / 3], LinkLabel::ALL[key % 3]);
        for v in LinkLabel::ALL {
            if let Some(nk) = next[key][v as usize] {
                let (t, b) = (LinkLabel::ALL[nk / 3], LinkLabel::ALL[nk % 3]);
                electric[key][v as usize] = half_g2 * (casimir::<T>(v.irrep()) + casimir::<T>(t.irrep()) + casimir::<T>(b.irrep()));
                let it = 9 * tl as usize + 3 * v as usize + t as usize;
                let ib = 9 * bl as usize + 3 * v as usize + b as usize;
                penalty[key][v as usize] = top[(it, it)] + bottom[(ib, ib)];
            }
        }
    }
    let mut up = vec![DMatrix::<T>::zeros(9, 9); KEYS];
    let mut down = vec![DMatrix::<T>::zeros(9, 9); KEYS];
    for cfg in basis.configs() {
        let (key, col) = local_coords(&w, cfg);
        for (dagger, target) in [(false, &mut up), (true, &mut down)] {
            if let Some((new, amp)) = basis.plaquette_element::<T>(cfg, 1, dagger) {
                let (k2, row) = local_coords(&w, &new);
                if k2 != key || key_of(new[w.t2], new[w.b2]) != key_of(cfg[w.t2], cfg[w.b2]) {
                    return Err(HamiltonianError::InternalConsistency { residual: 1.0 }.into());
                }
                target[key][(row, col)] += amp;
            }
        }
    }
    let mut plaquette = Vec::with_capacity(KEYS);
    let mut bond = Vec::with_capacity(KEYS);
    let const_term = lit::<T>(3.0) / (g * g);
    for key in 0..KEYS {
        let asym = (&up[key] - down[key].transpose()).amax();
        if asym > lit(1e-12) {
            return Err(HamiltonianError::InternalConsistency { residual: to_f64(asym) }.into());
        }
        let p: DMatrix<T> = (&up[key] + &down[key]) / lit::<T>(2.0);
        let mut h: DMatrix<T> = &p * (-(lit::<T>(1.0) / (g * g)));
        for v1 in 0..3 {
            for v2 in 0..3 {
                h[(3 * v1 + v2, 3 * v1 + v2)] += electric[key][v1] + const_term;
            }
        }
        plaquette.push(p);
        bond.push(h);
    }
    Ok(LocalTerms { g, c_g, next, electric, penalty, plaquette, bond })
}

/// Default penalty strength `20·max(3g²/2, 3/g²)`.
pub fn default_penalty<T: Real>(g: T) -> T {
    let a = g * g * lit(1.5);
    let b = lit::<T>(3.0) / (g * g);
    lit::<T>(20.0) * if a > b { a } else { b }
}

/// Sector-conditioned two-site operator: one `9×9` matrix on `(v_i, v_{i+1})` per left sector.
pub type BondOperator<T> = Vec<DMatrix<T>>;

fn exp_symmetric<T: Real>(h: &DMatrix<T>, tau: T) -> DMatrix<T> {
    let eig = SymmetricEigen::new(h.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| (-tau * e).exp()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// `exp(−τ h)` per sector.
pub fn imaginary_time_gate<T: Real>(terms: &LocalTerms<T>, tau: T) -> BondOperator<T> {
    terms.bond.iter().map(|h| exp_symmetric(h, tau)).collect()
}

/// Local transitions `(left key, from, to)` of one base rotation.
pub fn rotation_transitions(rot: RotationType) -> Result<Vec<(usize, usize, usize)>, MpsError> {
    let basis = reference_chain()?;
    let w = window(&basis);
    Ok(rotation_pairs(&basis, rot, 1)?
        .into_iter()
        .map(|(a, b)| {
            let (k, from) = local_coords(&w, basis.config(a));
            let (_, to) = local_coords(&w, basis.config(b));
            (k, from, to)
        })
        .collect())
}

/// Plane rotation by `θ` on every transition; positive angles move amplitude `from → to`.
pub fn rotation_gate<T: Real>(transitions: &[(usize, usize, usize)], theta: T) -> BondOperator<T> {
    let mut g = vec![DMatrix::<T>::identity(9, 9); KEYS];
    let (c, s) = (theta.cos(), theta.sin());
    for &(k, i, j) in transitions {
        g[k][(i, i)] = c;
        g[k][(j, j)] = c;
        g[k][(j, i)] = s;
        g[k][(i, j)] = -s;
    }
    g
}

/// Infinite MPS with a unit cell of `m` sites in right-canonical form.
#[derive(Clone, Debug, PartialEq)]
pub struct MpsUnitCell<T: Real> {
    /// `B_i[v]`: left bond `i−1` × right bond `i`.
    pub sites: Vec<[DMatrix<T>; 3]>,
    /// Schmidt weights of bond `i` (right of site `i`).
    pub lambdas: Vec<Vec<T>>,
    /// Sector of every index on bond `i`.
    pub sectors: Vec<Vec<usize>>,
    pub chi: usize,
}

/// Transfer-matrix environments: `left[b]` and `right[b]` live on bond `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Environments<T: Real> {
    pub left: Vec<DMatrix<T>>,
    pub right: Vec<DMatrix<T>>,
}

/// Outcome of one gate application.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateReport {
    pub discard_weight: f64,
    /// Set when the discarded weight exceeds `1e-2`.
    pub warning: bool,
}

impl<T: Real> MpsUnitCell<T> {
    /// All-singlet product state.
    pub fn electric_vacuum(cell: usize, chi: usize) -> Result<Self, MpsError> {
        if cell < 2 {
            return Err(MpsError::CellTooShort(cell));
        }
        if chi == 0 {
            return Err(MpsError::InvalidChi);
        }
        let one = DMatrix::from_element(1, 1, T::one());
        let zero = DMatrix::zeros(1, 1);
        Ok(MpsUnitCell {
            sites: vec![[one, zero.clone(), zero]; cell],
            lambdas: vec![vec![T::one()]; cell],
            sectors: vec![vec![VACUUM_KEY]; cell],
            chi,
        })
    }

    pub fn cell(&self) -> usize {
        self.sites.len()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.lambdas.iter().map(|l| l.len()).collect()
    }

    fn left_bond(&self, i: usize) -> usize {
        (i + self.cell() - 1) % self.cell()
    }

    /// `Φ_{v₁v₂} = B_i[v₁]·B_{i+1}[v₂]`.
    fn pair(&self, i: usize) -> Vec<DMatrix<T>> {
        let j = (i + 1) % self.cell();
        let mut out = Vec::with_capacity(9);
        for v1 in 0..3 {
            for v2 in 0..3 {
                out.push(&self.sites[i][v1] * &self.sites[j][v2]);
            }
        }
        out
    }

    fn apply_rows(&self, i: usize, phi: &[DMatrix<T>], op: &BondOperator<T>) -> Vec<DMatrix<T>> {
        let sl = &self.sectors[self.left_bond(i)];
        let (dl, dr) = (phi[0].nrows(), phi[0].ncols());
        let mut out = vec![DMatrix::zeros(dl, dr); 9];
        for (a, &key) in sl.iter().enumerate() {
            let g = &op[key];
            for p in 0..9 {
                for q in 0..9 {
                    let w = g[(p, q)];
                    if w != T::zero() {
                        for c in 0..dr {
                            out[p][(a, c)] += w * phi[q][(a, c)];
                        }
                    }
                }
            }
        }
        out
    }

    /// Applies a two-site operator on sites `(i, i+1)` and restores canonical form with a
    /// sector-blocked SVD truncated to `χ`.
    pub fn apply_gate(&mut self, terms: &LocalTerms<T>, i: usize, op: &BondOperator<T>) -> GateReport {
        let m = self.cell();
        let i = i % m;
        let j = (i + 1) % m;
        let lb = self.left_bond(i);
        let phi = self.apply_rows(i, &self.pair(i), op);
        let sl = self.sectors[lb].clone();
        let sr = self.sectors[j].clone();
        let lam_l = self.lambdas[lb].clone();
        let (dl, dr) = (sl.len(), sr.len());
        struct Block<T: Real> {
            key: usize,
            rows: Vec<(usize, usize)>,
            cols: Vec<(usize, usize)>,
            svd: nalgebra::SVD<T, nalgebra::Dyn, nalgebra::Dyn>,
        }
        let mut blocks: Vec<Block<T>> = Vec::new();
        for key in 0..KEYS {
            let rows: Vec<(usize, usize)> =
                (0..dl).flat_map(|a| (0..3).map(move |v| (a, v))).filter(|&(a, v)| terms.next[sl[a]][v] == Some(key)).collect();
            let cols: Vec<(usize, usize)> =
                (0..3).flat_map(|v| (0..dr).map(move |c| (v, c))).filter(|&(v, c)| terms.next[key][v] == Some(sr[c])).collect();
            if rows.is_empty() || cols.is_empty() {
                continue;
            }
            let mat = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
                let (a, v1) = rows[r];
                let (v2, cc) = cols[c];
                lam_l[a] * phi[3 * v1 + v2][(a, cc)]
            });
            blocks.push(Block { key, rows, cols, svd: mat.svd(false, true) });
        }
        let mut all: Vec<(T, usize, usize)> = Vec::new();
        for (bi, b) in blocks.iter().enumerate() {
            for (k, &s) in b.svd.singular_values.iter().enumerate() {
                all.push((s, bi, k));
            }
        }
        all.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
        let total: T = all.iter().fold(T::zero(), |acc, x| acc + x.0 * x.0);
        let smax = all.first().map(|x| x.0).unwrap_or(T::zero());
        let cutoff = smax * lit(1e-13);
        let keep: Vec<(T, usize, usize)> = all.iter().copied().take(self.chi).filter(|x| x.0 > cutoff).collect();
        let kept: T = keep.iter().fold(T::zero(), |acc, x| acc + x.0 * x.0);
        let discard = if total > T::zero() { to_f64((total - kept) / total).max(0.0) } else { 0.0 };
        let norm = kept.sqrt();
        let nb = keep.len();
        let mut bi_new: [DMatrix<T>; 3] = std::array::from_fn(|_| DMatrix::zeros(dl, nb));
        let mut bj_new: [DMatrix<T>; 3] = std::array::from_fn(|_| DMatrix::zeros(nb, dr));
        let mut sectors = Vec::with_capacity(nb);
        let mut lambdas = Vec::with_capacity(nb);
        for (n, &(s, bi, k)) in keep.iter().enumerate() {
            let b = &blocks[bi];
            let vt = b.svd.v_t.as_ref().expect("right vectors requested");
            sectors.push(b.key);
            lambdas.push(s / norm);
            for (c, &(v2, cc)) in b.cols.iter().enumerate() {
                bj_new[v2][(n, cc)] = vt[(k, c)];
            }
            for &(a, v1) in &b.rows {
                let mut acc = T::zero();
                for (c, &(v2, cc)) in b.cols.iter().enumerate() {
                    acc += phi[3 * v1 + v2][(a, cc)] * vt[(k, c)];
                }
                bi_new[v1][(a, n)] = acc / norm;
            }
        }
        self.sites[i] = bi_new;
        self.sites[j] = bj_new;
        self.lambdas[i] = lambdas;
        self.sectors[i] = sectors;
        GateReport { discard_weight: discard, warning: discard > 1e-2 }
    }

    /// Dominant left and right fixed points of the transfer matrix, propagated to every bond.
    pub fn environments(&self) -> Environments<T> {
        let m = self.cell();
        let last = m - 1;
        let d = self.lambdas[last].len();
        let step_left = |x: &DMatrix<T>, i: usize| -> DMatrix<T> {
            let mut out = DMatrix::zeros(self.lambdas[i].len(), self.lambdas[i].len());
            for b in &self.sites[i] {
                out += b.transpose() * x * b;
            }
            out
        };
        let step_right = |x: &DMatrix<T>, i: usize| -> DMatrix<T> {
            let dl = self.lambdas[self.left_bond(i)].len();
            let mut out = DMatrix::zeros(dl, dl);
            for b in &self.sites[i] {
                out += b * x * b.transpose();
            }
            out
        };
        let fixed_point = |start: DMatrix<T>, cell_map: &dyn Fn(&DMatrix<T>) -> DMatrix<T>| -> DMatrix<T> {
            let mut x = start;
            for _ in 0..20_000 {
                let mut y = cell_map(&x);
                let n = y.norm();
                if !(n > T::zero()) {
                    break;
                }
                y /= n;
                y = (&y + y.transpose()) / lit::<T>(2.0);
                let diff = to_f64((&y - &x).amax());
                x = y;
                if diff < 1e-14 {
                    break;
                }
            }
            x
        };
        let lam2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d, self.lambdas[last].iter().map(|&x| x * x)));
        let left_cell = |x: &DMatrix<T>| (0..m).fold(x.clone(), |acc, i| step_left(&acc, i));
        let right_cell = |x: &DMatrix<T>| (0..m).rev().fold(x.clone(), |acc, i| step_right(&acc, i));
        let y = fixed_point(lam2, &left_cell);
        let x = fixed_point(DMatrix::identity(d, d), &right_cell);
        let mut left = vec![DMatrix::zeros(0, 0); m];
        let mut right = vec![DMatrix::zeros(0, 0); m];
        left[last] = y;
        for i in 0..last {
            left[i] = step_left(&left[(i + m - 1) % m], i);
        }
        right[last] = x;
        for b in (0..last).rev() {
            right[b] = step_right(&right[b + 1], b + 1);
        }
        Environments { left, right }
    }

    /// `⟨O⟩` of a sector-conditioned two-site operator on `(i, i+1)`.
    pub fn expectation(&self, i: usize, op: &BondOperator<T>) -> T {
        self.expectation_with(&self.environments(), i, op)
    }

    pub fn expectation_with(&self, env: &Environments<T>, i: usize, op: &BondOperator<T>) -> T {
        let m = self.cell();
        let i = i % m;
        let l = &env.left[self.left_bond(i)];
        let r = &env.right[(i + 1) % m];
        let phi = self.pair(i);
        let ophi = self.apply_rows(i, &phi, op);
        let (mut num, mut den) = (T::zero(), T::zero());
        for p in 0..9 {
            let w = l * &phi[p] * r;
            num += w.dot(&ophi[p]);
            den += w.dot(&phi[p]);
        }
        num / den
    }

    /// Probability of each `(left key, v)` at site `i`.
    pub fn site_distribution(&self, i: usize) -> [[T; 3]; KEYS] {
        self.site_distribution_with(&self.environments(), i)
    }

    pub fn site_distribution_with(&self, env: &Environments<T>, i: usize) -> [[T; 3]; KEYS] {
        let lb = self.left_bond(i);
        let l = &env.left[lb];
        let r = &env.right[i];
        let mut out = [[T::zero(); 3]; KEYS];
        let mut total = T::zero();
        for v in 0..3 {
            let b = &self.sites[i][v];
            let w = l * b * r;
            for (a, &key) in self.sectors[lb].iter().enumerate() {
                let x = w.row(a).dot(&b.row(a));
                out[key][v] += x;
                total += x;
            }
        }
        for row in out.iter_mut() {
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        out
    }

    /// Gauss penalty per site, averaged over the cell.
    pub fn penalty_density(&self, terms: &LocalTerms<T>) -> T {
        let env = self.environments();
        let mut acc = T::zero();
        for i in 0..self.cell() {
            let d = self.site_distribution_with(&env, i);
            for k in 0..KEYS {
                for v in 0..3 {
                    acc += d[k][v] * terms.penalty[k][v];
                }
            }
        }
        acc / lit(self.cell() as f64)
    }

    /// Energy per plaquette averaged over the cell.
    pub fn energy_density(&self, terms: &LocalTerms<T>) -> T {
        let env = self.environments();
        let m = self.cell();
        (0..m).fold(T::zero(), |a, i| a + self.expectation_with(&env, i, &terms.bond)) / lit(m as f64)
    }

    /// `⟨(□ + □†)/2⟩` of plaquette `j` (sites `j`, `j+1`).
    pub fn plaquette_expectation(&self, terms: &LocalTerms<T>, j: usize) -> T {
        self.expectation(j, &terms.plaquette)
    }

    /// Restores right-canonical form with Schmidt weights on every bond, using the
    /// transfer-matrix fixed points. Directions of weight below `1e-13` are dropped.
    pub fn canonicalize(&mut self) {
        self.regauge();
        self.regauge();
    }

    fn regauge(&mut self) {
        let m = self.cell();
        let env = self.environments();
        let mut wd = Vec::with_capacity(m);
        let mut winv = Vec::with_capacity(m);
        for b in 0..m {
            let (vals, vecs, _) = block_eigen(&env.right[b], &self.sectors[b], usize::MAX);
            let sq: Vec<T> = vals.iter().map(|&x| x.sqrt()).collect();
            let mut a = vecs.clone();
            let mut ai = vecs.transpose();
            for (k, &s) in sq.iter().enumerate() {
                a.column_mut(k).scale_mut(s);
                ai.row_mut(k).scale_mut(T::one() / s);
            }
            wd.push(a);
            winv.push(ai);
        }
        for i in 0..m {
            let lb = self.left_bond(i);
            for v in 0..3 {
                self.sites[i][v] = &winv[lb] * &self.sites[i][v] * &wd[i];
            }
        }
        let mut rot = Vec::with_capacity(m);
        for b in 0..m {
            let sectors: Vec<usize> = (0..wd[b].ncols()).map(|k| sector_of_column(&wd[b], k, &self.sectors[b])).collect();
            let l = wd[b].transpose() * &env.left[b] * &wd[b];
            let (vals, vecs, secs) = block_eigen(&l, &sectors, self.chi);
            let total: T = vals.iter().fold(T::zero(), |a, &x| a + x);
            self.lambdas[b] = vals.iter().map(|&x| (x / total).sqrt()).collect();
            self.sectors[b] = secs;
            rot.push(vecs);
        }
        for i in 0..m {
            let lb = self.left_bond(i);
            for v in 0..3 {
                self.sites[i][v] = rot[lb].transpose() * &self.sites[i][v] * &rot[i];
            }
            let dl = self.lambdas[lb].len();
            let mut s = DMatrix::<T>::zeros(dl, dl);
            for b in &self.sites[i] {
                s += b * b.transpose();
            }
            let eta = s.trace() / lit(dl as f64);
            for b in self.sites[i].iter_mut() {
                *b /= eta.sqrt();
            }
        }
    }

    /// Largest deviation from right-canonical (`Σ_v B Bᵀ = 1`) and left-canonical
    /// (`Σ_v Bᵀ Λ² B = Λ'²`) conditions over the cell.
    pub fn canonical_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.cell() {
            let lb = self.left_bond(i);
            let (dl, dr) = (self.lambdas[lb].len(), self.lambdas[i].len());
            let mut right = DMatrix::<T>::zeros(dl, dl);
            let mut left = DMatrix::<T>::zeros(dr, dr);
            let l2 = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(dl, self.lambdas[lb].iter().map(|&x| x * x)));
            for v in 0..3 {
                let b = &self.sites[i][v];
                right += b * b.transpose();
                left += b.transpose() * &l2 * b;
            }
            right -= DMatrix::identity(dl, dl);
            for (k, &x) in self.lambdas[i].iter().enumerate() {
                left[(k, k)] -= x * x;
            }
            worst = worst.max(to_f64(right.amax())).max(to_f64(left.amax()));
        }
        worst
    }

    /// Real amplitude of a finite window of site labels given the leftmost bond sector, for
    /// small-cell consistency checks: `Σ_a λ_a² ⟨…⟩` is not needed here, so this returns the
    /// overlap of the cell with itself under a gauge-fixed contraction.
    pub fn norm_check(&self) -> f64 {
        self.lambdas.iter().map(|l| (l.iter().fold(0.0, |a, &x| a + to_f64(x * x)) - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn sector_of_column<T: Real>(m: &DMatrix<T>, k: usize, sectors: &[usize]) -> usize {
    let col = m.column(k);
    let mut best = (T::zero(), sectors.first().copied().unwrap_or(VACUUM_KEY));
    for (a, &s) in sectors.iter().enumerate() {
        if col[a].abs() > best.0 {
            best = (col[a].abs(), s);
        }
    }
    best.1
}

/// Eigen-decomposition of a sector-block-diagonal symmetric matrix, block by block.
/// Returns eigenvalues (descending, at most `keep`, relative cut `1e-13`), eigenvectors as
/// columns and the sector of each.
fn block_eigen<T: Real>(m: &DMatrix<T>, sectors: &[usize], keep: usize) -> (Vec<T>, DMatrix<T>, Vec<usize>) {
    let d = sectors.len();
    let mut found: Vec<(T, usize, Vec<(usize, T)>)> = Vec::new();
    for key in 0..KEYS {
        let idx: Vec<usize> = (0..d).filter(|&a| sectors[a] == key).collect();
        if idx.is_empty() {
            continue;
        }
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| (m[(idx[r], idx[c])] + m[(idx[c], idx[r])]) / lit::<T>(2.0));
        let eig = SymmetricEigen::new(sub);
        for k in 0..idx.len() {
            let vec = idx.iter().enumerate().map(|(r, &a)| (a, eig.eigenvectors[(r, k)])).collect();
            found.push((eig.eigenvalues[k], key, vec));
        }
    }
    found.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let top = found.first().map(|x| x.0).unwrap_or(T::zero());
    let kept: Vec<_> = found.into_iter().filter(|x| x.0 > top * lit(1e-13)).take(keep).collect();
    let mut vecs = DMatrix::zeros(d, kept.len());
    for (k, (_, _, v)) in kept.iter().enumerate() {
        for &(a, x) in v {
            vecs[(a, k)] = x;
        }
    }
    (kept.iter().map(|x| x.0).collect(), vecs, kept.iter().map(|x| x.1).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItebdOptions<T> {
    pub chi: usize,
    pub c_g: T,
    /// Non-increasing imaginary time steps, one stage each.
    pub schedule: Vec<T>,
    /// Trotter steps per sweep.
    pub steps_per_sweep: usize,
    pub max_sweeps_per_stage: usize,
    /// Stage ends when the energy changes by less than this per sweep.
    pub tol: T,
}

impl<T: Real> ItebdOptions<T> {
    /// `dτ = 0.1 → 0.001` geometrically in 4 stages.
    pub fn new(g: T, chi: usize) -> Self {
        let schedule = (0..4).map(|k| lit(0.1 * 10f64.powf(-2.0 * k as f64 / 3.0))).collect();
        ItebdOptions { chi, c_g: default_penalty(g), schedule, steps_per_sweep: 10, max_sweeps_per_stage: 2000, tol: lit(1e-9) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItebdResult<T: Real> {
    pub state: MpsUnitCell<T>,
    pub energy_density: T,
    pub plaq_expectation: T,
    pub penalty: T,
    pub discard_weight_max: f64,
    pub sweeps: usize,
    /// Energy after every sweep, with the stage index.
    pub history: Vec<(usize, T)>,
    pub converged: bool,
}

/// Imaginary-time evolution from the electric vacuum with a second-order Trotter step
/// `e^{−dτH_A/2} e^{−dτH_B} e^{−dτH_A/2}` over the two bond classes of a 2-site cell.
pub fn itebd_ground<T: Real>(g: T, opts: &ItebdOptions<T>) -> Result<ItebdResult<T>, MpsError> {
    if opts.schedule.is_empty() || opts.schedule.iter().any(|&t| !(t > T::zero())) || opts.schedule.windows(2).any(|w| w[1] > w[0]) {
        return Err(MpsError::InvalidSchedule);
    }
    let terms = build_local_terms(g, opts.c_g)?;
    let mut mps = MpsUnitCell::electric_vacuum(2, opts.chi)?;
    let mut history = Vec::new();
    let mut discard: f64 = 0.0;
    let mut sweeps = 0;
    let mut converged = true;
    let mut energy = mps.energy_density(&terms);
    for (stage, &dt) in opts.schedule.iter().enumerate() {
        let half = imaginary_time_gate(&terms, dt / lit(2.0));
        let full = imaginary_time_gate(&terms, dt);
        let mut stage_done = false;
        for _ in 0..opts.max_sweeps_per_stage {
            for _ in 0..opts.steps_per_sweep {
                discard = discard.max(mps.apply_gate(&terms, 0, &half).discard_weight);
                discard = discard.max(mps.apply_gate(&terms, 1, &full).discard_weight);
                discard = discard.max(mps.apply_gate(&terms, 0, &half).discard_weight);
            }
            sweeps += 1;
            mps.canonicalize();
            let e = mps.energy_density(&terms);
            history.push((stage, e));
            let delta = (e - energy).abs();
            energy = e;
            if delta < opts.tol {
                stage_done = true;
                break;
            }
        }
        converged &= stage_done;
    }
    let plaq = (mps.plaquette_expectation(&terms, 0) + mps.plaquette_expectation(&terms, 1)) / lit(2.0);
    Ok(ItebdResult {
        penalty: mps.penalty_density(&terms),
        state: mps,
        energy_density: energy,
        plaq_expectation: plaq,
        discard_weight_max: discard,
        sweeps,
        history,
        converged,
    })
}

/// Applies a rotation program; plaquette `j` acts on sites `(j, j+1)` of the cell.
pub fn apply_program<T: Real>(
    mps: &mut MpsUnitCell<T>,
    terms: &LocalTerms<T>,
    program: &RotationProgram,
    theta: &[T],
    transitions: &dyn Fn(RotationType) -> Vec<(usize, usize, usize)>,
) -> Result<f64, MpsError> {
    if theta.len() != program.n_params {
        return Err(MpsError::ParameterCount { expected: program.n_params, found: theta.len() });
    }
    let mut worst: f64 = 0.0;
    for op in &program.ops {
        let gate = rotation_gate(&transitions(op.rotation), theta[op.param]);
        worst = worst.max(mps.apply_gate(terms, op.plaquette, &gate).discard_weight);
    }
    Ok(worst)
}

/// Cache of local transitions for all fourteen rotations.
pub struct RotationTable {
    entries: Vec<(RotationType, Vec<(usize, usize, usize)>)>,
}

impl RotationTable {
    pub fn new() -> Result<Self, MpsError> {
        let entries = RotationType::all().into_iter().map(|r| Ok((r, rotation_transitions(r)?))).collect::<Result<_, MpsError>>()?;
        Ok(RotationTable { entries })
    }

    pub fn get(&self, r: RotationType) -> Vec<(usize, usize, usize)> {
        self.entries.iter().find(|e| e.0 == r).map(|e| e.1.clone()).unwrap_or_default()
    }
}

/// Domain ansatz on an infinite chain: cell of `l + 1` sites, domain on plaquettes `0..l`,
/// stitch rotations on the gap plaquette `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainCell {
    pub l: usize,
    pub domain: RotationProgram,
    pub stitch: RotationProgram,
}

impl DomainCell {
    /// `domain` must act on plaquettes `0..l`; the stitch layer gets all fourteen rotations.
    pub fn new(l: usize, domain: RotationProgram) -> Result<Self, MpsError> {
        if !(1..=5).contains(&l) {
            return Err(MpsError::InvalidDomain(l));
        }
        let mut stitch = RotationProgram::default();
        for (k, r) in RotationType::all().into_iter().enumerate() {
            stitch.ops.push(crate::ansatz::RotationOp { rotation: r, plaquette: l, param: k });
        }
        stitch.n_params = stitch.ops.len();
        Ok(DomainCell { l, domain, stitch })
    }

    pub fn n_params(&self) -> usize {
        self.domain.n_params + self.stitch.n_params
    }

    pub fn center(&self) -> usize {
        (self.l - 1) / 2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainState<T: Real> {
    pub state: MpsUnitCell<T>,
    pub center_plaquette: T,
    pub energy_density: T,
    pub discard_weight_max: f64,
}

/// Prepares the domain state on the `(l+1)`-site cell: the domain program with `theta_domain`,
/// then the stitch layer with `theta_stitch` when given.
pub fn domain_stitch_on_mps<T: Real>(
    cell: &DomainCell,
    terms: &LocalTerms<T>,
    table: &RotationTable,
    theta_domain: &[T],
    theta_stitch: Option<&[T]>,
    chi: usize,
) -> Result<DomainState<T>, MpsError> {
    let mut mps = MpsUnitCell::electric_vacuum(cell.l + 1, chi)?;
    let lookup = |r| table.get(r);
    let mut worst = apply_program(&mut mps, terms, &cell.domain, theta_domain, &lookup)?;
    if let Some(ts) = theta_stitch {
        worst = worst.max(apply_program(&mut mps, terms, &cell.stitch, ts, &lookup)?);
    }
    Ok(DomainState {
        center_plaquette: mps.plaquette_expectation(terms, cell.center()),
        energy_density: mps.energy_density(terms),
        state: mps,
        discard_weight_max: worst,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StitchOptimum<T: Real> {
    pub theta: Vec<T>,
    pub result: DomainState<T>,
    pub evaluations: usize,
    /// Energy density after every pass.
    pub history: Vec<T>,
}

/// Minimizes the energy density over all domain and stitch angles by coordinate descent:
/// an 8-point scan of each angle followed by a golden-section search around the best point,
/// and after each pass a golden-section search along the net displacement of the pass.
pub fn optimize_stitch(
    cell: &DomainCell,
    terms: &LocalTerms<f64>,
    table: &RotationTable,
    theta_domain: &[f64],
    chi: usize,
    passes: usize,
) -> Result<StitchOptimum<f64>, MpsError> {
    let nd = cell.domain.n_params;
    let mut theta: Vec<f64> = theta_domain.iter().copied().chain(std::iter::repeat(0.0).take(cell.stitch.n_params)).collect();
    let eval = |t: &[f64]| -> f64 {
        domain_stitch_on_mps(cell, terms, table, &t[..nd], Some(&t[nd..]), chi).map(|r| r.energy_density).unwrap_or(f64::INFINITY)
    };
    let mut evaluations = 0usize;
    let mut best = eval(&theta);
    evaluations += 1;
    let mut history = vec![best];
    for _ in 0..passes {
        let before = best;
        for k in 0..theta.len() {
            let line = |x: f64| {
                let mut t = theta.clone();
                t[k] = x;
                eval(&t)
            };
            let mut centre = theta[k];
            let mut fc = best;
            for s in 1..8 {
                let x = theta[k] + PI * s as f64 / 4.0;
                let f = line(x);
                evaluations += 1;
                if f < fc {
                    fc = f;
                    centre = x;
                }
            }
            let (x, fx) = golden_section(&|x| line(x), centre - PI / 8.0, centre + PI / 8.0, 1e-6);
            evaluations += 30;
            let (x, fx) = if fx < fc { (x, fx) } else { (centre, fc) };
            if fx < best {
                best = fx;
                theta[k] = (x + PI).rem_euclid(2.0 * PI) - PI;
            }
        }
        history.push(best);
        if (before - best).abs() < 1e-12 {
            break;
        }
    }
    let result = domain_stitch_on_mps(cell, terms, table, &theta[..nd], Some(&theta[nd..]), chi)?;
    Ok(StitchOptimum { theta, result, evaluations, history })
}
