use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;

use super::{HamiltonianError, SparseHamiltonian};
use crate::scalar::{lit, to_f64, Real};
use crate::su3::{casimir, irrep_dim, link_insertion, singlet_tensor, vertex_singlet_multiplicity, CgTensor, Insertion, Irrep};

/// Link irrep on a chain truncated at the fundamental.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum LinkLabel {
    One = 0,
    Three = 1,
    ThreeBar = 2,
}

impl LinkLabel {
    pub const ALL: [LinkLabel; 3] = [LinkLabel::One, LinkLabel::Three, LinkLabel::ThreeBar];

    pub fn irrep(self) -> Irrep {
        match self {
            LinkLabel::One => Irrep::SINGLET,
            LinkLabel::Three => Irrep::TRIPLET,
            LinkLabel::ThreeBar => Irrep::ANTITRIPLET,
        }
    }

    pub fn from_irrep(r: Irrep) -> Option<LinkLabel> {
        LinkLabel::ALL.into_iter().find(|l| l.irrep() == r)
    }

    pub fn conjugate(self) -> LinkLabel {
        match self {
            LinkLabel::One => LinkLabel::One,
            LinkLabel::Three => LinkLabel::ThreeBar,
            LinkLabel::ThreeBar => LinkLabel::Three,
        }
    }
}

impl fmt::Display for LinkLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkLabel::One => "1",
            LinkLabel::Three => "3",
            LinkLabel::ThreeBar => "b",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// Links of the ladder. Horizontal links point left to right, verticals bottom to top.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LinkId {
    Top(usize),
    Bottom(usize),
    Vertical(usize),
}

impl LinkId {
    /// Same link `offset` plaquettes to the right.
    pub fn shifted(self, offset: usize) -> LinkId {
        match self {
            LinkId::Top(i) => LinkId::Top(i + offset),
            LinkId::Bottom(i) => LinkId::Bottom(i + offset),
            LinkId::Vertical(i) => LinkId::Vertical(i + offset),
        }
    }
}

/// One leg of a vertex: link position (None for a dangling boundary link) and orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Leg {
    pub link: Option<usize>,
    pub outgoing: bool,
}

/// Ladder of `length` plaquettes. Vertex `2i` is the top vertex above vertical `i`, `2i+1` the bottom one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainGeometry {
    length: usize,
    boundary: Boundary,
    links: Vec<LinkId>,
    vertices: Vec<[Leg; 3]>,
}

impl ChainGeometry {
    pub fn new(length: usize, boundary: Boundary) -> Result<Self, HamiltonianError> {
        let periodic = boundary == Boundary::Periodic;
        if length == 0 || (periodic && length < 2) {
            return Err(HamiltonianError::InvalidChainLength(length));
        }
        let nv = if periodic { length } else { length + 1 };
        let mut links: Vec<LinkId> = (0..length).map(LinkId::Top).collect();
        links.extend((0..length).map(LinkId::Bottom));
        links.extend((0..nv).map(LinkId::Vertical));
        let mut g = ChainGeometry { length, boundary, links, vertices: Vec::new() };
        let mut vertices = Vec::with_capacity(2 * nv);
        for i in 0..nv {
            let left = if periodic { Some((i + length - 1) % length) } else { i.checked_sub(1) };
            let right = if periodic || i < length { Some(i % length) } else { None };
            let v = g.link_index(LinkId::Vertical(i));
            let leg = |l: Option<LinkId>, outgoing| Leg { link: l.and_then(|l| g.link_index(l)), outgoing };
            vertices.push([
                leg(left.map(LinkId::Top), false),
                Leg { link: v, outgoing: false },
                leg(right.map(LinkId::Top), true),
            ]);
            vertices.push([
                leg(left.map(LinkId::Bottom), false),
                Leg { link: v, outgoing: true },
                leg(right.map(LinkId::Bottom), true),
            ]);
        }
        g.vertices = vertices;
        Ok(g)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_vertical(&self) -> usize {
        self.links.len() - 2 * self.length
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn vertices(&self) -> &[[Leg; 3]] {
        &self.vertices
    }

    /// Position of a link, wrapping indices on periodic chains; `None` for links outside an open chain.
    pub fn link_index(&self, id: LinkId) -> Option<usize> {
        let l = self.length;
        let nv = self.n_vertical();
        let periodic = self.boundary == Boundary::Periodic;
        let wrap = |i: usize, n: usize| if periodic { Some(i % n) } else { (i < n).then_some(i) };
        match id {
            LinkId::Top(i) => wrap(i, l),
            LinkId::Bottom(i) => wrap(i, l).map(|i| l + i),
            LinkId::Vertical(i) => wrap(i, nv).map(|i| 2 * l + i),
        }
    }

    /// Links of plaquette `j` in the order bottom, right vertical, top, left vertical.
    pub fn plaquette_links(&self, j: usize) -> [usize; 4] {
        let idx = |id| self.link_index(id).expect("plaquette link in range");
        [idx(LinkId::Bottom(j)), idx(LinkId::Vertical(j + 1)), idx(LinkId::Top(j)), idx(LinkId::Vertical(j))]
    }

    /// Corner vertices of plaquette `j`: bottom-left, bottom-right, top-right, top-left.
    pub fn plaquette_corners(&self, j: usize) -> [usize; 4] {
        let jr = (j + 1) % self.n_vertical();
        [2 * j + 1, 2 * jr + 1, 2 * jr, 2 * j]
    }

    fn leg_irrep(&self, cfg: &[LinkLabel], leg: Leg) -> Irrep {
        match leg.link {
            None => Irrep::SINGLET,
            Some(k) if leg.outgoing => cfg[k].irrep(),
            Some(k) => cfg[k].irrep().conjugate(),
        }
    }

    pub fn vertex_allowed(&self, cfg: &[LinkLabel], vertex: usize) -> bool {
        let legs = self.vertices[vertex].map(|l| self.leg_irrep(cfg, l));
        vertex_singlet_multiplicity(legs[0], legs[1], legs[2]).unwrap_or(0) == 1
    }

    pub fn gauss_allowed(&self, cfg: &[LinkLabel]) -> bool {
        (0..self.vertices.len()).all(|v| self.vertex_allowed(cfg, v))
    }

    /// Configuration shifted by one plaquette to the right (periodic chains).
    pub fn translate(&self, cfg: &[LinkLabel]) -> Vec<LinkLabel> {
        let mut out = cfg.to_vec();
        for (k, &id) in self.links.iter().enumerate() {
            let shifted = match id {
                LinkId::Top(i) => LinkId::Top(i + 1),
                LinkId::Bottom(i) => LinkId::Bottom(i + 1),
                LinkId::Vertical(i) => LinkId::Vertical(i + 1),
            };
            if let Some(t) = self.link_index(shifted) {
                out[t] = cfg[k];
            }
        }
        out
    }
}

/// Gauss-law-allowed link configurations, lexicographic in link order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainBasis {
    geometry: ChainGeometry,
    configs: Vec<Vec<LinkLabel>>,
    index: HashMap<Vec<LinkLabel>, usize>,
}

/// Depth-first enumeration with pruning at each vertex once all its links are fixed.
pub fn enumerate_gauss_basis(length: usize, boundary: Boundary) -> Result<ChainBasis, HamiltonianError> {
    let geometry = ChainGeometry::new(length, boundary)?;
    let n = geometry.n_links();
    let mut closes: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, legs) in geometry.vertices().iter().enumerate() {
        let last = legs.iter().filter_map(|l| l.link).max().expect("every vertex has a vertical link");
        closes[last].push(v);
    }
    let mut configs = Vec::new();
    let mut cfg = vec![LinkLabel::One; n];
    dfs(&geometry, &closes, 0, &mut cfg, &mut configs);
    let index = configs.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    Ok(ChainBasis { geometry, configs, index })
}

fn dfs(g: &ChainGeometry, closes: &[Vec<usize>], k: usize, cfg: &mut Vec<LinkLabel>, out: &mut Vec<Vec<LinkLabel>>) {
    if k == cfg.len() {
        out.push(cfg.clone());
        return;
    }
    for lab in LinkLabel::ALL {
        cfg[k] = lab;
        if closes[k].iter().all(|&v| g.vertex_allowed(cfg, v)) {
            dfs(g, closes, k + 1, cfg, out);
        }
    }
    cfg[k] = LinkLabel::One;
}

impl ChainBasis {
    pub fn geometry(&self) -> &ChainGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[Vec<LinkLabel>] {
        &self.configs
    }

    pub fn config(&self, i: usize) -> &[LinkLabel] {
        &self.configs[i]
    }

    pub fn index_of(&self, cfg: &[LinkLabel]) -> Option<usize> {
        self.index.get(cfg).copied()
    }

    /// Index of the all-singlet configuration (always first).
    pub fn electric_vacuum(&self) -> usize {
        0
    }

    pub fn cp_permutation(&self) -> Vec<usize> {
        self.configs
            .iter()
            .map(|c| {
                let conj: Vec<LinkLabel> = c.iter().map(|l| l.conjugate()).collect();
                self.index[&conj]
            })
            .collect()
    }

    /// Permutation for a one-plaquette shift; `None` on open chains.
    pub fn translation_permutation(&self) -> Option<Vec<usize>> {
        (self.geometry.boundary == Boundary::Periodic)
            .then(|| self.configs.iter().map(|c| self.index[&self.geometry.translate(c)]).collect())
    }

    /// `(g²/2)·C` of each link in configuration `i`.
    pub fn link_casimirs<T: Real>(&self, i: usize) -> Vec<T> {
        self.configs[i].iter().map(|l| casimir::<T>(l.irrep())).collect()
    }

    /// `⟨new|□_j|old⟩` for configuration `cfg` (or `□_j†` when `dagger`), with the new configuration.
    /// Returns `None` when the target violates Gauss's law or leaves the truncation.
    pub fn plaquette_element<T: Real>(&self, cfg: &[LinkLabel], j: usize, dagger: bool) -> Option<(Vec<LinkLabel>, T)> {
        let g = &self.geometry;
        let links = g.plaquette_links(j);
        let kinds = if dagger {
            [Insertion::Conjugate, Insertion::Conjugate, Insertion::Fundamental, Insertion::Fundamental]
        } else {
            [Insertion::Fundamental, Insertion::Fundamental, Insertion::Conjugate, Insertion::Conjugate]
        };
        let mut new = cfg.to_vec();
        let mut cgs: HashMap<usize, CgTensor<T>> = HashMap::with_capacity(4);
        let mut amp = T::one();
        for (&l, &kind) in links.iter().zip(&kinds) {
            let r = cfg[l].irrep();
            let (rp, c) = link_insertion::<T>(kind, r).ok()?;
            new[l] = LinkLabel::from_irrep(rp)?;
            amp *= (lit::<T>(irrep_dim(r) as f64) / lit::<T>(irrep_dim(rp) as f64)).sqrt();
            cgs.insert(l, c);
        }
        if !g.gauss_allowed(&new) {
            return None;
        }
        for v in g.plaquette_corners(j) {
            amp *= self.corner_overlap(cfg, &new, v, &cgs);
        }
        Some((new, amp))
    }

    fn corner_overlap<T: Real>(&self, old: &[LinkLabel], new: &[LinkLabel], v: usize, cgs: &HashMap<usize, CgTensor<T>>) -> T {
        let g = &self.geometry;
        let legs = g.vertices()[v];
        let lo = legs.map(|l| g.leg_irrep(old, l));
        let ln = legs.map(|l| g.leg_irrep(new, l));
        let so = singlet_tensor::<T>(lo[0], lo[1], lo[2]).expect("allowed vertex");
        let sn = singlet_tensor::<T>(ln[0], ln[1], ln[2]).expect("allowed vertex");
        let mut total = T::zero();
        for f in 0..3 {
            let mats: Vec<DMatrix<T>> = legs
                .iter()
                .zip(lo)
                .map(|(leg, r)| match leg.link.and_then(|k| cgs.get(&k)) {
                    Some(c) => c.slice0(f),
                    None => DMatrix::identity(irrep_dim(r), irrep_dim(r)),
                })
                .collect();
            for a in 0..so.dims[0] {
                for b in 0..so.dims[1] {
                    for c in 0..so.dims[2] {
                        let s = so.get(a, b, c);
                        if s == T::zero() {
                            continue;
                        }
                        for x in 0..sn.dims[0] {
                            let m0 = mats[0][(a, x)];
                            if m0 == T::zero() {
                                continue;
                            }
                            for y in 0..sn.dims[1] {
                                let m1 = mats[1][(b, y)];
                                if m1 == T::zero() {
                                    continue;
                                }
                                for z in 0..sn.dims[2] {
                                    total += s * m0 * m1 * mats[2][(c, z)] * sn.get(x, y, z);
                                }
                            }
                        }
                    }
                }
            }
        }
        total
    }

    /// Nonzero `(new, old, value)` entries of `□_j`.
    pub fn plaquette_matrix<T: Real>(&self, j: usize) -> Vec<(usize, usize, T)> {
        self.plaquette_entries(j, false)
    }

    fn plaquette_entries<T: Real>(&self, j: usize, dagger: bool) -> Vec<(usize, usize, T)> {
        let mut out = Vec::new();
        for (k, c) in self.configs.iter().enumerate() {
            if let Some((new, v)) = self.plaquette_element::<T>(c, j, dagger) {
                if v.abs() > lit(1e-14) {
                    out.push((self.index[&new], k, v));
                }
            }
        }
        out
    }

    /// Symmetric `(□_j + □_j†)/2`.
    pub fn plaquette_hermitian<T: Real>(&self, j: usize) -> SparseHamiltonian<T> {
        let half = lit::<T>(0.5);
        let trip = self.plaquette_matrix::<T>(j).into_iter().map(|(r, c, v)| (r, c, v * half));
        SparseHamiltonian::from_triplets(self.dim(), trip).expect("plaquette entries in range")
    }

    /// Electric energy `(g²/2)·Σ C` on the links of plaquette `j` (as a diagonal operator).
    pub fn plaquette_electric<T: Real>(&self, j: usize, g: T) -> Vec<T> {
        let links = self.geometry.plaquette_links(j);
        let w = g * g / lit(2.0);
        self.configs.iter().map(|c| links.iter().fold(T::zero(), |a, &l| a + w * casimir::<T>(c[l].irrep()))).collect()
    }
}

/// `H = (g²/2)·Σ C + Σ_j [3/g² − (□_j + □_j†)/(2g²)]` on the Gauss-projected basis.
pub fn build_chain_hamiltonian<T: Real>(basis: &ChainBasis, g: T) -> Result<SparseHamiltonian<T>, HamiltonianError> {
    if !(g > T::zero() && g.is_finite()) {
        return Err(HamiltonianError::InvalidCoupling);
    }
    let g2 = g * g;
    let n_plaq = basis.geometry.length();
    let constant = lit::<T>(3.0) / g2 * lit::<T>(n_plaq as f64);
    let mut trip: Vec<(usize, usize, T)> = (0..basis.dim())
        .map(|i| {
            let e = basis.link_casimirs::<T>(i).into_iter().fold(T::zero(), |a, c| a + c);
            (i, i, g2 / lit(2.0) * e + constant)
        })
        .collect();
    let hop = -T::one() / (lit::<T>(2.0) * g2);
    for j in 0..n_plaq {
        let fwd = basis.plaquette_entries::<T>(j, false);
        let back = basis.plaquette_entries::<T>(j, true);
        let mut worst = 0.0f64;
        let mut dense_back: HashMap<(usize, usize), T> = HashMap::new();
        for &(r, c, v) in &back {
            dense_back.insert((r, c), v);
        }
        let mut dense_fwd_t: HashMap<(usize, usize), T> = HashMap::new();
        for &(r, c, v) in &fwd {
            dense_fwd_t.insert((c, r), v);
        }
        for (k, v) in &dense_back {
            worst = worst.max(to_f64((*v - dense_fwd_t.get(k).copied().unwrap_or_else(T::zero)).abs()));
        }
        for (k, v) in &dense_fwd_t {
            worst = worst.max(to_f64((*v - dense_back.get(k).copied().unwrap_or_else(T::zero)).abs()));
        }
        if worst > 1e-10 {
            return Err(HamiltonianError::InternalConsistency { residual: worst });
        }
        for (r, c, v) in fwd {
            trip.push((r, c, hop * v));
        }
    }
    SparseHamiltonian::from_triplets(basis.dim(), trip)
}

/// `c_G·(1 − Π_singlet)` on a vertex link triple, diagonal in the multiplet basis.
/// Index `9·r₀ + 3·r₁ + r₂` over [`LinkLabel`] values; `outgoing` gives leg orientations.
pub fn gauss_penalty_operator<T: Real>(outgoing: [bool; 3], c_g: T) -> Result<DMatrix<T>, HamiltonianError> {
    if !(c_g > T::zero() && c_g.is_finite()) {
        return Err(HamiltonianError::InvalidPenalty);
    }
    let mut m = DMatrix::zeros(27, 27);
    for idx in 0..27 {
        let labs = [idx / 9, (idx / 3) % 3, idx % 3].map(|k| LinkLabel::ALL[k]);
        let r: Vec<Irrep> =
            labs.iter().zip(outgoing).map(|(l, o)| if o { l.irrep() } else { l.irrep().conjugate() }).collect();
        if vertex_singlet_multiplicity(r[0], r[1], r[2]).unwrap_or(0) == 0 {
            m[(idx, idx)] = c_g;
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{plaquette_hamiltonian, PlaquetteBasis};
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    fn spectrum(h: &SparseHamiltonian<f64>) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(h.to_dense()).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    /// Brute-force product enumeration with an independent Gauss check by triality.
    fn brute_force_dim(length: usize, boundary: Boundary) -> usize {
        let g = ChainGeometry::new(length, boundary).unwrap();
        let n = g.n_links();
        let tri = |l: LinkLabel, out: bool| {
            let t = l as u32;
            if out { t } else { (3 - t) % 3 }
        };
        let mut count = 0;
        for code in 0..3usize.pow(n as u32) {
            let cfg: Vec<LinkLabel> = (0..n).map(|k| LinkLabel::ALL[(code / 3usize.pow(k as u32)) % 3]).collect();
            let ok = g.vertices().iter().all(|legs| {
                legs.iter().map(|l| l.link.map_or(0, |k| tri(cfg[k], l.outgoing))).sum::<u32>() % 3 == 0
            });
            count += ok as usize;
        }
        count
    }

    #[test]
    fn single_plaquette_geometry_has_three_loop_states() {
        let b = enumerate_gauss_basis(1, Boundary::Open).unwrap();
        assert_eq!(b.dim(), 3);
        assert!(b.config(0).iter().all(|&l| l == LinkLabel::One));
        let g = b.geometry();
        let t = g.link_index(LinkId::Top(0)).unwrap();
        let bot = g.link_index(LinkId::Bottom(0)).unwrap();
        let v0 = g.link_index(LinkId::Vertical(0)).unwrap();
        let v1 = g.link_index(LinkId::Vertical(1)).unwrap();
        for c in &b.configs()[1..] {
            assert_eq!(c[bot], c[v1]);
            assert_eq!(c[t], c[bot].conjugate());
            assert_eq!(c[v0], c[bot].conjugate());
        }
    }

    #[test]
    fn dimensions_match_brute_force() {
        for (l, bd) in [(1, Boundary::Open), (2, Boundary::Open), (3, Boundary::Open), (2, Boundary::Periodic), (3, Boundary::Periodic)] {
            let b = enumerate_gauss_basis(l, bd).unwrap();
            assert_eq!(b.dim(), brute_force_dim(l, bd), "L={l} {bd:?}");
            for c in b.configs() {
                assert!(b.geometry().gauss_allowed(c));
            }
        }
        assert_eq!(enumerate_gauss_basis(2, Boundary::Periodic).unwrap().dim(), 27);
        assert_eq!(enumerate_gauss_basis(5, Boundary::Open).unwrap().dim(), 243);
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let b = enumerate_gauss_basis(3, Boundary::Open).unwrap();
        for w in b.configs().windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn invalid_lengths() {
        assert!(enumerate_gauss_basis(0, Boundary::Open).is_err());
        assert!(enumerate_gauss_basis(1, Boundary::Periodic).is_err());
    }

    #[test]
    fn one_plaquette_chain_matches_single_plaquette() {
        let b = enumerate_gauss_basis(1, Boundary::Open).unwrap();
        for g in [0.5, 0.9, 1.0, 2.0] {
            let h = build_chain_hamiltonian(&b, g).unwrap();
            let sp = PlaquetteBasis::from_states(vec![Irrep::SINGLET, Irrep::TRIPLET, Irrep::ANTITRIPLET]);
            let hs = plaquette_hamiltonian(&sp, g).unwrap();
            for (a, c) in spectrum(&h).iter().zip(spectrum(&hs)) {
                assert!((a - c).abs() < 1e-12);
            }
        }
        // Frozen from a dense 3x3 diagonalization at g=1.
        let e = spectrum(&build_chain_hamiltonian(&b, 1.0).unwrap());
        for (a, c) in e.iter().zip([2.789_652_11, 5.377_014_56, 6.166_666_67]) {
            assert!((a - c).abs() < 1e-8);
        }
    }

    #[test]
    fn excitation_from_vacuum_has_unit_amplitude() {
        let b = enumerate_gauss_basis(3, Boundary::Open).unwrap();
        for j in 0..3 {
            let (new, v) = b.plaquette_element::<f64>(b.config(0), j, false).unwrap();
            assert!((v.abs() - 1.0).abs() < 1e-12);
            let lp = b.geometry().plaquette_links(j);
            for (k, l) in new.iter().enumerate() {
                assert_eq!(*l == LinkLabel::One, !lp.contains(&k));
            }
        }
    }

    #[test]
    fn plaquette_magnitudes_in_unit_interval() {
        for (l, bd) in [(3, Boundary::Open), (2, Boundary::Periodic), (3, Boundary::Periodic)] {
            let b = enumerate_gauss_basis(l, bd).unwrap();
            for j in 0..l {
                for (_, _, v) in b.plaquette_matrix::<f64>(j) {
                    assert!(v.abs() > 0.0 && v.abs() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn chain_symmetries() {
        for (l, bd) in [(2, Boundary::Periodic), (3, Boundary::Periodic), (3, Boundary::Open)] {
            let b = enumerate_gauss_basis(l, bd).unwrap();
            let h = build_chain_hamiltonian(&b, 0.9).unwrap();
            let d = h.to_dense();
            assert!((&d - d.transpose()).abs().max() < 1e-12);
            assert!(h.permutation_commutator(&b.cp_permutation()) < 1e-10);
            if let Some(t) = b.translation_permutation() {
                assert!(h.permutation_commutator(&t) < 1e-10);
            }
        }
    }

    #[test]
    fn penalty_is_scaled_projector() {
        let p = gauss_penalty_operator([false, false, true], 2.5).unwrap();
        let pp = &p * &p;
        assert!((pp - &p * 2.5).abs().max() < 1e-12);
        // (3, 3, 1) with all legs outgoing has no singlet.
        let q = gauss_penalty_operator([true, true, true], 1.0).unwrap();
        assert_eq!(q[(9 + 3, 9 + 3)], 1.0);
        assert_eq!(q[(0, 0)], 0.0);
        assert_eq!(q[(9 + 3 + 1, 9 + 3 + 1)], 0.0);
        assert!(gauss_penalty_operator([true; 3], 0.0).is_err());
    }

    #[test]
    fn penalty_vanishes_on_allowed_configurations() {
        let b = enumerate_gauss_basis(3, Boundary::Periodic).unwrap();
        let g = b.geometry();
        for c in b.configs() {
            for legs in g.vertices() {
                let o = legs.map(|l| l.outgoing);
                let p = gauss_penalty_operator(o, 1.0).unwrap();
                let idx = legs.iter().fold(0, |a, l| 3 * a + l.link.map_or(0, |k| c[k] as usize));
                assert_eq!(p[(idx, idx)], 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn open_chain_hermitian_for_any_coupling(g in 0.2f64..3.0, l in 1usize..4) {
            let b = enumerate_gauss_basis(l, Boundary::Open).unwrap();
            prop_assert!(build_chain_hamiltonian(&b, g).is_ok());
        }
    }
}
